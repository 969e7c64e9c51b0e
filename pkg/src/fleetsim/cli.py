"""Command-line front end: single runs, mode/fleet sweeps, solver validation.

Exit codes: 0 success, 1 runtime error, 2 configuration error, 3 solver
validation mismatch.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import logging
import math
import os
import random
import sys
import time
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from .config import (
    MODE_FDR,
    MODE_NONE,
    MODE_REACT,
    ConfigError,
    ScenarioConfig,
    load_config,
    validate_config,
    write_config,
)
from .demand import (
    DemandError,
    FilterPolicy,
    NaiveForecastProvider,
    PerfectForecastProvider,
    parse_requests,
)
from .geo import (
    ConstantSpeedProvider,
    GeoError,
    GeoPoint,
    MatrixProvider,
    TravelTimeMatrix,
    build_area_matrix,
    build_grid,
    load_matrix_csv,
)
from .metrics import _csv_cell, read_kpi_json, write_audit_jsonl, write_kpi_csv, write_kpi_json, write_timeseries_csv
from .mip import SolverConfig, brute_force_solve, dump_model, solve_mip
from .reposition import FleetSnapshot, RepositionParams, build_fdr_model
from .sim import Simulation, SimulationError, SimulationSettings

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_CONFIG = 2
EXIT_MISMATCH = 3

SUMMARY_HEADER = ["mode", "forecast", "vehicle_factor", "rejection_rate",
                  "mean_waiting_s", "mean_vehicle_travel_s", "status"]

MODE_TOKENS = ("none", "react", "fdr", "fdr-perfect", "fdr-naive")

logger = logging.getLogger(__name__)


def derive_bbox(requests, cell_size_m: float) -> tuple[float, float, float, float]:
    """Bounding box of all request endpoints, padded by half a cell.

    The padding keeps extreme coordinates strictly inside the grid and
    guarantees a positive extent even for a single-point dataset.
    """
    if not requests:
        raise ConfigError("cannot derive a bounding box from an empty request stream")
    lats = [p.lat for r in requests for p in (r.origin, r.destination)]
    lons = [p.lon for r in requests for p in (r.origin, r.destination)]
    mid_lat = 0.5 * (min(lats) + max(lats))
    m_per_deg_lat = 111_194.9266
    m_per_deg_lon = m_per_deg_lat * math.cos(math.radians(mid_lat))
    if m_per_deg_lon <= 0:
        raise ConfigError("request coordinates too close to a pole to derive a grid")
    pad_lat = 0.5 * cell_size_m / m_per_deg_lat
    pad_lon = 0.5 * cell_size_m / m_per_deg_lon
    return (min(lats) - pad_lat, min(lons) - pad_lon,
            max(lats) + pad_lat, max(lons) + pad_lon)


def load_world(cfg: ScenarioConfig):
    """Parse the dataset and build the grid, deriving the bbox when absent.

    Returns (resolved config, grid, requests, parse report).
    """
    policy = FilterPolicy(sanity_margin_m=cfg.sanity_margin_m)
    try:
        if cfg.bbox is None:
            requests, report = parse_requests(cfg.dataset, grid=None, policy=policy)
            bbox = derive_bbox(requests, cfg.cell_size_m)
            cfg = dataclasses.replace(cfg, bbox=bbox)
            grid = build_grid(*bbox, cell_size_m=cfg.cell_size_m)
        else:
            grid = build_grid(*cfg.bbox, cell_size_m=cfg.cell_size_m)
            requests, report = parse_requests(cfg.dataset, grid=grid, policy=policy)
    except GeoError as exc:
        raise ConfigError(str(exc)) from None
    return cfg, grid, requests, report


def _travel_provider(cfg: ScenarioConfig, grid):
    if cfg.matrix_path is not None:
        matrix = load_matrix_csv(cfg.matrix_path, grid.n_areas)
        return MatrixProvider(grid, matrix), matrix
    provider = ConstantSpeedProvider(cfg.speed_mps)
    matrix = build_area_matrix(grid, provider) if cfg.mode == MODE_FDR else None
    return provider, matrix


def _forecast_provider(cfg: ScenarioConfig, grid, requests):
    if cfg.mode != MODE_FDR:
        return None
    if cfg.forecast == "perfect":
        return PerfectForecastProvider(requests, grid, cfg.horizon_s)
    return NaiveForecastProvider(grid, cfg.horizon_s)


def run_scenario(cfg: ScenarioConfig, force: bool = False):
    """Execute one scenario and write its outputs; returns the KPI report."""
    out = cfg.out_dir
    if os.path.isdir(out) and os.listdir(out) and not force:
        raise ConfigError(f"output directory {out} is not empty (pass --force to reuse)")
    os.makedirs(out, exist_ok=True)

    started = time.perf_counter()
    cfg, grid, requests, report = load_world(cfg)
    logger.info("parsed %d requests (%d rows dropped) into a %d-area grid",
                report.accepted, report.total_dropped, grid.n_areas)
    travel, matrix = _travel_provider(cfg, grid)
    provider = _forecast_provider(cfg, grid, requests)
    settings = SimulationSettings(mode=cfg.mode, start_time=cfg.start_time,
                                  end_time=cfg.end_time, warmup_s=cfg.warmup_s,
                                  seed=cfg.seed,
                                  position_update_s=cfg.position_update_s)
    sim = Simulation(grid, travel, requests, cfg.fleet_size,
                     cfg.dispatch_params(), cfg.reposition_params(), settings,
                     matrix=matrix, forecast_provider=provider,
                     solver_config=cfg.solver_config())
    result = sim.run()

    write_kpi_json(result.report, os.path.join(out, "kpi.json"))
    write_kpi_csv(result.report, os.path.join(out, "kpi.csv"))
    write_timeseries_csv(result.report, os.path.join(out, "timeseries.csv"))
    if cfg.mode == MODE_FDR:
        write_audit_jsonl(result.audit, os.path.join(out, "audit.jsonl"))
    write_config(cfg, os.path.join(out, "resolved.cfg"))
    elapsed = time.perf_counter() - started
    logger.info("scenario done in %.1f s: %d requests, rejection rate %.4f",
                elapsed, result.report.total_requests,
                result.report.rejection_rate)
    return result.report


def _parse_mode_token(token: str, cfg: ScenarioConfig) -> tuple[str, str | None]:
    if token not in MODE_TOKENS:
        raise ConfigError(f"unknown mode {token!r}; expected one of {', '.join(MODE_TOKENS)}")
    if token == "fdr":
        if cfg.forecast is None:
            raise ConfigError("mode token 'fdr' needs 'forecast' set in the base config; "
                              "or use fdr-perfect / fdr-naive")
        return MODE_FDR, cfg.forecast
    if token.startswith("fdr-"):
        return MODE_FDR, token.split("-", 1)[1]
    return token, None


def _matrix_worker(job):
    cfg, force = job
    try:
        run_scenario(cfg, force=force)
        return None
    except Exception as exc:  # recorded per run; the sweep continues
        return f"{type(exc).__name__}: {exc}"


def run_matrix(cfg: ScenarioConfig, mode_tokens, factors, jobs: int = 1,
               force: bool = False):
    """Run the (mode, factor) cross product; returns the summary rows."""
    jobs = max(1, jobs)
    runs = []
    for token in mode_tokens:
        mode, forecast = _parse_mode_token(token, cfg)
        for factor in factors:
            name = f"{token}_f{factor:g}"
            sub = dataclasses.replace(cfg, mode=mode, forecast=forecast,
                                      vehicle_factor=factor,
                                      out_dir=os.path.join(cfg.out_dir, name))
            validate_config(sub)
            runs.append((token, mode, forecast, factor, sub))

    os.makedirs(cfg.out_dir, exist_ok=True)
    jobs_args = [(sub, force) for _, _, _, _, sub in runs]
    if jobs == 1:
        errors = [_matrix_worker(job) for job in jobs_args]
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            errors = list(pool.map(_matrix_worker, jobs_args))

    # the summary is re-read from each run's kpi.json so it can never drift
    # from the per-run outputs
    rows = []
    for (token, mode, forecast, factor, sub), error in zip(runs, errors):
        if error is None:
            report = read_kpi_json(os.path.join(sub.out_dir, "kpi.json"))
            rows.append({"mode": mode, "forecast": forecast or "",
                         "vehicle_factor": factor,
                         "rejection_rate": report.rejection_rate,
                         "mean_waiting_s": report.mean_waiting_s,
                         "mean_vehicle_travel_s": report.mean_vehicle_travel_s,
                         "status": "ok"})
            logger.info("matrix run %s: rejection rate %.4f", token,
                        report.rejection_rate)
        else:
            rows.append({"mode": mode, "forecast": forecast or "",
                         "vehicle_factor": factor, "rejection_rate": None,
                         "mean_waiting_s": None, "mean_vehicle_travel_s": None,
                         "status": f"error: {error}"})
            logger.error("matrix run %s_f%g failed: %s", token, factor, error)

    path = os.path.join(cfg.out_dir, "summary.csv")
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(SUMMARY_HEADER)
        for row in rows:
            writer.writerow([_csv_cell(row[k]) for k in SUMMARY_HEADER])
    logger.info("summary written to %s", path)
    return rows


# -- solver validation harness --

_IDLE_CHOICES = (0, 0, 0, 1, 1, 1, 2, 2, 3)
_BUSY_CHOICES = (0, 0, 1, 2)
_ENUM_CAP = 1024


def random_validation_instance(rng: random.Random):
    """A small random repositioning model whose optimum is enumerable.

    Shapes stay tiny (at most 4 areas, 3 idle vehicles per area, integer
    forecasts up to 3, randomized reach limit) and idle counts are redrawn
    until the integer search grid holds at most ``_ENUM_CAP`` points.
    """
    n = rng.randint(2, 4)
    times = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            times[i, j] = times[j, i] = rng.uniform(60.0, 900.0)
    matrix = TravelTimeMatrix(times)
    forecast = np.array([rng.randint(0, 3) for _ in range(n)], dtype=float)
    touring = np.array([rng.choice(_BUSY_CHOICES) for _ in range(n)], dtype=float)
    inbound = np.array([rng.choice(_BUSY_CHOICES) for _ in range(n)], dtype=float)
    params = RepositionParams(reach_limit_s=rng.uniform(90.0, 900.0),
                              requests_per_horizon=rng.choice([1.0, 2.0, 3.0, 5.0]))
    anchor = GeoPoint(48.0, 11.0)
    while True:
        idle = {i: [(100 * i + k, anchor) for k in range(rng.choice(_IDLE_CHOICES))]
                for i in range(n)}
        snapshot = FleetSnapshot(timestamp=0.0, n_areas=n, idle_by_area=idle,
                                 touring=touring, inbound=inbound)
        built = build_fdr_model(snapshot, forecast, matrix, params,
                                target_areas=range(n))
        sealed_ub = built.model.ub
        int_mask = built.model.integer_mask
        points = math.prod(int(u) + 1 for u in sealed_ub[int_mask])
        if points <= _ENUM_CAP:
            return built


def validate_solver(count: int, seed: int, dump_dir: str = ".") -> tuple[int, float]:
    """Compare solve_mip against exhaustive enumeration on random instances.

    Returns (number of mismatches, worst objective deviation); on the first
    mismatch the offending model is dumped to ``dump_dir`` and checking stops.
    """
    rng = random.Random(seed)
    cfg = SolverConfig()
    worst = 0.0
    for k in range(count):
        built = random_validation_instance(rng)
        sol = solve_mip(built.model, cfg)
        ref = brute_force_solve(built.model, max_enum=_ENUM_CAP + 1, config=cfg)
        deviation = math.inf
        if sol.status == ref.status == "optimal":
            deviation = abs(sol.objective - ref.objective)
            worst = max(worst, deviation)
        if sol.status != ref.status or deviation > 1e-6:
            path = os.path.join(dump_dir, f"solver_mismatch_{k}.txt")
            with open(path, "w") as fh:
                fh.write(dump_model(built.model))
            logger.error("instance %d: solver %s/%s vs enumeration %s/%s; "
                         "model dumped to %s", k, sol.status, sol.objective,
                         ref.status, ref.objective, path)
            return 1, deviation
    return 0, worst


def ingest_check(cfg: ScenarioConfig):
    """Parse and filter the dataset, reporting counts without running."""
    cfg, grid, requests, report = load_world(cfg)
    lines = [f"rows: {report.total_rows}", f"accepted: {report.accepted}",
             f"dropped: {report.total_dropped}"]
    for reason in sorted(report.dropped):
        lines.append(f"  {reason}: {report.dropped[reason]}")
    if requests:
        lines.append(f"time span: {requests[0].request_time:.0f} .. "
                     f"{requests[-1].request_time:.0f} s")
    lines.append(f"grid: {grid.n_rows} x {grid.n_cols} = {grid.n_areas} areas")
    text = "\n".join(lines)
    print(text)
    return report


def _cmd_run(args) -> int:
    cfg = load_config(args.config)
    if args.out:
        cfg = dataclasses.replace(cfg, out_dir=os.path.abspath(args.out))
    run_scenario(cfg, force=args.force)
    return EXIT_OK


def _cmd_matrix(args) -> int:
    cfg = load_config(args.config)
    if args.out:
        cfg = dataclasses.replace(cfg, out_dir=os.path.abspath(args.out))
    tokens = [t.strip() for t in args.modes.split(",") if t.strip()]
    try:
        factors = [float(t) for t in args.factors.split(",") if t.strip()]
    except ValueError:
        raise ConfigError(f"bad --factors value {args.factors!r}") from None
    if not tokens or not factors:
        raise ConfigError("matrix needs at least one mode and one factor")
    rows = run_matrix(cfg, tokens, factors, jobs=args.jobs, force=args.force)
    failed = [r for r in rows if r["status"] != "ok"]
    return EXIT_RUNTIME if failed else EXIT_OK


def _cmd_validate_solver(args) -> int:
    if args.count < 0:
        raise ConfigError("--count must not be negative")
    started = time.perf_counter()
    mismatches, worst = validate_solver(args.count, args.seed,
                                        dump_dir=args.dump_dir)
    elapsed = time.perf_counter() - started
    if mismatches:
        print(f"FAIL: objective mismatch after checking against enumeration")
        return EXIT_MISMATCH
    print(f"OK: {args.count} instances matched enumeration "
          f"(worst deviation {worst:.3g}, {elapsed:.1f} s)")
    return EXIT_OK


def _cmd_ingest_check(args) -> int:
    cfg = load_config(args.config)
    ingest_check(cfg)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fleetsim",
        description="Ride-sharing fleet simulator with idle-vehicle repositioning")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run a single scenario")
    p.add_argument("--config", required=True, help="scenario config file")
    p.add_argument("--force", action="store_true",
                   help="write into a non-empty output directory")
    p.add_argument("--out", help="override the configured output directory")
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("matrix", help="run a mode x fleet-factor sweep")
    p.add_argument("--config", required=True, help="base scenario config file")
    p.add_argument("--modes", required=True,
                   help="comma list of none, react, fdr, fdr-perfect, fdr-naive")
    p.add_argument("--factors", required=True,
                   help="comma list of fleet scaling factors, e.g. 0.8,1.0,1.2")
    p.add_argument("--jobs", type=int, default=1, help="parallel scenario runs")
    p.add_argument("--force", action="store_true",
                   help="write into non-empty output directories")
    p.add_argument("--out", help="override the configured output directory")
    p.set_defaults(func=_cmd_matrix)

    p = sub.add_parser("validate-solver",
                       help="check the optimizer against exhaustive enumeration")
    p.add_argument("--count", type=int, default=200, help="number of instances")
    p.add_argument("--seed", type=int, default=1, help="instance generator seed")
    p.add_argument("--dump-dir", default=".",
                   help="where to write a mismatching instance")
    p.set_defaults(func=_cmd_validate_solver)

    p = sub.add_parser("ingest-check",
                       help="parse and filter the dataset, print a report")
    p.add_argument("--config", required=True, help="scenario config file")
    p.set_defaults(func=_cmd_ingest_check)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, DemandError, GeoError, SimulationError) as exc:
        logger.error("%s", exc)
        return EXIT_CONFIG
    except Exception:
        logger.exception("command failed")
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
