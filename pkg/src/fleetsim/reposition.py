"""Idle-vehicle repositioning: optimization model, planner, reactive fallback.

The planner runs on a rolling horizon.  At each planning tick it builds an
integer program over area-to-area vehicle flows:

* integer flows ``move[i][j]`` send idle vehicles from area i to area j,
  where j must have at least one recorded past pickup (vehicles park at
  real pickup spots, so only those areas are valid targets);
* fractional coverage ``cover[i][j]`` books forecast demand in j against
  vehicle capacity in i, allowed only when i reaches j within the coverage
  time limit.

The objective rewards coverage (weighted by the forecast of the covered
area), then penalizes the number of moves, then penalizes travel time of
both the moves themselves and the anticipated pickup approaches.  Capacity
in an area comes from idle vehicles that remain there, vehicles flowing in,
vehicles already inbound, and — discounted — vehicles currently touring
there; each such vehicle absorbs a configured number of requests per
horizon.  Flows within one area are pointless under this accounting (a
vehicle covers its own area by standing still), so self-flows are omitted.

The solved flows turn into concrete assignments by sampling past pickup
points in each destination area and greedily sending the nearest idle
vehicle from the source area to each sampled point.

``react_on_rejection`` is the reactive baseline: after a rejected request,
send the single nearest idle vehicle to the rejected pickup location.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .geo import GeoPoint, Grid, TravelTimeMatrix
from .mip import (
    LinearModel,
    SolverConfig,
    STATUS_NODE_LIMIT,
    STATUS_OPTIMAL,
    solve_mip,
)

logger = logging.getLogger(__name__)

DEFAULT_HORIZON_S = 1800.0
DEFAULT_INTERVAL_S = 180.0


class RepositionError(ValueError):
    """Raised for inconsistent planner inputs."""


@dataclass(frozen=True)
class RepositionParams:
    """Planner tuning knobs.

    ``requests_per_horizon`` is how many requests one fresh idle vehicle is
    assumed to absorb over the forecast horizon; ``reach_limit_s`` is the
    travel-time radius within which a parked vehicle is assumed to reach a
    request on time (it equals the customer's maximum waiting time);
    ``touring_discount`` scales down the capacity of busy vehicles;
    ``coverage_time_factor`` scales the anticipated approach-travel-time
    penalty; the two weights order the objective tiers.
    """

    horizon_s: float = DEFAULT_HORIZON_S
    interval_s: float = DEFAULT_INTERVAL_S
    requests_per_horizon: float = 5.0
    reach_limit_s: float = 480.0
    touring_discount: float = 0.7
    coverage_time_factor: float = 1.05
    coverage_weight: float = 1000.0
    movement_weight: float = 10.0

    def validate(self) -> None:
        if self.horizon_s <= 0 or self.interval_s <= 0:
            raise RepositionError("horizon_s and interval_s must be positive")
        if self.requests_per_horizon < 1:
            raise RepositionError("requests_per_horizon must be at least 1")
        if self.reach_limit_s <= 0:
            raise RepositionError("reach_limit_s must be positive")
        if not 0.0 < self.touring_discount <= 1.0:
            raise RepositionError("touring_discount must be in (0, 1]")
        if self.coverage_time_factor < 1.0:
            raise RepositionError("coverage_time_factor must be at least 1")
        if self.movement_weight < 10.0:
            raise RepositionError("movement_weight must be at least 10")
        if self.coverage_weight < 100.0 * self.movement_weight:
            raise RepositionError(
                "coverage_weight must be at least 100x movement_weight")


@dataclass(frozen=True)
class FleetSnapshot:
    """Per-area fleet state at one instant.

    ``idle_by_area`` maps an area to its idle vehicles (id, position);
    ``touring`` counts vehicles currently serving a route, by the area of
    their current position; ``inbound`` counts vehicles already repositioning,
    by the area of their target.
    """

    timestamp: float
    n_areas: int
    idle_by_area: dict
    touring: np.ndarray
    inbound: np.ndarray

    def idle_counts(self) -> np.ndarray:
        counts = np.zeros(self.n_areas, dtype=np.int64)
        for area, vehicles in self.idle_by_area.items():
            counts[area] = len(vehicles)
        return counts


class TargetPool:
    """Distinct past pickup locations per area, in first-seen order."""

    def __init__(self, grid: Grid):
        self._grid = grid
        self._points: dict[int, list[GeoPoint]] = {}
        self._seen: dict[int, set] = {}

    def add(self, point: GeoPoint) -> int:
        """Record a pickup location; returns its area id."""
        area = self._grid.locate(point)
        seen = self._seen.setdefault(area, set())
        key = (point.lat, point.lon)
        if key not in seen:
            seen.add(key)
            self._points.setdefault(area, []).append(point)
        return area

    def areas(self) -> list[int]:
        return sorted(self._points)

    def count(self, area: int) -> int:
        return len(self._points.get(area, ()))

    def total(self) -> int:
        return sum(len(v) for v in self._points.values())

    def sample(self, area: int, k: int, rng) -> list[GeoPoint]:
        """k target points: without replacement while the pool lasts, then
        uniformly with replacement for the remainder."""
        points = self._points.get(area, [])
        if not points:
            raise RepositionError(f"area {area} has no recorded pickup points")
        if k <= len(points):
            return rng.sample(points, k)
        base = list(points)
        rng.shuffle(base)
        return base + rng.choices(points, k=k - len(points))


@dataclass(frozen=True)
class FdrModel:
    """The sealed optimization model plus the variable-to-flow mapping."""

    model: LinearModel
    flow_pairs: np.ndarray   # (n_flows, 2) source/destination area ids
    cover_pairs: np.ndarray  # (n_cover, 2) source/destination area ids
    n_flows: int


@dataclass(frozen=True)
class RepositionAssignment:
    vehicle_id: int
    target: GeoPoint
    target_area: int


@dataclass(frozen=True)
class RepositionPlan:
    assignments: tuple = ()
    flows: dict = field(default_factory=dict)
    solver_status: str = "empty"
    objective: float | None = None
    solve_ms: float = 0.0
    nodes: int = 0

    @property
    def size(self) -> int:
        return len(self.assignments)

    @property
    def total_flow(self) -> int:
        return sum(self.flows.values())


def build_fdr_model(snapshot: FleetSnapshot, forecast_values: np.ndarray,
                    matrix: TravelTimeMatrix, params: RepositionParams,
                    target_areas) -> FdrModel:
    """Assemble the repositioning program for one planning tick.

    Flow variables exist from every area holding an idle vehicle to every
    distinct valid target area; coverage variables exist for every (source,
    demand) pair within the reach limit.  Both are bounded and appear only
    in <= rows with nonnegative right-hand sides, so the model is always
    feasible (all-zero) and bounded.
    """
    n = snapshot.n_areas
    forecast_values = np.asarray(forecast_values, dtype=np.float64)
    if len(forecast_values) != n:
        raise RepositionError(
            f"forecast covers {len(forecast_values)} areas, fleet snapshot has {n}")
    if matrix.n_areas != n:
        raise RepositionError(
            f"travel matrix covers {matrix.n_areas} areas, fleet snapshot has {n}")
    if np.any(forecast_values < 0):
        raise RepositionError("forecast values must be nonnegative")
    params.validate()

    seconds = matrix.entries
    p = float(params.requests_per_horizon)
    idle = snapshot.idle_counts()
    targets = np.asarray(sorted(set(int(a) for a in target_areas)), dtype=np.int64)
    if len(targets) and (targets.min() < 0 or targets.max() >= n):
        raise RepositionError("target area out of range")

    sources = np.flatnonzero(idle > 0)
    if len(sources) and len(targets):
        flow_src = np.repeat(sources, len(targets))
        flow_dst = np.tile(targets, len(sources))
        keep = flow_src != flow_dst
        flow_src = flow_src[keep]
        flow_dst = flow_dst[keep]
    else:
        flow_src = np.empty(0, dtype=np.int64)
        flow_dst = np.empty(0, dtype=np.int64)
    n_flows = len(flow_src)

    demand_areas = np.flatnonzero(forecast_values > 0)
    if len(demand_areas):
        reach = seconds[:, demand_areas] <= params.reach_limit_s
        cover_src, d_idx = np.nonzero(reach)
        cover_dst = demand_areas[d_idx]
        reachable_forecast = reach @ forecast_values[demand_areas]
    else:
        cover_src = np.empty(0, dtype=np.int64)
        cover_dst = np.empty(0, dtype=np.int64)
        reachable_forecast = np.zeros(n)
    n_cover = len(cover_src)

    # Capacity added by one vehicle flowing into an area.  In general that is
    # p, but an area with no idle vehicles of its own (hence no outflow
    # columns) can usefully absorb at most its unmet reachable forecast, so
    # the coefficient is clamped there.  For any integer flow vector the
    # reachable coverage is unchanged (demand rows already cap it), while the
    # continuous relaxation loses some vertices where a fraction of a vehicle
    # covers the last slice of demand — without such tightening the search
    # tree on city-sized instances grows far beyond interactive solve times.
    inplace_cap = p * (idle + snapshot.inbound
                       + params.touring_discount * snapshot.touring)
    inflow_cap = np.full(n, p)
    no_idle = idle == 0
    inflow_cap[no_idle] = np.minimum(
        p, np.maximum(0.0, reachable_forecast[no_idle] - inplace_cap[no_idle]))
    # Same goal, sharper handle: where in-place capacity cannot absorb the
    # area's own forecast, own-area coverage needs arrivals, at most
    # min(p, deficit) useful capacity per arriving vehicle.  At every integer
    # arrival count the bound is implied by the demand and capacity rows, so
    # integer outcomes are again unchanged.
    vub_coef = np.zeros(n)
    needs_inflow = forecast_values - inplace_cap > 1e-9
    vub_coef[needs_inflow] = np.minimum(
        p, (forecast_values - inplace_cap)[needs_inflow])

    model = LinearModel()
    if n_flows:
        flow_t = seconds[flow_src, flow_dst]
        model.add_variables(
            np.zeros(n_flows),
            idle[flow_src].astype(np.float64),
            np.ones(n_flows, dtype=bool),
            -params.movement_weight - flow_t,
        )
    if n_cover:
        cover_t = seconds[cover_src, cover_dst]
        model.add_variables(
            np.zeros(n_cover),
            np.full(n_cover, math.inf),
            np.zeros(n_cover, dtype=bool),
            params.coverage_weight * forecast_values[cover_dst]
            - params.coverage_time_factor * cover_t,
        )

    # row layout: idle-outflow caps, demand caps, capacity rows
    out_row = np.full(n, -1, dtype=np.int64)
    out_row[sources] = np.arange(len(sources))
    dem_row = np.full(n, -1, dtype=np.int64)
    dem_row[demand_areas] = len(sources) + np.arange(len(demand_areas))
    cap_areas = np.unique(cover_src)
    cap_row = np.full(n, -1, dtype=np.int64)
    cap_row[cap_areas] = len(sources) + len(demand_areas) + np.arange(len(cap_areas))
    has_inflow = np.zeros(n, dtype=bool)
    has_inflow[flow_dst] = True
    vub_areas = np.flatnonzero(needs_inflow & has_inflow)
    vub_row = np.full(n, -1, dtype=np.int64)
    vub_row[vub_areas] = (len(sources) + len(demand_areas) + len(cap_areas)
                          + np.arange(len(vub_areas)))
    m_rows = len(sources) + len(demand_areas) + len(cap_areas) + len(vub_areas)

    rows_parts = []
    cols_parts = []
    vals_parts = []
    if n_flows:
        ids = np.arange(n_flows, dtype=np.int64)
        rows_parts.append(out_row[flow_src])
        cols_parts.append(ids)
        vals_parts.append(np.ones(n_flows))
        src_cap = cap_row[flow_src]
        has = src_cap >= 0
        rows_parts.append(src_cap[has])
        cols_parts.append(ids[has])
        vals_parts.append(np.full(int(has.sum()), p))
        dst_cap = cap_row[flow_dst]
        has = dst_cap >= 0
        rows_parts.append(dst_cap[has])
        cols_parts.append(ids[has])
        vals_parts.append(-inflow_cap[flow_dst[has]])
        dst_vub = vub_row[flow_dst]
        has = dst_vub >= 0
        rows_parts.append(dst_vub[has])
        cols_parts.append(ids[has])
        vals_parts.append(-vub_coef[flow_dst[has]])
    if n_cover:
        ids = n_flows + np.arange(n_cover, dtype=np.int64)
        rows_parts.append(dem_row[cover_dst])
        cols_parts.append(ids)
        vals_parts.append(np.ones(n_cover))
        rows_parts.append(cap_row[cover_src])
        cols_parts.append(ids)
        vals_parts.append(np.ones(n_cover))
        own = (cover_src == cover_dst) & (vub_row[cover_src] >= 0)
        rows_parts.append(vub_row[cover_src[own]])
        cols_parts.append(ids[own])
        vals_parts.append(np.ones(int(own.sum())))

    if m_rows:
        rows_a = (np.concatenate(rows_parts) if rows_parts
                  else np.empty(0, dtype=np.int64))
        cols_a = (np.concatenate(cols_parts) if cols_parts
                  else np.empty(0, dtype=np.int64))
        vals_a = np.concatenate(vals_parts) if vals_parts else np.empty(0)
        order = np.argsort(rows_a, kind="stable")
        rows_a = rows_a[order]
        cols_a = cols_a[order]
        vals_a = vals_a[order]
        indptr = np.zeros(m_rows + 1, dtype=np.int64)
        np.add.at(indptr, rows_a + 1, 1)
        np.cumsum(indptr, out=indptr)
        rhs = np.concatenate([
            idle[sources].astype(np.float64),
            forecast_values[demand_areas],
            inplace_cap[cap_areas],
            inplace_cap[vub_areas],
        ])
        model.add_constraints(indptr, cols_a, vals_a,
                              ["<="] * m_rows, rhs)

    model.seal()
    return FdrModel(
        model=model,
        flow_pairs=np.column_stack([flow_src, flow_dst]) if n_flows
        else np.empty((0, 2), dtype=np.int64),
        cover_pairs=np.column_stack([cover_src, cover_dst]) if n_cover
        else np.empty((0, 2), dtype=np.int64),
        n_flows=n_flows,
    )


def plan_fdr(snapshot: FleetSnapshot, forecast_values: np.ndarray,
             matrix: TravelTimeMatrix, params: RepositionParams,
             pool: TargetPool, rng, travel_time,
             solver_config: SolverConfig | None = None) -> RepositionPlan:
    """One planning tick: build, solve, and turn flows into assignments.

    On solver trouble the tick degrades to an empty plan (and says so in the
    returned status) rather than failing the run.
    """
    base_cfg = solver_config or SolverConfig()
    cfg = replace(base_cfg,
                  time_limit_s=min(base_cfg.time_limit_s, params.interval_s / 2.0))
    t0 = time.perf_counter()
    fdr = build_fdr_model(snapshot, forecast_values, matrix, params, pool.areas())
    if fdr.n_flows == 0:
        return RepositionPlan(solver_status="no-flow-columns",
                              solve_ms=(time.perf_counter() - t0) * 1000.0)
    sol = solve_mip(fdr.model, cfg)
    solve_ms = (time.perf_counter() - t0) * 1000.0
    usable = sol.status == STATUS_OPTIMAL or (
        sol.status == STATUS_NODE_LIMIT and sol.values is not None)
    if not usable:
        logger.warning("planning tick skipped: solver returned %s", sol.status)
        return RepositionPlan(solver_status=sol.status, objective=None,
                              solve_ms=solve_ms, nodes=sol.nodes)

    flow_vals = np.rint(sol.values[:fdr.n_flows]).astype(np.int64)
    active = np.flatnonzero(flow_vals > 0)
    flows = {}
    for k in active:
        i, j = int(fdr.flow_pairs[k, 0]), int(fdr.flow_pairs[k, 1])
        flows[(i, j)] = int(flow_vals[k])

    assignments = []
    taken: set[int] = set()
    for (i, j) in sorted(flows, key=lambda ij: (ij[1], ij[0])):
        points = pool.sample(j, flows[(i, j)], rng)
        candidates = snapshot.idle_by_area.get(i, [])
        for point in points:
            best_vid = -1
            best_key = None
            for vid, pos in candidates:
                if vid in taken:
                    continue
                key = (travel_time(pos, point), vid)
                if best_key is None or key < best_key:
                    best_key = key
                    best_vid = vid
            if best_vid < 0:
                # cannot happen while the idle-outflow rows hold; guard anyway
                logger.warning("no idle vehicle left in area %d for a planned move", i)
                continue
            taken.add(best_vid)
            assignments.append(RepositionAssignment(best_vid, point, j))

    return RepositionPlan(
        assignments=tuple(assignments),
        flows=flows,
        solver_status=sol.status,
        objective=sol.objective,
        solve_ms=solve_ms,
        nodes=sol.nodes,
    )


def react_on_rejection(pickup: GeoPoint, idle_vehicles, travel_time):
    """Nearest idle vehicle to a rejected pickup, or None; ties by lowest id.

    ``idle_vehicles`` yields (vehicle_id, position) pairs.
    """
    best = None
    best_key = None
    for vid, pos in idle_vehicles:
        key = (travel_time(pos, pickup), vid)
        if best_key is None or key < best_key:
            best_key = key
            best = vid
    return best
