"""Two-cluster demand world shared by the end-to-end acceptance checks.

A 10 km x 10 km city holds two round demand clusters in opposite corners.
Demand alternates between them in two-hour blocks (Poisson arrivals, fixed
stream seed): while one cluster runs hot the other idles at a quarter of the
rate, so a fleet that never repositions strands capacity in the cooling
cluster after every swap.  A stationary variant keeps both clusters at the
average rate, which makes trailing-window and clairvoyant forecasts agree.
"""

import math
import random

from fleetsim.demand import NaiveForecastProvider, PerfectForecastProvider, TripRequest
from fleetsim.dispatch import DispatchParams
from fleetsim.geo import ConstantSpeedProvider, build_area_matrix, build_grid
from fleetsim.mip import SolverConfig
from fleetsim.reposition import RepositionParams
from fleetsim.sim import MODE_FDR, Simulation, SimulationSettings
from test_geo import _bbox_for_meters

WORLD_M = 10_000.0
CELL_M = 2000.0
SPEED_MPS = 10.0

BLOCK_S = 7200.0           # demand swaps clusters every two hours
WARMUP_S = 7200.0          # first block is excluded from statistics
END_S = 36_000.0           # one warm-up block + four measured blocks
STATIONARY_END_S = 64_800.0  # longer run so forecast-quality gaps settle

CLUSTER_XY = ((2500.0, 2500.0), (7500.0, 7500.0))
CLUSTER_RADIUS_M = 1500.0
RATE_HI = 1.0 / 28.0       # requests per second in the hot cluster
RATE_LO = RATE_HI / 4.0
CROSS_FRACTION = 0.15      # trips ending in the opposite cluster
MIN_TRIP_M = 300.0

FLEET_SIZE = 14
MAX_WAIT_S = 480.0


def build_world():
    grid = build_grid(*_bbox_for_meters(WORLD_M, WORLD_M), cell_size_m=CELL_M)
    travel = ConstantSpeedProvider(SPEED_MPS)
    matrix = build_area_matrix(grid, travel)
    return grid, travel, matrix


def _point_near(rng: random.Random, grid, center_xy):
    cx, cy = center_xy
    radius = CLUSTER_RADIUS_M * math.sqrt(rng.random())
    angle = rng.uniform(0.0, 2.0 * math.pi)
    x = min(max(cx + radius * math.cos(angle), 0.0), WORLD_M - 1.0)
    y = min(max(cy + radius * math.sin(angle), 0.0), WORLD_M - 1.0)
    return grid.from_xy(x, y)


def cluster_requests(seed: int, stationary: bool = False,
                     end_s: float = END_S) -> list[TripRequest]:
    """Poisson request streams for both clusters, merged and time-sorted."""
    grid, _, _ = build_world()
    rng = random.Random(seed)
    raw = []
    for home in (0, 1):
        t = 0.0
        while True:
            if stationary:
                rate = 0.5 * (RATE_HI + RATE_LO)
            else:
                block = int(t // BLOCK_S)
                rate = RATE_HI if block % 2 == home else RATE_LO
            t += rng.expovariate(rate)
            if t >= end_s:
                break
            dest_home = home
            if rng.random() < CROSS_FRACTION:
                dest_home = 1 - home
            origin = _point_near(rng, grid, CLUSTER_XY[home])
            while True:
                destination = _point_near(rng, grid, CLUSTER_XY[dest_home])
                ox, oy = grid.to_xy(origin)
                dx, dy = grid.to_xy(destination)
                if math.hypot(ox - dx, oy - dy) >= MIN_TRIP_M:
                    break
            raw.append((t, origin, destination))
    raw.sort(key=lambda r: r[0])
    return [TripRequest(i, t, o, d, 1) for i, (t, o, d) in enumerate(raw)]


def run_mode(requests, mode: str, forecast: str | None = None, seed: int = 1,
             fleet_size: int = FLEET_SIZE, end_s: float = END_S):
    """Simulate one repositioning mode over a prepared request stream."""
    grid, travel, matrix = build_world()
    provider = None
    if mode == MODE_FDR:
        if forecast == "perfect":
            provider = PerfectForecastProvider(requests, grid, 1800.0)
        else:
            provider = NaiveForecastProvider(grid, 1800.0)
    settings = SimulationSettings(mode=mode, start_time=0.0, end_time=end_s,
                                  warmup_s=WARMUP_S, seed=seed)
    sim = Simulation(grid, travel, requests, fleet_size,
                     DispatchParams(max_wait_s=MAX_WAIT_S),
                     RepositionParams(reach_limit_s=MAX_WAIT_S),
                     settings,
                     matrix=matrix if mode == MODE_FDR else None,
                     forecast_provider=provider,
                     solver_config=SolverConfig(time_limit_s=2.0, gap_rel=0.005))
    return sim.run()
