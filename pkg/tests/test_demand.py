import random

import numpy as np
import pytest

from fleetsim.demand import (
    DROP_BAD_FIELD,
    DROP_OUT_OF_BOUNDS,
    DROP_PASSENGERS,
    DROP_SAME_ENDPOINTS,
    DemandError,
    FilterPolicy,
    NaiveForecastProvider,
    PerfectForecastProvider,
    RequestHistory,
    TripRequest,
    naive_forecast,
    parse_requests,
    perfect_forecast,
)
from fleetsim.geo import GeoPoint, build_grid

from test_geo import _bbox_for_meters


@pytest.fixture
def grid():
    return build_grid(*_bbox_for_meters(3000.0, 3000.0), cell_size_m=1000.0)


def _write(path, lines):
    header = "request_time,pickup_lat,pickup_lon,dropoff_lat,dropoff_lon,passengers"
    path.write_text("\n".join([header] + lines) + "\n")


def _inside(grid, dx=500.0, dy=500.0):
    return grid.from_xy(dx, dy)


def test_parse_basic_sorting_and_ids(tmp_path, grid):
    a = _inside(grid, 200, 200)
    b = _inside(grid, 1500, 1500)
    path = tmp_path / "req.csv"
    _write(path, [
        f"100,{a.lat},{a.lon},{b.lat},{b.lon},2",
        f"50,{b.lat},{b.lon},{a.lat},{a.lon},1",
        f"100,{b.lat},{b.lon},{a.lat},{a.lon},3",
    ])
    requests, report = parse_requests(path, grid)
    assert [r.id for r in requests] == [0, 1, 2]
    assert [r.request_time for r in requests] == [50.0, 100.0, 100.0]
    # stable: the passengers=2 row came first in the file among the t=100 pair
    assert requests[1].passengers == 2
    assert report.accepted == 3
    assert report.total_dropped == 0


def test_parse_iso_timestamps(tmp_path, grid):
    a = _inside(grid, 200, 200)
    b = _inside(grid, 900, 900)
    path = tmp_path / "req.csv"
    _write(path, [f"1970-01-01T00:02:00,{a.lat},{a.lon},{b.lat},{b.lon},1"])
    requests, _ = parse_requests(path, grid)
    assert requests[0].request_time == 120.0


def test_parse_drop_reasons(tmp_path, grid):
    a = _inside(grid, 200, 200)
    b = _inside(grid, 900, 900)
    far = GeoPoint(a.lat + 1.0, a.lon)  # ~111 km north, outside bbox + margin
    path = tmp_path / "req.csv"
    _write(path, [
        f"10,{a.lat},{a.lon},{b.lat},{b.lon},0",          # zero passengers
        f"11,{a.lat},{a.lon},{a.lat},{a.lon},1",          # identical endpoints
        f"12,{far.lat},{far.lon},{b.lat},{b.lon},1",      # outside sanity bbox
        f"not-a-time,{a.lat},{a.lon},{b.lat},{b.lon},1",  # bad timestamp
        f"13,{a.lat},{a.lon},{b.lat},{b.lon},-2",         # negative passengers
        f"14,{a.lat},{a.lon},{b.lat},{b.lon},1",          # good
    ])
    requests, report = parse_requests(path, grid)
    assert len(requests) == 1
    assert report.dropped[DROP_PASSENGERS] == 2
    assert report.dropped[DROP_SAME_ENDPOINTS] == 1
    assert report.dropped[DROP_OUT_OF_BOUNDS] == 1
    assert report.dropped[DROP_BAD_FIELD] == 1
    assert report.total_rows == 6


def test_parse_margin_keeps_near_boundary_points(tmp_path, grid):
    # 1 km outside the bbox but within the 5 km sanity margin
    near = grid.from_xy(-1000.0, 500.0)
    b = _inside(grid, 900, 900)
    path = tmp_path / "req.csv"
    _write(path, [f"10,{near.lat},{near.lon},{b.lat},{b.lon},1"])
    requests, report = parse_requests(path, grid)
    assert len(requests) == 1 and report.total_dropped == 0


def test_parse_thousand_rows_with_seventeen_violations(tmp_path, grid):
    rng = random.Random(42)
    a = _inside(grid, 300, 300)
    b = _inside(grid, 2500, 2500)
    lines = []
    for i in range(1000):
        lines.append(f"{i},{a.lat},{a.lon},{b.lat},{b.lon},{rng.randint(1, 4)}")
    bad_rows = rng.sample(range(1000), 17)
    for i in bad_rows:
        t = i
        kind = rng.randrange(3)
        if kind == 0:
            lines[i] = f"{t},{a.lat},{a.lon},{b.lat},{b.lon},0"
        elif kind == 1:
            lines[i] = f"{t},{a.lat},{a.lon},{a.lat},{a.lon},1"
        else:
            lines[i] = f"{t},91.0,{a.lon},{b.lat},{b.lon},1"
    path = tmp_path / "req.csv"
    _write(path, lines)
    requests, report = parse_requests(path, grid)
    assert report.accepted == 983
    assert report.total_dropped == 17
    assert len(requests) == 983


def test_parse_bad_header(tmp_path):
    path = tmp_path / "req.csv"
    path.write_text("time,lat,lon\n1,2,3\n")
    with pytest.raises(DemandError, match="header"):
        parse_requests(path)


def test_parse_idempotent(tmp_path, grid):
    rng = random.Random(3)
    lines = []
    for i in range(50):
        o = _inside(grid, rng.uniform(0, 3000), rng.uniform(0, 3000))
        d = _inside(grid, rng.uniform(0, 3000), rng.uniform(0, 3000))
        lines.append(f"{rng.randint(0, 500)},{o.lat},{o.lon},{d.lat},{d.lon},1")
    path = tmp_path / "req.csv"
    _write(path, lines)
    first, _ = parse_requests(path, grid)
    second, _ = parse_requests(path, grid)
    assert first == second


def _req(i, t, point):
    return TripRequest(i, t, point, GeoPoint(point.lat + 0.001, point.lon), 1)


def test_naive_forecast_counts_window(grid):
    history = RequestHistory(1800.0)
    area1 = grid.area_center(1)
    history.record(100.0, 1)
    history.record(200.0, 1)
    history.record(1700.0, 1)
    history.record(300.0, 2)
    fc = naive_forecast(history, grid, 1800.0, 1800.0)
    assert fc.values[1] == 3.0
    assert fc.values[2] == 1.0
    assert fc.values.sum() == 4.0
    assert fc.issued_at == 1800.0
    del area1


def test_naive_forecast_empty_history(grid):
    history = RequestHistory(1800.0)
    fc = naive_forecast(history, grid, 5000.0, 1800.0)
    assert np.all(fc.values == 0.0)


def test_naive_forecast_matches_recount_on_poisson_stream(grid):
    rng = random.Random(11)
    horizon = 600.0
    events = []
    t = 0.0
    while t < 4000.0:
        t += rng.expovariate(0.05)
        events.append((t, rng.randrange(grid.n_areas)))
    provider = NaiveForecastProvider(grid, horizon)
    for t, area in events:
        provider.history.record(t, area)
    now = 3600.0
    fc = provider.forecast(now)
    # independent recount straight off the event list
    want = np.zeros(grid.n_areas)
    for t, area in events:
        if now - horizon <= t < now:
            want[area] += 1.0
    assert np.array_equal(fc.values, want)


def test_naive_forecast_translation_invariance(grid):
    horizon = 900.0
    rng = random.Random(5)
    events = [(rng.uniform(0, 3000), rng.randrange(grid.n_areas)) for _ in range(200)]
    delta = 7777.0

    h1 = RequestHistory(horizon)
    h2 = RequestHistory(horizon)
    for t, area in events:
        h1.record(t, area)
        h2.record(t + delta, area)
    f1 = naive_forecast(h1, grid, 3000.0, horizon)
    f2 = naive_forecast(h2, grid, 3000.0 + delta, horizon)
    assert np.array_equal(f1.values, f2.values)


def test_perfect_forecast_stationary_equals_naive_interior(grid):
    # exactly periodic stream: one request per area 0 every 60 s
    horizon = 600.0
    origin = grid.area_center(0)
    requests = [_req(i, 60.0 * i, origin) for i in range(200)]
    provider = PerfectForecastProvider(requests, grid, horizon)
    history = RequestHistory(horizon)
    for r in requests:
        history.record(r.request_time, grid.locate(r.origin))
    now = 6000.0  # interior: full windows on both sides
    perfect = provider.forecast(now)
    naive = naive_forecast(history, grid, now, horizon)
    assert np.array_equal(perfect.values, naive.values)
    assert perfect.values[0] == 10.0


def test_perfect_forecast_beyond_stream_is_zero(grid):
    origin = grid.area_center(0)
    requests = [_req(i, 100.0 * i, origin) for i in range(10)]
    fc = perfect_forecast(requests, grid, 5000.0, 1800.0)
    assert np.all(fc.values == 0.0)


def test_perfect_forecast_step_change_recount(grid):
    a0 = grid.area_center(0)
    a5 = grid.area_center(5)
    requests = sorted(
        [_req(i, 10.0 * i, a0) for i in range(100)]
        + [_req(100 + i, 1000.0 + 5.0 * i, a5) for i in range(100)],
        key=lambda r: r.request_time)
    requests = [TripRequest(i, r.request_time, r.origin, r.destination, r.passengers)
                for i, r in enumerate(requests)]
    provider = PerfectForecastProvider(requests, grid, 300.0)
    for now in (0.0, 500.0, 990.0, 1200.0):
        fc = provider.forecast(now)
        want = np.zeros(grid.n_areas)
        for r in requests:
            if now <= r.request_time < now + 300.0:
                want[grid.locate(r.origin)] += 1.0
        assert np.array_equal(fc.values, want), now


def test_forecast_sum_conservation(grid):
    rng = random.Random(9)
    requests = []
    for i in range(500):
        pt = grid.from_xy(rng.uniform(0, 3000), rng.uniform(0, 3000))
        requests.append(_req(i, rng.uniform(0, 10000), pt))
    requests.sort(key=lambda r: r.request_time)
    now, horizon = 2000.0, 1800.0
    fc = perfect_forecast(requests, grid, now, horizon)
    in_window = sum(1 for r in requests if now <= r.request_time < now + horizon)
    assert fc.values.sum() == in_window


def test_history_eviction_keeps_full_horizon():
    history = RequestHistory(1800.0)
    for t in range(0, 4000, 100):
        history.record(float(t), 0)
    history.evict(3900.0)
    times = [t for t, _ in history._entries]
    assert min(times) >= 3900.0 - 1800.0
    # everything inside the horizon window is still there: 2100..3900 step 100
    assert len(times) == 19


def test_filter_policy_min_passengers_configurable(tmp_path, grid):
    a = _inside(grid, 200, 200)
    b = _inside(grid, 900, 900)
    path = tmp_path / "req.csv"
    _write(path, [f"10,{a.lat},{a.lon},{b.lat},{b.lon},1"])
    _, report = parse_requests(path, grid, FilterPolicy(min_passengers=2))
    assert report.dropped[DROP_PASSENGERS] == 1
