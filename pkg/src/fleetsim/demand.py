"""Trip request ingestion and per-area demand forecasting.

Requests come from CSV files with the header
``request_time,pickup_lat,pickup_lon,dropoff_lat,dropoff_lon,passengers``.
Timestamps are either ``YYYY-MM-DDTHH:MM:SS`` (UTC) or integer epoch seconds.
Rows failing sanity filters are dropped and tallied, never fixed up.

Two forecast flavours share one output type: the naive forecast replays the
trailing observation window, the perfect forecast counts the actual upcoming
requests.  Both count requests, not passengers.
"""

from __future__ import annotations

import bisect
import csv
from collections import deque
from dataclasses import dataclass, field
from datetime import datetime, timezone

import numpy as np

from .geo import GeoError, GeoPoint, Grid

REQUEST_HEADER = ["request_time", "pickup_lat", "pickup_lon", "dropoff_lat", "dropoff_lon", "passengers"]

DROP_BAD_FIELD = "unparseable_field"
DROP_PASSENGERS = "non_positive_passengers"
DROP_SAME_ENDPOINTS = "identical_endpoints"
DROP_OUT_OF_BOUNDS = "outside_sanity_bbox"


class DemandError(ValueError):
    """Raised for unusable request files (bad header, unreadable source)."""


@dataclass(frozen=True, slots=True)
class TripRequest:
    id: int
    request_time: float  # epoch seconds
    origin: GeoPoint
    destination: GeoPoint
    passengers: int


@dataclass
class FilterPolicy:
    """Row-level sanity filters applied during parsing.

    ``sanity_margin_m`` widens the grid bbox before the out-of-bounds check,
    so kerb-side GPS jitter near the boundary survives.
    """

    sanity_margin_m: float = 5000.0
    min_passengers: int = 1
    reject_identical_endpoints: bool = True


@dataclass
class ParseReport:
    total_rows: int = 0
    accepted: int = 0
    dropped: dict[str, int] = field(default_factory=dict)

    def drop(self, reason: str) -> None:
        self.dropped[reason] = self.dropped.get(reason, 0) + 1

    @property
    def total_dropped(self) -> int:
        return sum(self.dropped.values())


def _parse_time(raw: str) -> float:
    raw = raw.strip()
    try:
        return float(int(raw))
    except ValueError:
        pass
    try:
        dt = datetime.strptime(raw, "%Y-%m-%dT%H:%M:%S")
    except ValueError as exc:
        raise ValueError(f"bad timestamp {raw!r}") from exc
    return dt.replace(tzinfo=timezone.utc).timestamp()


def parse_requests(path, grid: Grid | None = None,
                   policy: FilterPolicy | None = None) -> tuple[list[TripRequest], ParseReport]:
    """Read, filter and time-sort a request file.

    Returns the surviving requests sorted by request time (stable, so equal
    timestamps keep file order) with ids assigned 0..n-1 after sorting, plus
    a report of per-reason drop counts.
    """
    policy = policy or FilterPolicy()
    bounds = None
    if grid is not None:
        margin_lat = policy.sanity_margin_m / grid.m_per_deg_lat
        margin_lon = policy.sanity_margin_m / grid.m_per_deg_lon
        bounds = (grid.min_lat - margin_lat, grid.min_lon - margin_lon,
                  grid.max_lat + margin_lat, grid.max_lon + margin_lon)

    rows = []
    report = ParseReport()
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != REQUEST_HEADER:
            raise DemandError(f"request file must start with header {','.join(REQUEST_HEADER)}")
        for raw in reader:
            if not raw or all(not f.strip() for f in raw):
                continue
            report.total_rows += 1
            if len(raw) != 6:
                report.drop(DROP_BAD_FIELD)
                continue
            try:
                t = _parse_time(raw[0])
                origin = GeoPoint(float(raw[1]), float(raw[2]))
                destination = GeoPoint(float(raw[3]), float(raw[4]))
                passengers = int(raw[5])
            except (ValueError, GeoError):
                report.drop(DROP_BAD_FIELD)
                continue
            if passengers < policy.min_passengers:
                report.drop(DROP_PASSENGERS)
                continue
            if policy.reject_identical_endpoints and origin == destination:
                report.drop(DROP_SAME_ENDPOINTS)
                continue
            if bounds is not None and not (
                    bounds[0] <= origin.lat <= bounds[2] and bounds[1] <= origin.lon <= bounds[3]
                    and bounds[0] <= destination.lat <= bounds[2] and bounds[1] <= destination.lon <= bounds[3]):
                report.drop(DROP_OUT_OF_BOUNDS)
                continue
            rows.append((t, origin, destination, passengers))

    rows.sort(key=lambda r: r[0])
    requests = [TripRequest(i, t, o, d, p) for i, (t, o, d, p) in enumerate(rows)]
    report.accepted = len(requests)
    return requests, report


def write_requests_csv(path, rows) -> None:
    """Write (time, origin, destination, passengers) tuples in the ingest format."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(REQUEST_HEADER)
        for t, origin, destination, passengers in rows:
            writer.writerow([int(round(t)), repr(origin.lat), repr(origin.lon),
                             repr(destination.lat), repr(destination.lon), passengers])


@dataclass(frozen=True)
class DemandForecast:
    """Expected request counts per area over ``(issued_at, issued_at + horizon_s]``."""

    values: np.ndarray  # float, one entry per area
    horizon_s: float
    issued_at: float

    def __post_init__(self):
        if np.any(self.values < 0):
            raise ValueError("forecast values must be non-negative")
        self.values.setflags(write=False)


class RequestHistory:
    """Ring buffer of (time, origin area) observations for the naive forecast."""

    def __init__(self, retention_s: float):
        if retention_s <= 0:
            raise ValueError("retention must be positive")
        self.retention_s = retention_s
        self._entries: deque[tuple[float, int]] = deque()

    def __len__(self) -> int:
        return len(self._entries)

    def record(self, t: float, area: int) -> None:
        self._entries.append((t, area))

    def evict(self, now: float) -> None:
        cutoff = now - self.retention_s
        while self._entries and self._entries[0][0] < cutoff:
            self._entries.popleft()

    def counts(self, n_areas: int, lo: float, hi: float) -> np.ndarray:
        values = np.zeros(n_areas)
        for t, area in self._entries:
            if lo <= t < hi:
                values[area] += 1.0
        return values


def naive_forecast(history: RequestHistory, grid: Grid, now: float, horizon_s: float) -> DemandForecast:
    """Project the trailing window forward: counts over [now - horizon, now)."""
    return DemandForecast(history.counts(grid.n_areas, now - horizon_s, now), horizon_s, now)


def perfect_forecast(requests, grid: Grid, now: float, horizon_s: float) -> DemandForecast:
    """Counts of the actual requests with request_time in [now, now + horizon)."""
    values = np.zeros(grid.n_areas)
    for req in requests:
        if now <= req.request_time < now + horizon_s:
            values[grid.locate(req.origin)] += 1.0
    return DemandForecast(values, horizon_s, now)


class NaiveForecastProvider:
    """Streaming wrapper: feed observed requests, query trailing-window forecasts."""

    def __init__(self, grid: Grid, horizon_s: float):
        self.grid = grid
        self.horizon_s = horizon_s
        self.history = RequestHistory(horizon_s)

    def observe(self, req: TripRequest) -> None:
        self.history.record(req.request_time, self.grid.locate(req.origin))

    def forecast(self, now: float) -> DemandForecast:
        self.history.evict(now)
        return naive_forecast(self.history, self.grid, now, self.horizon_s)


class PerfectForecastProvider:
    """Forecast backed by the full replay stream, indexed once for bisection."""

    def __init__(self, requests, grid: Grid, horizon_s: float):
        self.grid = grid
        self.horizon_s = horizon_s
        self._times = [r.request_time for r in requests]
        self._areas = np.array([grid.locate(r.origin) for r in requests], dtype=np.int64)

    def observe(self, req: TripRequest) -> None:
        pass

    def forecast(self, now: float) -> DemandForecast:
        lo = bisect.bisect_left(self._times, now)
        hi = bisect.bisect_left(self._times, now + self.horizon_s)
        values = np.bincount(self._areas[lo:hi], minlength=self.grid.n_areas).astype(float)
        return DemandForecast(values, self.horizon_s, now)
