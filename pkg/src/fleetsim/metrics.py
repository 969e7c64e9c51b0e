"""KPI accumulation with warm-up exclusion, plus JSON/CSV export.

Outcomes are attributed by *request time*: a request counts toward the
statistics when it was issued at or after the warm-up end (closed left
boundary), regardless of when its pickup or dropoff eventually happens.
Travel seconds are pro-rated by the simulation so only post-warm-up driving
reaches the report.

Exports: ``kpi.json`` (every scalar plus the utilization series in one
document), ``kpi.csv`` (scalars, one row), and ``timeseries.csv`` with the
fixed header ``minute,idle,touring,repositioning,requests,rejections``.
Numbers serialize at full precision via ``repr`` so identical runs produce
byte-identical files.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field

TIMESERIES_HEADER = ["minute", "idle", "touring", "repositioning",
                     "requests", "rejections"]

KPI_SCALAR_FIELDS = [
    "total_requests", "accepted", "rejected", "rejection_rate",
    "mean_waiting_s", "median_waiting_s", "total_vehicle_travel_s",
    "mean_vehicle_travel_s", "repositioning_travel_s", "fleet_size",
]


class MetricsError(ValueError):
    """Raised on inconsistent accumulator use or malformed report files."""


@dataclass(frozen=True)
class SeriesRow:
    minute: int
    idle: int
    touring: int
    repositioning: int
    requests: int
    rejections: int


@dataclass(frozen=True)
class KpiReport:
    total_requests: int
    accepted: int
    rejected: int
    rejection_rate: float
    mean_waiting_s: float | None
    median_waiting_s: float | None
    total_vehicle_travel_s: float
    mean_vehicle_travel_s: float
    repositioning_travel_s: float
    fleet_size: int
    series: tuple = ()

    def scalars(self) -> dict:
        return {name: getattr(self, name) for name in KPI_SCALAR_FIELDS}


class Accumulator:
    """Collects outcomes and utilization samples for one run.

    The measured window is ``[warmup_end, end_time)``; its utilization
    series has one row per started minute, sampled at each minute mark.
    """

    def __init__(self, warmup_end: float, end_time: float, fleet_size: int):
        if end_time < warmup_end:
            raise MetricsError("end_time precedes warmup_end")
        if fleet_size <= 0:
            raise MetricsError("fleet_size must be positive")
        self.warmup_end = warmup_end
        self.end_time = end_time
        self.fleet_size = fleet_size
        self.n_minutes = int(math.ceil((end_time - warmup_end) / 60.0))
        self.total_requests = 0
        self.accepted = 0
        self.rejected = 0
        self.waiting: list[float] = []
        self._req_per_minute = [0] * self.n_minutes
        self._rej_per_minute = [0] * self.n_minutes
        self._samples: dict[int, tuple] = {}

    def _counted(self, request_time: float) -> bool:
        return request_time >= self.warmup_end

    def _minute(self, request_time: float) -> int:
        return int((request_time - self.warmup_end) // 60.0)

    def record_request(self, request_time: float) -> None:
        if self._counted(request_time):
            self.total_requests += 1
            self._req_per_minute[self._minute(request_time)] += 1

    def record_acceptance(self, request_time: float) -> None:
        if self._counted(request_time):
            self.accepted += 1

    def record_rejection(self, request_time: float) -> None:
        if self._counted(request_time):
            self.rejected += 1
            self._rej_per_minute[self._minute(request_time)] += 1

    def record_waiting(self, request_time: float, waiting_s: float) -> None:
        if waiting_s < 0:
            raise MetricsError(f"negative waiting time {waiting_s}")
        if self._counted(request_time):
            self.waiting.append(waiting_s)

    def record_sample(self, minute: int, idle: int, touring: int,
                      repositioning: int) -> None:
        if not 0 <= minute < self.n_minutes:
            raise MetricsError(f"sample minute {minute} outside the series")
        if idle + touring + repositioning != self.fleet_size:
            raise MetricsError(
                f"utilization sample at minute {minute} sums to "
                f"{idle + touring + repositioning}, fleet is {self.fleet_size}")
        self._samples[minute] = (idle, touring, repositioning)

    def finalize(self, total_travel_s: float,
                 repositioning_travel_s: float) -> KpiReport:
        if self.accepted + self.rejected != self.total_requests:
            raise MetricsError(
                f"outcome ledger out of balance: {self.accepted} accepted + "
                f"{self.rejected} rejected != {self.total_requests} requests")
        missing = [m for m in range(self.n_minutes) if m not in self._samples]
        if missing:
            raise MetricsError(f"utilization series missing minutes {missing[:5]}")
        series = tuple(
            SeriesRow(m, *self._samples[m], self._req_per_minute[m],
                      self._rej_per_minute[m])
            for m in range(self.n_minutes))
        rate = self.rejected / self.total_requests if self.total_requests else 0.0
        if self.waiting:
            mean_w = sum(self.waiting) / len(self.waiting)
            ordered = sorted(self.waiting)
            k = len(ordered)
            if k % 2:
                median_w = ordered[k // 2]
            else:
                median_w = (ordered[k // 2 - 1] + ordered[k // 2]) / 2.0
        else:
            mean_w = None
            median_w = None
        return KpiReport(
            total_requests=self.total_requests,
            accepted=self.accepted,
            rejected=self.rejected,
            rejection_rate=rate,
            mean_waiting_s=mean_w,
            median_waiting_s=median_w,
            total_vehicle_travel_s=total_travel_s,
            mean_vehicle_travel_s=total_travel_s / self.fleet_size,
            repositioning_travel_s=repositioning_travel_s,
            fleet_size=self.fleet_size,
            series=series,
        )


def _csv_cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_kpi_json(report: KpiReport, path) -> None:
    doc = report.scalars()
    doc["series"] = [[row.minute, row.idle, row.touring, row.repositioning,
                      row.requests, row.rejections] for row in report.series]
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_kpi_json(path) -> KpiReport:
    with open(path) as fh:
        doc = json.load(fh)
    series = tuple(SeriesRow(*row) for row in doc.pop("series", []))
    return KpiReport(series=series, **doc)


def write_kpi_csv(report: KpiReport, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(KPI_SCALAR_FIELDS)
        writer.writerow([_csv_cell(v) for v in report.scalars().values()])


def write_timeseries_csv(report: KpiReport, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(TIMESERIES_HEADER)
        for row in report.series:
            writer.writerow([row.minute, row.idle, row.touring,
                             row.repositioning, row.requests, row.rejections])


def write_audit_jsonl(audit_rows, path) -> None:
    """One JSON object per planning tick, in tick order."""
    with open(path, "w") as fh:
        for row in audit_rows:
            fh.write(json.dumps(row, sort_keys=True))
            fh.write("\n")
