"""Discrete-event fleet simulation: replay requests, drive vehicles, plan moves.

The engine owns the authoritative state: one record per vehicle (exact
position, phase, remaining stops, repositioning target) and one outcome per
request.  Everything advances through a single time-ordered event queue;
ties at equal timestamps resolve by a fixed kind priority, then insertion
order, so runs with the same inputs and seed replay identically.

Vehicles drive point-to-point at provider speed and interpolate linearly in
projected coordinates mid-leg.  The planning side (fleet snapshots and the
reactive baseline) sees only the last *reported* positions, refreshed on a
periodic update sweep and at stop/phase transitions, mirroring a backend fed
by telemetry rather than omniscient state.

Three repositioning modes: ``none`` (dispatch only), ``react`` (after a
rejection, send the nearest idle vehicle to the rejected pickup), ``fdr``
(periodic planning ticks solve the flow program and dispatch idle vehicles
toward forecast demand).
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from heapq import heappop, heappush

import numpy as np

from .demand import TripRequest
from .dispatch import (
    DROPOFF,
    PICKUP,
    DispatchParams,
    VehicleView,
    best_insertion,
    make_request_stops,
)
from .geo import GeoPoint, Grid, TravelTimeMatrix
from .metrics import Accumulator, KpiReport
from .mip import SolverConfig
from .reposition import (
    FleetSnapshot,
    RepositionParams,
    TargetPool,
    plan_fdr,
    react_on_rejection,
)

logger = logging.getLogger(__name__)

MODE_NONE = "none"
MODE_REACT = "react"
MODE_FDR = "fdr"
MODES = (MODE_NONE, MODE_REACT, MODE_FDR)

PHASE_IDLE = "idle"
PHASE_TOURING = "touring"
PHASE_REPOSITIONING = "repositioning"

# event kind priorities: ties at one timestamp process in this order
EV_STOP_ARRIVAL = 0
EV_STOP_DEPARTURE = 1
EV_REPOSITION_ARRIVAL = 2
EV_POSITION_UPDATE = 3
EV_REQUEST_ARRIVAL = 4
EV_REPOSITION_TICK = 5
EV_SERIES_SAMPLE = 6

_PHASE_TRANSITIONS = {
    (PHASE_IDLE, PHASE_TOURING),
    (PHASE_IDLE, PHASE_REPOSITIONING),
    (PHASE_REPOSITIONING, PHASE_IDLE),
    (PHASE_REPOSITIONING, PHASE_TOURING),
    (PHASE_TOURING, PHASE_TOURING),
    (PHASE_TOURING, PHASE_IDLE),
}


class SimulationError(ValueError):
    """Raised for inconsistent simulation setup."""


@dataclass
class Vehicle:
    """Authoritative state of one vehicle.

    While moving, ``leg_origin``/``leg_depart``/``leg_arrival`` describe the
    current straight leg and ``position`` holds the leg origin; the exact
    position at any instant comes from linear interpolation.  ``event_seq``
    invalidates queued movement events after a replan: handlers drop events
    stamped with an older sequence number.
    """

    id: int
    position: GeoPoint
    phase: str = PHASE_IDLE
    stops: list = field(default_factory=list)
    load: int = 0
    reposition_target: GeoPoint | None = None
    reported_position: GeoPoint | None = None
    busy_until: float = -math.inf  # dwell end while stopped at a route stop
    leg_origin: GeoPoint | None = None
    leg_target_point: GeoPoint | None = None
    leg_depart: float = 0.0
    leg_arrival: float = 0.0
    event_seq: int = 0
    travel_s: float = 0.0          # post-warm-up driving, all phases
    reposition_s: float = 0.0      # post-warm-up share spent repositioning

    def moving(self) -> bool:
        return self.leg_origin is not None


@dataclass(frozen=True)
class SimulationSettings:
    mode: str = MODE_NONE
    start_time: float = 0.0
    end_time: float = 86400.0
    warmup_s: float = 21600.0
    seed: int = 1
    position_update_s: float = 30.0


@dataclass
class RequestOutcome:
    request: TripRequest
    accepted: bool
    vehicle_id: int | None = None
    pickup_time: float | None = None
    dropoff_time: float | None = None

    @property
    def waiting_s(self) -> float | None:
        if self.pickup_time is None:
            return None
        return self.pickup_time - self.request.request_time


@dataclass
class SimulationResult:
    report: KpiReport
    outcomes: list
    audit: list
    fleet_size: int
    warmup_end: float


def place_fleet(requests, grid: Grid, fleet_size: int, start_time: float, rng):
    """Initial positions: uniform draws over early request origins.

    Preference order: origins from the first hour of the replay window, then
    any origin in the stream, then area centers as a last resort for an
    empty stream.
    """
    early = [r.origin for r in requests
             if start_time <= r.request_time < start_time + 3600.0]
    pool = early or [r.origin for r in requests]
    if pool:
        return [pool[rng.randrange(len(pool))] for _ in range(fleet_size)]
    return [grid.area_center(i % grid.n_areas) for i in range(fleet_size)]


class Simulation:
    """One scenario run.  Build it, call ``run()`` once."""

    def __init__(self, grid: Grid, travel, requests, fleet_size: int,
                 dispatch_params: DispatchParams,
                 reposition_params: RepositionParams,
                 settings: SimulationSettings,
                 matrix: TravelTimeMatrix | None = None,
                 forecast_provider=None,
                 solver_config: SolverConfig | None = None,
                 rng=None):
        if settings.mode not in MODES:
            raise SimulationError(f"unknown mode {settings.mode!r}")
        if settings.end_time <= settings.start_time:
            raise SimulationError("end_time must be after start_time")
        if settings.warmup_s < 0:
            raise SimulationError("warmup_s must be nonnegative")
        if settings.start_time + settings.warmup_s > settings.end_time:
            raise SimulationError("warm-up extends past the end of the run")
        if fleet_size <= 0:
            raise SimulationError("fleet_size must be positive")
        if settings.mode == MODE_FDR:
            if forecast_provider is None:
                raise SimulationError("fdr mode needs a forecast provider")
            if matrix is None:
                raise SimulationError("fdr mode needs an area travel-time matrix")

        self.grid = grid
        self.travel = travel
        self.matrix = matrix
        self.dispatch_params = dispatch_params
        self.reposition_params = reposition_params
        self.settings = settings
        self.forecast_provider = forecast_provider
        self.solver_config = solver_config or SolverConfig()
        if rng is None:
            import random
            rng = random.Random(settings.seed)
        self.rng = rng

        self.requests = sorted(
            (r for r in requests
             if settings.start_time <= r.request_time < settings.end_time),
            key=lambda r: (r.request_time, r.id))
        self.warmup_end = settings.start_time + settings.warmup_s
        self.pool = TargetPool(grid)
        self.metrics = Accumulator(self.warmup_end, settings.end_time, fleet_size)
        self.outcomes: dict[int, object] = {}
        self.audit: list[dict] = []
        self._stops_by_request: dict[int, tuple] = {}

        positions = place_fleet(self.requests, grid, fleet_size,
                                settings.start_time, self.rng)
        self.vehicles = [Vehicle(i, positions[i], reported_position=positions[i])
                         for i in range(fleet_size)]

        self._queue: list = []
        self._tie = 0
        self._last_popped = -math.inf
        for req in self.requests:
            self._push(req.request_time, EV_REQUEST_ARRIVAL, req)
        if settings.position_update_s > 0:
            first = settings.start_time + settings.position_update_s
            if first < settings.end_time:
                self._push(first, EV_POSITION_UPDATE, None)
        if settings.mode == MODE_FDR:
            f = reposition_params.interval_s
            first_tick = math.ceil(settings.start_time / f) * f
            if first_tick < settings.end_time:
                self._push(first_tick, EV_REPOSITION_TICK, None)
        if self.metrics.n_minutes > 0:
            self._push(self.warmup_end, EV_SERIES_SAMPLE, 0)

    # -- event plumbing --

    def _push(self, t: float, kind: int, payload) -> None:
        heappush(self._queue, (t, kind, self._tie, payload))
        self._tie += 1

    def _set_phase(self, v: Vehicle, phase: str) -> None:
        if phase != v.phase and (v.phase, phase) not in _PHASE_TRANSITIONS:
            raise AssertionError(
                f"illegal phase transition {v.phase} -> {phase} (vehicle {v.id})")
        v.phase = phase

    # -- positions --

    def exact_position(self, v: Vehicle, now: float) -> GeoPoint:
        if not v.moving():
            return v.position
        if now >= v.leg_arrival:
            return v.leg_target_point
        span = v.leg_arrival - v.leg_depart
        if span <= 0 or now <= v.leg_depart:
            return v.leg_origin
        w = (now - v.leg_depart) / span
        x0, y0 = self.grid.to_xy(v.leg_origin)
        x1, y1 = self.grid.to_xy(v.leg_target_point)
        return self.grid.from_xy(x0 + w * (x1 - x0), y0 + w * (y1 - y0))

    def _begin_leg(self, v: Vehicle, now: float, target: GeoPoint,
                   kind: int) -> None:
        """Commit a straight leg from the exact current position to target."""
        origin = self.exact_position(v, now)
        v.position = origin
        v.leg_origin = origin
        v.leg_target_point = target
        v.leg_depart = now
        v.leg_arrival = now + self.travel.travel_time(origin, target)
        v.event_seq += 1
        v.reported_position = origin
        self._push(v.leg_arrival, kind, (v.id, v.event_seq))

    def _accrue_leg(self, v: Vehicle, until: float, repositioning: bool) -> None:
        """Bank the driving time of the current leg up to ``until``."""
        if not v.moving():
            return
        t0 = max(v.leg_depart, self.warmup_end)
        t1 = min(until, v.leg_arrival)
        if t1 > t0:
            v.travel_s += t1 - t0
            if repositioning:
                v.reposition_s += t1 - t0

    def _end_leg(self, v: Vehicle, now: float, repositioning: bool) -> None:
        self._accrue_leg(v, now, repositioning)
        v.position = self.exact_position(v, now)
        v.leg_origin = None
        v.reported_position = v.position

    # -- dispatch --

    def _vehicle_view(self, v: Vehicle, now: float) -> VehicleView:
        if v.moving():
            pos = self.exact_position(v, now)
            start = now
        else:
            pos = v.position
            start = max(now, v.busy_until)
        return VehicleView(v.id, pos, start, v.load, tuple(v.stops))

    def _handle_request(self, now: float, req: TripRequest) -> None:
        self.pool.add(req.origin)
        if self.forecast_provider is not None:
            self.forecast_provider.observe(req)
        self.metrics.record_request(req.request_time)
        pickup, dropoff = make_request_stops(req, self.travel.travel_time,
                                             self.dispatch_params)
        views = [self._vehicle_view(v, now) for v in self.vehicles]
        chosen = best_insertion(views, pickup, dropoff, self.travel.travel_time,
                                self.dispatch_params)
        if chosen is None:
            self.outcomes[req.id] = RequestOutcome(req, accepted=False)
            self.metrics.record_rejection(req.request_time)
            if self.settings.mode == MODE_REACT:
                self._react(now, req.origin)
            return
        self.outcomes[req.id] = RequestOutcome(req, accepted=True,
                                               vehicle_id=chosen.vehicle_id)
        self.metrics.record_acceptance(req.request_time)
        self._stops_by_request[req.id] = (pickup, dropoff)
        v = self.vehicles[chosen.vehicle_id]
        i, j = chosen.pickup_index, chosen.dropoff_index
        v.stops = v.stops[:i] + [pickup] + v.stops[i:j] + [dropoff] + v.stops[j:]
        if v.phase == PHASE_IDLE:
            self._set_phase(v, PHASE_TOURING)
            self._begin_leg(v, now, v.stops[0].location, EV_STOP_ARRIVAL)
        elif v.phase == PHASE_REPOSITIONING:
            self._end_leg(v, now, repositioning=True)
            v.reposition_target = None
            self._set_phase(v, PHASE_TOURING)
            self._begin_leg(v, now, v.stops[0].location, EV_STOP_ARRIVAL)
        elif i == 0 and v.moving():
            # new head while driving toward the old one: redirect in place
            self._end_leg(v, now, repositioning=False)
            self._begin_leg(v, now, v.stops[0].location, EV_STOP_ARRIVAL)
        # otherwise the head leg or the pending departure stays valid

    def _react(self, now: float, pickup_point: GeoPoint) -> None:
        idle = [(v.id, v.reported_position) for v in self.vehicles
                if v.phase == PHASE_IDLE]
        vid = react_on_rejection(pickup_point, idle, self.travel.travel_time)
        if vid is None:
            return
        v = self.vehicles[vid]
        self._set_phase(v, PHASE_REPOSITIONING)
        v.reposition_target = pickup_point
        self._begin_leg(v, now, pickup_point, EV_REPOSITION_ARRIVAL)

    # -- stop events --

    def _handle_stop_arrival(self, now: float, vid: int, seq: int) -> None:
        v = self.vehicles[vid]
        if seq != v.event_seq or v.phase != PHASE_TOURING:
            return
        self._end_leg(v, now, repositioning=False)
        stop = v.stops.pop(0)
        v.position = stop.location
        v.reported_position = stop.location
        outcome = self.outcomes[stop.request_id]
        if stop.kind == PICKUP:
            v.load += stop.passengers
            outcome.pickup_time = now
            self.metrics.record_waiting(
                outcome.request.request_time,
                now - outcome.request.request_time)
            # the rider is aboard: the ride-time promise becomes an absolute
            # dropoff deadline measured from the actual pickup departure
            departure = now + self.dispatch_params.dwell_s
            _, dropoff = self._stops_by_request[stop.request_id]
            dropoff.deadline = min(dropoff.deadline,
                                   departure + dropoff.ride_limit_s)
        else:
            v.load -= stop.passengers
            outcome.dropoff_time = now
        if v.stops:
            v.busy_until = now + self.dispatch_params.dwell_s
            self._push(v.busy_until, EV_STOP_DEPARTURE, (vid, seq))
        else:
            # the final dwell is unpaid: the vehicle is free immediately
            v.busy_until = now
            self._set_phase(v, PHASE_IDLE)

    def _handle_stop_departure(self, now: float, vid: int, seq: int) -> None:
        v = self.vehicles[vid]
        if seq != v.event_seq or v.phase != PHASE_TOURING or not v.stops:
            return
        self._begin_leg(v, now, v.stops[0].location, EV_STOP_ARRIVAL)

    def _handle_reposition_arrival(self, now: float, vid: int, seq: int) -> None:
        v = self.vehicles[vid]
        if seq != v.event_seq or v.phase != PHASE_REPOSITIONING:
            return
        self._end_leg(v, now, repositioning=True)
        v.position = v.reposition_target
        v.reported_position = v.position
        v.reposition_target = None
        self._set_phase(v, PHASE_IDLE)

    # -- repositioning ticks --

    def _snapshot(self, now: float) -> FleetSnapshot:
        idle_by_area: dict[int, list] = {}
        touring = np.zeros(self.grid.n_areas, dtype=np.int64)
        inbound = np.zeros(self.grid.n_areas, dtype=np.int64)
        for v in self.vehicles:
            if v.phase == PHASE_IDLE:
                area = self.grid.locate(v.reported_position)
                idle_by_area.setdefault(area, []).append(
                    (v.id, v.reported_position))
            elif v.phase == PHASE_TOURING:
                touring[self.grid.locate(v.reported_position)] += 1
            else:
                inbound[self.grid.locate(v.reposition_target)] += 1
        return FleetSnapshot(now, self.grid.n_areas, idle_by_area,
                             touring, inbound)

    def _handle_reposition_tick(self, now: float) -> None:
        nxt = now + self.reposition_params.interval_s
        if nxt < self.settings.end_time:
            self._push(nxt, EV_REPOSITION_TICK, None)
        snapshot = self._snapshot(now)
        forecast = self.forecast_provider.forecast(now)
        try:
            plan = plan_fdr(snapshot, forecast.values, self.matrix,
                            self.reposition_params, self.pool, self.rng,
                            self.travel.travel_time, self.solver_config)
        except Exception:
            logger.exception("planning tick at t=%.0f failed; skipping", now)
            self.audit.append({"timestamp": now, "status": "error",
                               "objective": None, "total_flow": 0,
                               "solve_ms": 0.0, "plan_size": 0, "nodes": 0})
            return
        self.audit.append({
            "timestamp": now,
            "status": plan.solver_status,
            "objective": plan.objective,
            "total_flow": plan.total_flow,
            "solve_ms": plan.solve_ms,
            "plan_size": plan.size,
            "nodes": plan.nodes,
        })
        for job in plan.assignments:
            v = self.vehicles[job.vehicle_id]
            if v.phase != PHASE_IDLE:
                continue  # state drifted inside the tick; skip defensively
            self._set_phase(v, PHASE_REPOSITIONING)
            v.reposition_target = job.target
            self._begin_leg(v, now, job.target, EV_REPOSITION_ARRIVAL)

    # -- periodic sweeps --

    def _handle_position_update(self, now: float) -> None:
        for v in self.vehicles:
            v.reported_position = self.exact_position(v, now)
        nxt = now + self.settings.position_update_s
        if nxt < self.settings.end_time:
            self._push(nxt, EV_POSITION_UPDATE, None)

    def _handle_series_sample(self, now: float, minute: int) -> None:
        idle = sum(1 for v in self.vehicles if v.phase == PHASE_IDLE)
        touring = sum(1 for v in self.vehicles if v.phase == PHASE_TOURING)
        repositioning = sum(1 for v in self.vehicles
                            if v.phase == PHASE_REPOSITIONING)
        self.metrics.record_sample(minute, idle, touring, repositioning)
        if minute + 1 < self.metrics.n_minutes:
            self._push(now + 60.0, EV_SERIES_SAMPLE, minute + 1)

    # -- main loop --

    def run(self) -> SimulationResult:
        handlers = {
            EV_STOP_ARRIVAL: lambda t, p: self._handle_stop_arrival(t, *p),
            EV_STOP_DEPARTURE: lambda t, p: self._handle_stop_departure(t, *p),
            EV_REPOSITION_ARRIVAL:
                lambda t, p: self._handle_reposition_arrival(t, *p),
            EV_POSITION_UPDATE: lambda t, p: self._handle_position_update(t),
            EV_REQUEST_ARRIVAL: lambda t, p: self._handle_request(t, p),
            EV_REPOSITION_TICK: lambda t, p: self._handle_reposition_tick(t),
            EV_SERIES_SAMPLE: lambda t, p: self._handle_series_sample(t, p),
        }
        while self._queue:
            t, kind, _, payload = heappop(self._queue)
            if t < self._last_popped:
                raise AssertionError("event queue went backwards in time")
            self._last_popped = t
            handlers[kind](t, payload)

        outcomes = [self.outcomes[r.id] for r in self.requests]
        report = self.metrics.finalize(
            total_travel_s=sum(v.travel_s for v in self.vehicles),
            repositioning_travel_s=sum(v.reposition_s for v in self.vehicles),
        )
        return SimulationResult(report=report, outcomes=outcomes,
                                audit=self.audit,
                                fleet_size=len(self.vehicles),
                                warmup_end=self.warmup_end)
