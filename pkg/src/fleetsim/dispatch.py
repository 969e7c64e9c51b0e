"""Shared-ride dispatch by cheapest feasible insertion.

A trip request turns into a pickup stop and a dropoff stop.  The dispatcher
tries every way of splicing that pair (pickup first) into each candidate
vehicle's remaining stop sequence, keeps the splices that respect capacity,
waiting-time and ride-time limits along the whole route, and picks the one
that grows the route's completion time the least.  Existing stops never
reorder; a request that fits nowhere is rejected.

Route timing convention: a vehicle departs a stop ``dwell_s`` seconds after
arriving, and the route cost is the arrival time at the final stop measured
from the walk's start reference (so every dwell except the last stop's is
paid).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .geo import GeoPoint

PICKUP = "pickup"
DROPOFF = "dropoff"

_TIME_EPS = 1e-9


@dataclass(slots=True)
class Stop:
    """One scheduled halt: board or unboard a single request's party.

    ``deadline`` is the latest allowed arrival time.  For pickups it encodes
    the waiting-time promise; for dropoffs it stays infinite while the rider
    is unboarded (the ride-time limit is then relative to the planned pickup)
    and becomes absolute once the rider is aboard.  ``ride_limit_s`` caps the
    time between pickup departure and dropoff arrival.
    """

    kind: str
    request_id: int
    location: GeoPoint
    passengers: int
    deadline: float = math.inf
    ride_limit_s: float = 0.0


@dataclass(frozen=True)
class DispatchParams:
    capacity: int = 4
    max_wait_s: float = 480.0
    ride_factor: float = 1.5
    ride_buffer_s: float = 300.0
    dwell_s: float = 30.0


@dataclass(frozen=True, slots=True)
class WalkResult:
    feasible: bool
    cost_s: float
    arrivals: tuple
    final_load: int


@dataclass(frozen=True, slots=True)
class VehicleView:
    """What the dispatcher needs to know about one candidate vehicle:
    where its insertable route begins (position and time), the passengers
    already aboard, and the stops it is still due to visit."""

    vehicle_id: int
    position: GeoPoint
    start_time: float
    load: int
    stops: tuple


@dataclass(frozen=True, slots=True)
class Assignment:
    vehicle_id: int
    pickup_index: int
    dropoff_index: int
    delta_cost_s: float


def make_request_stops(request, travel_time, params: DispatchParams):
    """Build the pickup/dropoff stop pair for a trip request."""
    direct_s = travel_time(request.origin, request.destination)
    pickup = Stop(PICKUP, request.id, request.origin, request.passengers,
                  deadline=request.request_time + params.max_wait_s)
    dropoff = Stop(DROPOFF, request.id, request.destination, request.passengers,
                   ride_limit_s=params.ride_factor * direct_s + params.ride_buffer_s)
    return pickup, dropoff


def walk_route(position: GeoPoint, start_time: float, load: int, stops,
               travel_time, params: DispatchParams) -> WalkResult:
    """Simulate driving the stop sequence; report timing and limit violations.

    The walk never stops early: arrivals are produced for every stop even
    when a limit fails, so callers can both test feasibility and schedule.
    """
    t = start_time
    pos = position
    feasible = True
    cost = 0.0
    arrivals = []
    pickup_departure: dict[int, float] = {}
    for stop in stops:
        t_arr = t + travel_time(pos, stop.location)
        arrivals.append(t_arr)
        if stop.kind == PICKUP:
            if t_arr > stop.deadline + _TIME_EPS:
                feasible = False
            load += stop.passengers
            if load > params.capacity:
                feasible = False
        else:
            limit = stop.deadline
            dep = pickup_departure.get(stop.request_id)
            if dep is not None and dep + stop.ride_limit_s < limit:
                limit = dep + stop.ride_limit_s
            if t_arr > limit + _TIME_EPS:
                feasible = False
            load -= stop.passengers
        cost = t_arr - start_time
        t = t_arr + params.dwell_s
        if stop.kind == PICKUP:
            pickup_departure[stop.request_id] = t
        pos = stop.location
    return WalkResult(feasible, cost, tuple(arrivals), load)


def best_insertion(vehicles, pickup: Stop, dropoff: Stop, travel_time,
                   params: DispatchParams) -> Assignment | None:
    """Cheapest feasible splice of the stop pair over all candidate vehicles.

    Vehicles are scanned in the order given and splice positions in
    ascending (pickup, dropoff) index order; a strict cost improvement is
    required to displace the incumbent, so ties resolve to the earliest
    candidate in scan order.  Returns None when no splice is feasible.
    """
    # the same point pairs recur in every candidate walk of a scan, so leg
    # times are memoized for the duration of the call
    memo: dict[tuple[int, int], float] = {}

    def leg_time(a: GeoPoint, b: GeoPoint) -> float:
        key = (id(a), id(b))
        t = memo.get(key)
        if t is None:
            t = travel_time(a, b)
            memo[key] = t
        return t

    best = None
    best_delta = math.inf
    for view in vehicles:
        stops = list(view.stops)
        base = walk_route(view.position, view.start_time, view.load, stops,
                          leg_time, params).cost_s
        n = len(stops)
        for i in range(n + 1):
            # every candidate with this pickup position shares the prefix up
            # to and including the pickup, so one late or over-capacity
            # pickup rules out all dropoff positions at once
            prefix = walk_route(view.position, view.start_time, view.load,
                                stops[:i] + [pickup], leg_time, params)
            if not prefix.feasible:
                continue
            for j in range(i, n + 1):
                candidate = stops[:i] + [pickup] + stops[i:j] + [dropoff] + stops[j:]
                result = walk_route(view.position, view.start_time, view.load,
                                    candidate, travel_time=leg_time, params=params)
                if not result.feasible:
                    continue
                delta = result.cost_s - base
                if delta < best_delta - _TIME_EPS:
                    best_delta = delta
                    best = Assignment(view.vehicle_id, i, j, delta)
    return best
