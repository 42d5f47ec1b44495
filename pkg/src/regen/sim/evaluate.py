"""Geometric and kinematic meaning of the predicate library."""
from __future__ import annotations

import math
from dataclasses import dataclass

from ..predicates import LIBRARY, Call, Expr, evaluate
from .world import BRAKE_LIGHT_DECEL, Actor, SimError, SimWorld


@dataclass(frozen=True)
class Thresholds:
    behind_max_gap: float = 50.0  # m
    behind_lateral_lanes: float = 2.0  # lane widths
    front_max_gap: float = 15.0  # m
    front_lateral_slack: float = 0.5  # m beyond one lane width
    close_distance: float = 20.0  # m, closed bound
    moving_speed: float = 0.5  # m/s
    stopped_speed: float = 0.1  # m/s
    stopped_ticks: int = 5
    braking_decel: float = BRAKE_LIGHT_DECEL  # m/s^2
    steady_tolerance: float = 0.1  # fraction of the cruise speed
    steady_ticks: int = 10
    default_lane_width: float = 4.0


THRESHOLDS = Thresholds()


def _lane_width(world: SimWorld, a: Actor) -> float:
    loc = world.road.locate(a.x, a.y)
    return world.road.lanes[loc[0]].width if loc else THRESHOLDS.default_lane_width


def relative_position(world: SimWorld, agent: Actor, other: Actor) -> tuple[float, float]:
    """Signed longitudinal gap and lateral offset of ``agent`` in ``other``'s path frame."""
    if other.route is not None:
        s_a, l_a = other.route.project(agent.x, agent.y)
        s_o, l_o = other.route.project(other.x, other.y)
        return s_a - s_o, l_a - l_o
    c, s = math.cos(other.heading), math.sin(other.heading)
    dx, dy = agent.x - other.x, agent.y - other.y
    return dx * c + dy * s, -dx * s + dy * c


def eval_call(world: SimWorld, call: Call, th: Thresholds = THRESHOLDS) -> bool:
    if call.name not in LIBRARY:
        raise SimError(f"unknown predicate {call.name!r}")
    if len(call.args) != LIBRARY[call.name][0]:
        raise SimError(f"predicate {call.name} takes {LIBRARY[call.name][0]} arguments")
    a = world.actor(str(call.args[0]))
    name = call.name
    if name == "behind_vehicle":
        gap, lat = relative_position(world, a, world.actor(str(call.args[1])))
        return gap < 0 and -gap <= th.behind_max_gap and abs(lat) <= th.behind_lateral_lanes * _lane_width(world, a)
    if name == "right_in_front":
        other = world.actor(str(call.args[1]))
        gap, lat = relative_position(world, a, other)
        return 0 < gap <= th.front_max_gap and abs(lat) <= _lane_width(world, other) + th.front_lateral_slack
    if name == "are_close_by":
        b = world.actor(str(call.args[1]))
        return math.hypot(a.x - b.x, a.y - b.y) <= th.close_distance
    if name == "is_currently_moving":
        return a.speed > th.moving_speed
    if name == "is_currently_stopped":
        return a.speed <= th.stopped_speed and a.stopped_ticks >= th.stopped_ticks
    if name == "is_braking":
        return -a.accel_cmd > th.braking_decel
    if name == "is_ego_driving_steady":
        return a.steady_ticks >= th.steady_ticks
    if name == "in_lane":
        loc = world.road.locate(a.x, a.y, a.heading if a.motion == "vehicle" else None)
        return loc is not None and loc[0] == str(call.args[1])
    if name == "at_intersection":
        return world.road.intersection_at(a.x, a.y) is not None
    if name == "property_is":
        return a.properties.get(str(call.args[1])) == str(call.args[2])
    if name == "gnss_error_exceeds":
        if a.gnss_reading is None:
            return False
        return math.hypot(a.gnss_reading[0] - a.x, a.gnss_reading[1] - a.y) > float(call.args[1])
    raise SimError(f"predicate {name!r} has no evaluator")  # pragma: no cover


def eval_predicate(world: SimWorld, expr: Expr, th: Thresholds = THRESHOLDS) -> bool:
    cache: dict[Call, bool] = {}

    def leaf(c: Call) -> bool:
        if c not in cache:
            cache[c] = eval_call(world, c, th)
        return cache[c]

    return evaluate(expr, leaf)
