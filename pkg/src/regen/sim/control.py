"""Longitudinal and lateral PID controllers."""
from __future__ import annotations

import math
from dataclasses import dataclass

from .geometry import Polyline, wrap_angle


@dataclass
class PidGains:
    kp: float
    ki: float = 0.0
    kd: float = 0.0
    i_limit: float = 5.0


SPEED_GAINS = PidGains(kp=1.5, ki=0.2, kd=0.0)
HEADING_GAINS = PidGains(kp=1.0, ki=0.0, kd=0.1)
CROSS_TRACK_GAIN = 0.05
MAX_STEER = 0.6
MIN_LOOKAHEAD = 4.0
LOOKAHEAD_TIME = 0.8


@dataclass
class PidState:
    integral: float = 0.0
    prev_error: float | None = None

    def update(self, gains: PidGains, error: float, dt: float) -> float:
        self.integral = max(-gains.i_limit, min(gains.i_limit, self.integral + error * dt))
        deriv = 0.0 if self.prev_error is None else (error - self.prev_error) / dt
        self.prev_error = error
        return gains.kp * error + gains.ki * self.integral + gains.kd * deriv


@dataclass
class Commands:
    accel: float
    steer: float


def longitudinal(state: PidState, speed: float, target: float, a_max: float, b_max: float, dt: float) -> float:
    if target <= 0.0 and speed <= 0.0:
        state.integral = 0.0
        state.prev_error = None
        return 0.0
    u = state.update(SPEED_GAINS, target - speed, dt)
    return max(-b_max, min(a_max, u))


def lateral(state: PidState, x: float, y: float, heading: float, speed: float, path: Polyline, dt: float) -> float:
    s, cte = path.project(x, y, extend=True)
    look = max(MIN_LOOKAHEAD, LOOKAHEAD_TIME * speed)
    lx, ly, lh = path.point_at(s + look, extend=True)
    bearing = wrap_angle(math.atan2(ly - y, lx - x) - heading)
    u = state.update(HEADING_GAINS, bearing, dt) - CROSS_TRACK_GAIN * cte
    return max(-MAX_STEER, min(MAX_STEER, u))


def pid_step(actor, waypoints, dt: float) -> Commands:
    """One controller evaluation for ``actor`` toward its target speed along ``waypoints``.

    Uses (and updates) the actor's PID memories; the target is the actor's
    current primitive target speed.
    """
    path = waypoints if isinstance(waypoints, Polyline) else Polyline(waypoints)
    accel = longitudinal(actor.speed_pid, actor.speed, actor.current_target, actor.a_max, actor.b_max, dt)
    steer = lateral(actor.steer_pid, actor.x, actor.y, actor.heading, actor.speed, path, dt)
    return Commands(accel, steer)
