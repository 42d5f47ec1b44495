from .evaluate import THRESHOLDS, Thresholds, eval_call, eval_predicate, relative_position
from .geometry import Polyline, densify, obb_corners, obb_overlap
from .roadmap import EgoRoute, Lane, MapError, RoadMap, bundled_maps, load_map, parse_map, resolve_route
from .routing import NoPathError, PlannedRoute, plan_route, straight_route
from .control import Commands, pid_step
from .runner import EGO, RunResult, advance_stages, run, state_key
from .world import DT, Actor, SimError, SimWorld, add_gnss_noise, apply_stage_effects, step

__all__ = [
    "Actor", "Commands", "DT", "EGO", "EgoRoute", "Lane", "MapError", "NoPathError", "PlannedRoute",
    "Polyline", "RoadMap", "RunResult", "SimError", "SimWorld", "THRESHOLDS", "Thresholds",
    "add_gnss_noise", "advance_stages", "apply_stage_effects", "bundled_maps", "densify", "eval_call",
    "eval_predicate", "load_map", "obb_corners", "obb_overlap", "parse_map", "pid_step", "plan_route",
    "relative_position", "resolve_route", "run", "state_key", "step", "straight_route",
]
