"""Roll a world forward while tracking FSM stage progress."""
from __future__ import annotations

from dataclasses import dataclass, field

from ..predicates import Call, evaluate, parse_expr
from .evaluate import THRESHOLDS, Thresholds, eval_call
from .world import SimWorld, apply_stage_effects

EGO = "ego-vehicle"


@dataclass
class RunResult:
    verdict: str  # accepted | stalled | collided
    stage_log: list[int]  # tick at which each met stage was met
    reached_stage: int  # index of the first unmet stage (== len(stages) when accepted)
    state_log: list[dict[str, bool]]  # per tick, "agent|State Name" -> truth
    trace: list[dict] = field(default_factory=list)
    collisions: list[tuple[int, str, str]] = field(default_factory=list)
    ticks: int = 0


def state_key(agent: str, name: str) -> str:
    return f"{agent}|{name}"


def advance_stages(state_log: list[dict[str, bool]], stages: list[list[tuple[str, str]]]) -> list[int]:
    """Greedy stage matcher over a recorded truth table (one advance per tick)."""
    log: list[int] = []
    k = 0
    for t, truths in enumerate(state_log):
        if k == len(stages):
            break
        if all(truths[state_key(a, s)] for a, s in stages[k]):
            log.append(t)
            k += 1
    return log


def run(world: SimWorld, fsm, bindings, max_ticks: int, seed: int = 0,
        th: Thresholds = THRESHOLDS, ego: str = EGO) -> RunResult:
    """Step ``world`` (in place) until the FSM's terminal stage is met or ``max_ticks`` pass.

    ``fsm`` needs ``stages``; ``bindings`` is an iterable of objects with
    ``agent``, ``name`` and ``predicate_expr``.
    """
    stages = [list(st) for st in fsm.stages]
    exprs = {state_key(b.agent, b.name): parse_expr(b.predicate_expr) for b in bindings}
    for st in stages:
        for a, s in st:
            if state_key(a, s) not in exprs:
                raise KeyError(f"stage requirement ({a}, {s}) has no abstract state")
    stage_log: list[int] = []
    state_log: list[dict[str, bool]] = []
    k = 0
    if world.tick == 0:
        apply_stage_effects(world, -1)  # actions bound to "before the first stage"
    for _ in range(max_ticks + 1):
        cache: dict[Call, bool] = {}

        def leaf(c: Call) -> bool:
            if c not in cache:
                cache[c] = eval_call(world, c, th)
            return cache[c]

        truths = {key: evaluate(e, leaf) for key, e in exprs.items()}
        state_log.append(truths)
        if all(truths[state_key(a, s)] for a, s in stages[k]):
            stage_log.append(world.tick)
            apply_stage_effects(world, k)
            k += 1
            if k == len(stages):
                break
        if world.tick >= max_ticks:
            break
        world.step(seed)
    if k == len(stages):
        verdict = "accepted"
    elif any(ego in (a, b) for _, a, b in world.collisions):
        verdict = "collided"
    else:
        verdict = "stalled"
    return RunResult(verdict, stage_log, k, state_log, world.trace, list(world.collisions), world.tick)
