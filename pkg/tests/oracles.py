"""Independent brute-force reference implementations used by the tests.

These deliberately avoid the package's own helpers for the quantity under
test, so agreement means something.
"""
from __future__ import annotations

import functools
import itertools
import json
import math

import networkx as nx


# -- BLEU ------------------------------------------------------------------------
def brute_tokens(text: str) -> list[str]:
    out, cur = [], ""
    for ch in text.lower():
        if ("a" <= ch <= "z") or ("0" <= ch <= "9"):
            cur += ch
        elif cur:
            out.append(cur)
            cur = ""
    if cur:
        out.append(cur)
    return out


def _grams(tokens, n):
    return [tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1)]


def brute_bleu(hyp, refs, max_n=4, eps=0.1):
    c = len(hyp)
    if c == 0 or not refs:
        return 0.0
    orders = min(max_n, c)
    logs = []
    for n in range(1, orders + 1):
        hg = _grams(hyp, n)
        clipped = 0
        for g in set(hg):
            mine = hg.count(g)
            best = max(_grams(r, n).count(g) for r in refs)
            clipped += min(mine, best)
        p = (clipped if clipped else eps) / len(hg)
        logs.append(math.log(p))
    best_r = None
    for r in refs:
        L = len(r)
        if best_r is None or abs(L - c) < abs(best_r - c) or (abs(L - c) == abs(best_r - c) and L < best_r):
            best_r = L
    bp = 1.0 if c > best_r else math.exp(1 - best_r / c)
    return bp * math.exp(sum(logs) / orders)


def brute_self_bleu(texts, max_n=4):
    toks = [brute_tokens(t) for t in texts]
    total = 0.0
    for i in range(len(toks)):
        refs = [toks[j] for j in range(len(toks)) if j != i]
        total += brute_bleu(toks[i], refs, max_n)
    return total / len(toks)


# -- FSM stage sequencing ---------------------------------------------------------
def brute_stage_witness(stage_truth: list[list[bool]]):
    """stage_truth[k][t]: is stage k satisfied at tick t.

    Returns (reached, witness) where ``witness`` is the lexicographically
    smallest strictly increasing tick sequence meeting the first ``reached``
    stages and ``reached`` is the largest achievable prefix.
    """
    n = len(stage_truth)
    T = len(stage_truth[0]) if n else 0

    @functools.lru_cache(maxsize=None)
    def search(k: int, t_min: int, want: int):
        if k == want:
            return ()
        for t in range(t_min, T):
            if stage_truth[k][t]:
                rest = search(k + 1, t + 1, want)
                if rest is not None:
                    return (t,) + rest
        return None

    for want in range(n, -1, -1):
        w = search(0, 0, want)
        if w is not None:
            return want, list(w)
    raise AssertionError("unreachable")


class TraceEvaluator:
    """Predicate truth from recorded snapshots on a straight eastbound road.

    ``history[t]`` is the world snapshot at tick ``t`` (tick 0 = initial state).
    Gaps are measured along +x; all lanes are 4 m wide.
    """

    LANE_W = 4.0

    def __init__(self, history: list[dict], cruise: dict[str, float]):
        self.h = history
        self.cruise = cruise

    def _a(self, t, name):
        return self.h[t]["actors"][name]

    def call(self, t: int, name: str, args: tuple) -> bool:
        a = self._a(t, args[0])
        if name == "is_currently_moving":
            return a["speed"] > 0.5
        if name == "is_currently_stopped":
            if t < 5:
                return False
            return all(self._a(u, args[0])["speed"] <= 0.1 for u in range(t - 4, t + 1))
        if name == "is_braking":
            return -a["accel"] > 0.5
        if name == "is_ego_driving_steady":
            v = self.cruise[args[0]]
            if v <= 0 or t < 10:
                return False
            return all(abs(self._a(u, args[0])["speed"] - v) <= 0.1 * v for u in range(t - 9, t + 1))
        if name == "are_close_by":
            b = self._a(t, args[1])
            return math.hypot(a["x"] - b["x"], a["y"] - b["y"]) <= 20.0
        if name == "behind_vehicle":
            o = self._a(t, args[1])
            gap, lat = a["x"] - o["x"], a["y"] - o["y"]
            return gap < 0 and -gap <= 50.0 and abs(lat) <= 2 * self.LANE_W
        if name == "right_in_front":
            o = self._a(t, args[1])
            gap, lat = a["x"] - o["x"], a["y"] - o["y"]
            return 0 < gap <= 15.0 and abs(lat) <= self.LANE_W + 0.5
        if name == "property_is":
            return a["properties"].get(args[1]) == args[2]
        raise KeyError(name)

    def expr(self, t: int, expr) -> bool:
        """``expr`` is a nested tuple: ("call", name, args) | ("and"|"or", [exprs])."""
        if expr[0] == "call":
            return self.call(t, expr[1], expr[2])
        vals = [self.expr(t, e) for e in expr[1]]
        return all(vals) if expr[0] == "and" else any(vals)


def render_expr(expr) -> str:
    if expr[0] == "call":
        args = ", ".join(f'"{a}"' if isinstance(a, str) else str(a) for a in expr[2])
        return f"{expr[1]}({args})"
    inner = f" {expr[0]} ".join(render_expr(e) for e in expr[1])
    return f"({inner})"


# -- cause paths ------------------------------------------------------------------
def brute_cause_paths(graph) -> list[list[str]]:
    g = nx.DiGraph()
    for ev in graph.events():
        g.add_node(ev.id)
    for kind, s, d in graph.edges:
        if kind == "cause":
            g.add_edge(s, d)
    roots = [n for n in g.nodes if g.in_degree(n) == 0]
    out = []
    for r in roots:
        if r == graph.behavior_node_id:
            out.append([r])
            continue
        out.extend(nx.all_simple_paths(g, r, graph.behavior_node_id))
    return sorted(out)


# -- placement ----------------------------------------------------------------------
def brute_force_placement(config, db, grid_step, speed_step, gap_min, max_ticks, seed=0):
    """Roll out every statically valid joint placement.

    Returns (feasible, accepted keys, total candidates, rollout function).
    """
    from regen.sim import resolve_route
    from regen.solver import enumerate_candidates, rollout, speed_values, static_check
    from regen.vocabulary import region_for

    road, _ = resolve_route(config.route_id)
    per_entity = {}
    hosts = {}
    for ent in config.entities:
        name = ent["name"]
        if name == "ego-vehicle":
            continue
        pv = config.placement_vars[name]
        region = region_for(pv["start"], "starting location")
        if region.anchor == "attached":
            hosts[name] = next(e["name"] for e in config.entities if e["asset_id"] == region.lane)
            per_entity[name] = [{"speed": 0.0, "attached_to": hosts[name]}]
            continue
        opts = []
        for p0 in enumerate_candidates(pv["start"], road, grid_step, route_id=config.route_id):
            ends = [None]
            if pv.get("end"):
                ends = enumerate_candidates(pv["end"], road, grid_step, role="ending location",
                                            route_id=config.route_id, anchor=p0)
            for p1 in ends:
                for v in speed_values(pv.get("speed_kmh", [0, 0]), speed_step):
                    opts.append({"x0": p0[0], "y0": p0[1], "heading": p0[2],
                                 "xT": None if p1 is None else p1[0], "yT": None if p1 is None else p1[1],
                                 "speed": v})
        per_entity[name] = opts
    names = list(per_entity)
    cache: dict[str, object] = {}

    def run(assign):
        key = json.dumps(assign, sort_keys=True)
        if key not in cache:
            cache[key] = rollout(config, assign, db, max_ticks, seed)
        return cache[key]

    accepted, total = set(), 0
    for combo in itertools.product(*(per_entity[n] for n in names)):
        assign = {n: dict(c) for n, c in zip(names, combo)}
        for n, host in hosts.items():
            h = assign[host]
            assign[n].update(x0=h["x0"], y0=h["y0"], heading=h["heading"], xT=None, yT=None)
        total += 1
        if static_check(config, assign, db, gap_min) is not None:
            continue
        if run(assign).verdict == "accepted":
            accepted.add(json.dumps(assign, sort_keys=True))
    return bool(accepted), accepted, total, run
