"""A* route planning over lane stations."""
from __future__ import annotations

import heapq
import math
from dataclasses import dataclass

import numpy as np

from .geometry import densify
from .roadmap import RoadMap

STATION_STEP = 2.0
LANE_CHANGE_LENGTH = 20.0
LANE_CHANGE_PENALTY = 5.0


class NoPathError(ValueError):
    pass


@dataclass
class PlannedRoute:
    waypoints: np.ndarray  # (N, 2), spacing <= 2 m
    lanes: list[str]  # lane sequence visited, including lane-change targets
    lane_changes: int


def _stations(length: float) -> list[float]:
    n = max(1, int(math.ceil(length / STATION_STEP - 1e-9)))
    return [length * k / n for k in range(n + 1)]


class _LaneGraph:
    def __init__(self, road: RoadMap):
        self.road = road
        self.st = {lid: _stations(lane.centerline.length) for lid, lane in road.lanes.items()}
        self.pt = {
            lid: [road.lanes[lid].centerline.point_at(s)[:2] for s in ss] for lid, ss in self.st.items()
        }

    def neighbours(self, node):
        lid, i = node
        lane = self.road.lanes[lid]
        pts = self.pt[lid]
        if i + 1 < len(pts):
            yield (lid, i + 1), math.dist(pts[i], pts[i + 1]), "lane"
        else:
            for succ in lane.successors:
                yield (succ, 0), math.dist(pts[i], self.pt[succ][0]), "lane"
        for adj in (lane.left, lane.right):
            if adj is None:
                continue
            s_target = self.st[lid][i] + LANE_CHANGE_LENGTH
            ss = self.st[adj]
            if s_target > ss[-1]:
                continue
            j = int(np.searchsorted(ss, s_target - 1e-9))
            yield (adj, j), math.dist(pts[i], self.pt[adj][j]) + LANE_CHANGE_PENALTY, "change"


def plan_route(road: RoadMap, start, goal) -> PlannedRoute:
    """Shortest lane-following path from ``start`` to ``goal`` (x, y[, heading])."""
    h0 = start[2] if len(start) > 2 else None
    h1 = goal[2] if len(goal) > 2 else None
    a = road.locate(start[0], start[1], h0)
    b = road.locate(goal[0], goal[1], h1)
    if a is None:
        raise NoPathError(f"start {tuple(start[:2])} is not on a drivable lane")
    if b is None:
        raise NoPathError(f"goal {tuple(goal[:2])} is not on a drivable lane")
    g = _LaneGraph(road)

    def snap(lid, s, forward):
        ss = g.st[lid]
        j = int(np.searchsorted(ss, s - 1e-9)) if forward else int(np.searchsorted(ss, s + 1e-9, side="right")) - 1
        return (lid, min(max(j, 0), len(ss) - 1))

    src = snap(a[0], a[1], True)
    dst = snap(b[0], b[1], False)
    goal_xy = g.pt[dst[0]][dst[1]]

    def h(node):
        return math.dist(g.pt[node[0]][node[1]], goal_xy)

    best = {src: 0.0}
    parent: dict = {src: None}
    heap = [(h(src), 0.0, src)]
    while heap:
        _, cost, node = heapq.heappop(heap)
        if node == dst:
            break
        if cost > best.get(node, math.inf):
            continue
        for nxt, w, kind in g.neighbours(node):
            c = cost + w
            if c < best.get(nxt, math.inf) - 1e-12:
                best[nxt] = c
                parent[nxt] = (node, kind)
                heapq.heappush(heap, (c + h(nxt), c, nxt))
    if dst not in parent:
        raise NoPathError(f"no path from {tuple(start[:2])} to {tuple(goal[:2])}")

    nodes, changes = [dst], 0
    while parent[nodes[-1]] is not None:
        prev, kind = parent[nodes[-1]]
        changes += kind == "change"
        nodes.append(prev)
    nodes.reverse()
    pts = [tuple(start[:2])] + [g.pt[l][i] for l, i in nodes] + [tuple(goal[:2])]
    lanes: list[str] = []
    for lid, _ in nodes:
        if not lanes or lanes[-1] != lid:
            lanes.append(lid)
    return PlannedRoute(densify(pts, STATION_STEP), lanes, changes)


def straight_route(start, goal) -> PlannedRoute:
    """Direct path for walkers, which are not bound to lanes."""
    return PlannedRoute(densify([tuple(start[:2]), tuple(goal[:2])], STATION_STEP), [], 0)
