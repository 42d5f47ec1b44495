from __future__ import annotations

import math

import numpy as np


def wrap_angle(a: float) -> float:
    return (a + math.pi) % (2 * math.pi) - math.pi


class Polyline:
    """Piecewise-linear path with arc-length parameterisation."""

    def __init__(self, points):
        pts = np.asarray(points, dtype=float)
        if pts.ndim != 2 or pts.shape[0] < 2 or pts.shape[1] != 2:
            raise ValueError("polyline needs at least two 2D points")
        keep = np.concatenate([[True], np.linalg.norm(np.diff(pts, axis=0), axis=1) > 1e-9])
        pts = pts[keep]
        if pts.shape[0] < 2:
            raise ValueError("polyline has zero length")
        self.pts = pts
        self.seg = np.diff(pts, axis=0)
        self.seglen = np.linalg.norm(self.seg, axis=1)
        self.s = np.concatenate([[0.0], np.cumsum(self.seglen)])

    @property
    def length(self) -> float:
        return float(self.s[-1])

    def _segment(self, s: float) -> int:
        i = int(np.searchsorted(self.s, s, side="right")) - 1
        return min(max(i, 0), len(self.seglen) - 1)

    def point_at(self, s: float, extend: bool = False) -> tuple[float, float, float]:
        """(x, y, heading) at arc length ``s``; clamped unless ``extend``."""
        if not extend:
            s = min(max(s, 0.0), self.length)
        i = self._segment(s)
        frac = (s - self.s[i]) / self.seglen[i]
        p = self.pts[i] + frac * self.seg[i]
        return float(p[0]), float(p[1]), math.atan2(self.seg[i][1], self.seg[i][0])

    def heading_at(self, s: float) -> float:
        return self.point_at(s)[2]

    def project(self, x: float, y: float, extend: bool = True) -> tuple[float, float]:
        """Arc length and signed lateral offset (left positive) of a point.

        With ``extend`` the first and last segments continue past the ends, so
        points behind the start get negative arc length.
        """
        q = np.array([x, y], dtype=float)
        rel = q - self.pts[:-1]
        t = np.einsum("ij,ij->i", rel, self.seg) / self.seglen**2
        lo = np.zeros_like(t)
        hi = np.ones_like(t)
        if extend:
            lo[0] = -np.inf
            hi[-1] = np.inf
        tc = np.clip(t, lo, hi)
        closest = self.pts[:-1] + tc[:, None] * self.seg
        d2 = np.sum((closest - q) ** 2, axis=1)
        i = int(np.argmin(d2))
        s = float(self.s[i] + tc[i] * self.seglen[i])
        cross = self.seg[i][0] * rel[i][1] - self.seg[i][1] * rel[i][0]
        return s, float(cross / self.seglen[i])


def densify(points, max_step: float = 2.0) -> np.ndarray:
    pts = np.asarray(points, dtype=float)
    out = [pts[0]]
    for a, b in zip(pts[:-1], pts[1:]):
        d = float(np.linalg.norm(b - a))
        if d < 1e-9:
            continue
        n = max(1, int(math.ceil(d / max_step - 1e-9)))
        for k in range(1, n + 1):
            out.append(a + (b - a) * (k / n))
    return np.array(out)


def obb_corners(x: float, y: float, heading: float, length: float, width: float) -> np.ndarray:
    c, s = math.cos(heading), math.sin(heading)
    hl, hw = length / 2, width / 2
    local = np.array([[hl, hw], [hl, -hw], [-hl, -hw], [-hl, hw]])
    rot = np.array([[c, -s], [s, c]])
    return local @ rot.T + np.array([x, y])


def obb_overlap(a: np.ndarray, b: np.ndarray) -> bool:
    """Separating-axis test for two convex quadrilaterals given as corners."""
    for poly in (a, b):
        for i in range(4):
            edge = poly[(i + 1) % 4] - poly[i]
            axis = np.array([-edge[1], edge[0]])
            pa, pb = a @ axis, b @ axis
            if pa.max() < pb.min() or pb.max() < pa.min():
                return False
    return True
