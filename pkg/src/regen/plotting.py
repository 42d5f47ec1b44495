"""Top-down trajectory plots of recorded traces."""
from __future__ import annotations

import io

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .sim import resolve_route  # noqa: E402


class PlotError(ValueError):
    pass


def plot_trace(run_record: dict) -> bytes:
    """PNG bytes for a run record: lanes, actor paths and stage-advance markers."""
    trace = run_record.get("trace") or []
    if not trace:
        raise PlotError("trace is empty")
    road, _ = resolve_route(run_record["route_id"])
    fig, ax = plt.subplots(figsize=(10, 5), dpi=100)
    for lane in sorted(road.lanes.values(), key=lambda ln: ln.id):
        pts = lane.centerline.pts
        ax.plot(pts[:, 0], pts[:, 1], color="0.85", linewidth=6, solid_capstyle="butt", zorder=0)
    names = sorted(trace[0]["actors"])
    cmap = plt.get_cmap("tab10")
    by_tick = {snap["tick"]: snap for snap in trace}
    for i, name in enumerate(names):
        xs = [snap["actors"][name]["x"] for snap in trace]
        ys = [snap["actors"][name]["y"] for snap in trace]
        ax.plot(xs, ys, color=cmap(i % 10), linewidth=1.5, label=name)
        ax.plot(xs[0], ys[0], "o", color=cmap(i % 10), markersize=5)
    for k, tick in enumerate(run_record.get("stage_log", [])):
        snap = by_tick.get(tick) or by_tick.get(tick + 1)
        if snap is None:
            continue
        for name in names:
            a = snap["actors"][name]
            ax.plot(a["x"], a["y"], "x", color="black", markersize=6)
        ego = snap["actors"].get("ego-vehicle") or snap["actors"][names[0]]
        ax.annotate(f"S{k}", (ego["x"], ego["y"]), textcoords="offset points", xytext=(4, 6), fontsize=8)
    ax.set_aspect("equal", adjustable="datalim")
    ax.set_xlabel("x [m]")
    ax.set_ylabel("y [m]")
    ax.set_title(f"{run_record.get('verdict', '?')} - stages met {len(run_record.get('stage_log', []))}")
    ax.legend(loc="upper left", fontsize=8)
    buf = io.BytesIO()
    fig.savefig(buf, format="png", metadata={"Software": None})
    plt.close(fig)
    return buf.getvalue()
