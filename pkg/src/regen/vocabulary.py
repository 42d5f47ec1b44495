"""Canonical location phrases and the regions they denote.

A region is described relative to an anchor: the ego reference path
(``ego``), an approach lane of the intersection (``approach``), the owner's own
start pose (``start``) or another actor (``attached``).  The solver turns
regions into candidate poses on a concrete map.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional


@dataclass(frozen=True)
class Region:
    anchor: str  # "ego" | "approach" | "exit" | "start" | "attached"
    lane: str  # ego: same/adjacent/sidewalk; approach/exit: left/right; attached: asset id
    lo: float = 0.0  # offset interval in meters along the anchor path
    hi: float = 0.0


@dataclass(frozen=True)
class Phrase:
    start: Optional[Region]
    end: Optional[Region]


def _ego(lane, start, end):
    return Phrase(Region("ego", lane, *start) if start else None, Region("ego", lane, *end) if end else None)


BEHIND = (-40.0, -10.0)
AHEAD_START = (10.0, 40.0)
AHEAD_END = (40.0, 120.0)

VOCABULARY: dict[str, Phrase] = {
    "behind the ego-vehicle on same lane": _ego("same", BEHIND, BEHIND),
    "behind the ego-vehicle on adjacent lane": _ego("adjacent", BEHIND, BEHIND),
    "in front of ego-vehicle on same lane": _ego("same", AHEAD_START, AHEAD_END),
    "in front of ego-vehicle on adjacent lane": _ego("adjacent", AHEAD_START, AHEAD_END),
    "on the sidewalk in front of ego-vehicle": _ego("sidewalk", (15.0, 40.0), (15.0, 40.0)),
    "across the road from its starting location": Phrase(None, Region("start", "across")),
    "approaching the intersection from the left": Phrase(Region("approach", "left", 10.0, 40.0), None),
    "approaching the intersection from the right": Phrase(Region("approach", "right", 10.0, 40.0), None),
    "past the intersection": Phrase(None, Region("exit", "straight", 20.0, 60.0)),
    "on the truck": Phrase(Region("attached", "truck"), None),
}

LOCATION_KEYS = ("starting location", "ending location")


def is_location_phrase(phrase: str, role: str) -> bool:
    p = VOCABULARY.get(phrase)
    if p is None:
        return False
    return (p.start if role == "starting location" else p.end) is not None


def region_for(phrase: str, role: str) -> Region:
    p = VOCABULARY.get(phrase)
    region = None if p is None else (p.start if role == "starting location" else p.end)
    if region is None:
        raise KeyError(f"unknown {role} phrase {phrase!r}")
    return region
