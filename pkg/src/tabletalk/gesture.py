"""Pointing and handoff detection from frame differences.

The user's hand is assumed to enter from the lower-left; background
subtraction yields a motion mask whose far bounding-box corner acts as a
mouse pointer.  A click is declared when the pointer holds still or shrinks
back toward the corner.  Clicks inside a configured transfer zone drive the
object-handoff phases instead of selection.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage


@dataclass(frozen=True)
class GestureConfig:
    diff_threshold: int = 25
    open_kernel: int = 3
    hold_frames: int = 3       # consecutive small-displacement frames for a click
    hold_eps: float = 3.0      # px
    retreat_hysteresis: float = 10.0  # px shrink-back that also clicks
    handoff_timeout: int = 600  # frames between release and regrasp


@dataclass
class BackgroundModel:
    snapshot: np.ndarray
    taken_at: int = 0


@dataclass(frozen=True)
class GestureEvent:
    kind: str                  # "point_click" | "transfer_click"
    at: tuple[float, float]
    when: int


def motion_mask(bg: np.ndarray, frame: np.ndarray,
                cfg: GestureConfig = GestureConfig()) -> np.ndarray:
    """Set where any channel differs from the background beyond threshold,
    then opened to kill sensor noise."""
    diff = np.abs(frame.astype(np.int16) - bg.astype(np.int16)).max(axis=2)
    mask = diff > cfg.diff_threshold
    kernel = np.ones((cfg.open_kernel, cfg.open_kernel), dtype=bool)
    return ndimage.binary_opening(mask, structure=kernel)


class PointerTracker:
    """Per-session pointer state machine.

    Feed one motion mask per frame; at most one click comes out per
    advance/retreat cycle, after which an empty mask resets the tracker.
    """

    def __init__(self, cfg: GestureConfig = GestureConfig()):
        self.cfg = cfg
        self.state = "idle"
        self.history: list[tuple[int, tuple[float, float]]] = []
        self._max_dist = 0.0
        self._apex: tuple[float, float] | None = None
        self._still = 0
        self._frame = 0

    def reset(self):
        self.state = "idle"
        self.history.clear()
        self._max_dist = 0.0
        self._apex = None
        self._still = 0

    def update(self, mask: np.ndarray) -> GestureEvent | None:
        self._frame += 1
        if not mask.any():
            self.reset()
            return None
        if self.state == "clicked":
            return None

        h, w = mask.shape
        origin = (0.0, float(h - 1))
        ys, xs = np.nonzero(mask)
        x0, x1 = float(xs.min()), float(xs.max())
        y0, y1 = float(ys.min()), float(ys.max())
        corner = max(((x0, y0), (x1, y0), (x0, y1), (x1, y1)),
                     key=lambda c: math.hypot(c[0] - origin[0], c[1] - origin[1]))
        dist = math.hypot(corner[0] - origin[0], corner[1] - origin[1])

        prev = self.history[-1][1] if self.history else None
        self.history.append((self._frame, corner))
        self.state = "advancing"
        if dist > self._max_dist:
            self._max_dist = dist
            self._apex = corner

        if prev is not None:
            if math.hypot(corner[0] - prev[0], corner[1] - prev[1]) < self.cfg.hold_eps:
                self._still += 1
            else:
                self._still = 0
            if self._still >= self.cfg.hold_frames:
                self.state = "clicked"
                return GestureEvent("point_click", corner, self._frame)
            if self._max_dist - dist > self.cfg.retreat_hysteresis:
                self.state = "clicked"
                return GestureEvent("point_click", self._apex, self._frame)
        return None


def select_object(click: tuple[float, float], percepts) -> int | None:
    """Nearest object by axis-parallel bounding box distance (0 inside);
    ties break toward the smaller id."""
    if not percepts:
        return None
    px, py = click

    def bbox_dist(p):
        x0, y0, x1, y1 = p.blob.bbox
        dx = max(x0 - px, 0.0, px - x1)
        dy = max(y0 - py, 0.0, py - y1)
        return math.hypot(dx, dy)

    best = min(percepts, key=lambda p: (bbox_dist(p), p.id))
    return best.id


@dataclass(frozen=True)
class Zone:
    x0: float
    y0: float
    x1: float
    y1: float

    def contains(self, pt: tuple[float, float]) -> bool:
        return self.x0 <= pt[0] <= self.x1 and self.y0 <= pt[1] <= self.y1

    def center(self) -> tuple[float, float]:
        return ((self.x0 + self.x1) / 2.0, (self.y0 + self.y1) / 2.0)


class HandoffMonitor:
    """Sequences transfer-zone clicks into release / regrasp / abort phases.

    The first in-zone click releases the carried object, the second regrasps
    it; a missing second click within the timeout aborts the handoff and the
    monitor resets either way.
    """

    def __init__(self, zone: Zone, cfg: GestureConfig = GestureConfig()):
        self.zone = zone
        self.cfg = cfg
        self.phase = "idle"   # idle -> released -> idle
        self._released_at = 0

    def arm(self):
        self.phase = "armed"

    def update(self, event: GestureEvent | None, now: int) -> str | None:
        if self.phase == "released" and now - self._released_at > self.cfg.handoff_timeout:
            self.phase = "idle"
            return "abort"
        if event is None or not self.zone.contains(event.at):
            return None
        if self.phase in ("idle", "armed"):
            self.phase = "released"
            self._released_at = event.when
            return "release"
        if self.phase == "released":
            self.phase = "idle"
            return "regrasp"
        return None
