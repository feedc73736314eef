"""Learned lexicon: named visual models and named verb macros.

Visual models pair a 9-bin semantic color histogram with a coarse size and
shape description (pixel area, elongation); recognition is nearest neighbor
under a weighted distance with a maximum-difference limit.  Teaching the
same name again adds a second model only when the new view is far enough
from the stored ones.  Everything round-trips through a line-oriented
lexicon file.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

NOVELTY_THRESHOLD = 0.15   # closer re-teaches are absorbed, not stored
MATCH_LIMIT = 0.35         # nearest neighbor beyond this is "unknown"


class LexiconError(Exception):
    pass


@dataclass
class VisualModel:
    name: str
    hist: np.ndarray   # 9 fractions
    area: float        # pixel count
    elong: float       # long/short bounding extent ratio, >= 1

    def validate(self):
        if self.area <= 0:
            raise LexiconError(f"model {self.name!r}: area must be positive")
        if self.elong < 1.0:
            raise LexiconError(f"model {self.name!r}: elongation below 1")
        if abs(float(self.hist.sum()) - 1.0) > 1e-6 or (self.hist < 0).any():
            raise LexiconError(f"model {self.name!r}: invalid histogram")


@dataclass(frozen=True)
class VerbMacro:
    name: str
    arity: int                      # 0 or 1 (indexical)
    steps: tuple[tuple[str, float], ...]   # (routine name, scalar parameter)


def _clamp01(v: float) -> float:
    return max(0.0, min(1.0, v))


def model_distance(a: VisualModel, b: VisualModel) -> float:
    """Weighted mix of histogram L1, log area ratio, and log elongation
    ratio; symmetric, zero iff equal, bounded by 1."""
    hist_term = _clamp01(float(np.abs(a.hist - b.hist).sum()) / 2.0)
    area_term = _clamp01(abs(math.log(a.area / b.area)) / math.log(4.0))
    elong_term = _clamp01(abs(math.log(a.elong / b.elong)) / math.log(4.0))
    return 0.7 * hist_term + 0.2 * area_term + 0.1 * elong_term


def model_from_percept(name: str, percept) -> VisualModel:
    blob = percept.blob
    long_e = max(blob.axial_extent, blob.perp_extent)
    short_e = max(1.0, min(blob.axial_extent, blob.perp_extent))
    model = VisualModel(name=name, hist=np.asarray(percept.hist, dtype=float),
                        area=float(blob.pixel_count), elong=long_e / short_e)
    model.validate()
    return model


class ModelStore:
    """Session-owned store of visual models and verb macros.

    Names are matched case-insensitively; the display form from teach time
    is kept for responses and the wire.
    """

    def __init__(self):
        self.models: dict[str, list[VisualModel]] = {}
        self.display: dict[str, str] = {}
        self.macros: dict[str, VerbMacro] = {}

    # ------------------------------------------------------------- naming

    def learn_name(self, name: str, percept,
                   novelty: float = NOVELTY_THRESHOLD) -> VisualModel | None:
        """Build a model from the percept; store it unless an existing model
        of that name is within the novelty threshold.  Returns the new model
        or None when the view was absorbed."""
        key = name.lower()
        model = model_from_percept(name, percept)
        existing = self.models.setdefault(key, [])
        self.display.setdefault(key, name)
        for old in existing:
            if model_distance(model, old) <= novelty:
                return None
        existing.append(model)
        return model

    def knows(self, name: str) -> bool:
        return name.lower() in self.models

    def display_name(self, name: str) -> str:
        return self.display.get(name.lower(), name)

    def recognize(self, percept, limit: float = MATCH_LIMIT) -> str | None:
        """Display name of the nearest stored model within the limit."""
        probe = model_from_percept("?", percept)
        best_name, best_d = None, limit
        for key, models in self.models.items():
            for m in models:
                d = model_distance(probe, m)
                if d <= best_d:
                    best_name, best_d = key, d
        return self.display[best_name] if best_name else None

    def find_instances(self, name: str, percepts,
                       limit: float = MATCH_LIMIT) -> list[int]:
        """Ids of every percept within the limit of any model of ``name``."""
        models = self.models.get(name.lower(), [])
        out = []
        for p in percepts:
            probe = model_from_percept("?", p)
            if any(model_distance(probe, m) <= limit for m in models):
                out.append(p.id)
        return out

    # ------------------------------------------------------------- macros

    def put_macro(self, macro: VerbMacro):
        self.macros[macro.name.lower()] = macro
        self.display.setdefault(macro.name.lower(), macro.name)

    def get_macro(self, name: str) -> VerbMacro | None:
        return self.macros.get(name.lower())

    # -------------------------------------------------------- persistence

    def save(self) -> str:
        lines = []
        for key, models in self.models.items():
            word = self.display[key].replace(" ", "_")
            for m in models:
                hist = " ".join("%.6f" % v for v in m.hist)
                lines.append(f"name {word} hist {hist} area {m.area:g} elong {m.elong:g}")
        for macro in self.macros.values():
            steps = ",".join(f"{r}:{p:g}" for r, p in macro.steps)
            lines.append(f"macro {macro.name.replace(' ', '_')} {macro.arity} {steps}")
        return "\n".join(lines) + ("\n" if lines else "")

    @classmethod
    def load(cls, text: str) -> "ModelStore":
        store = cls()
        for lineno, raw in enumerate(text.splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            try:
                if parts[0] == "name":
                    if parts[2] != "hist" or parts[12] != "area" or parts[14] != "elong":
                        raise ValueError("bad field layout")
                    name = parts[1].replace("_", " ")
                    model = VisualModel(
                        name=name,
                        hist=np.array([float(v) for v in parts[3:12]]),
                        area=float(parts[13]), elong=float(parts[15]))
                    model.validate()
                    key = name.lower()
                    store.models.setdefault(key, []).append(model)
                    store.display.setdefault(key, name)
                elif parts[0] == "macro":
                    steps = []
                    for step in parts[3].split(","):
                        routine, param = step.split(":")
                        steps.append((routine, float(param)))
                    name = parts[1].replace("_", " ")
                    store.put_macro(VerbMacro(name=name, arity=int(parts[2]),
                                              steps=tuple(steps)))
                else:
                    raise ValueError(f"unknown record {parts[0]!r}")
            except LexiconError:
                raise
            except (ValueError, IndexError) as exc:
                raise LexiconError(f"line {lineno}: {exc}") from exc
        return store
