"""Referent resolution.

Maps a parsed noun phrase (learned name, colors, size/position superlatives,
pronouns, pointing gestures) onto the current percepts, consulting the
discourse record for "it" and "the other one".
"""

from __future__ import annotations

from dataclasses import dataclass, field

from . import gesture

# Grammar color words that differ from the perception bin names.
COLOR_ALIASES = {"purple": "violet", "grey": "gray"}
POSITION_ALIASES = {"left": "leftmost", "right": "rightmost",
                    "middle": "middle", "center": "middle"}
SIZE_ALIASES = {"big": "biggest", "small": "smallest"}

EXPANDED_COLOR_MIN = 0.15  # "at least some red": hist bin above this matches

from .percept import COLOR_BINS

_BIN_INDEX = {name: i for i, name in enumerate(COLOR_BINS)}


@dataclass
class DiscourseState:
    last_referent: int | None = None
    last_candidates: set[int] = field(default_factory=set)
    last_suggested: int | None = None


@dataclass(frozen=True)
class ReferenceQuery:
    name: str | None = None
    colors: tuple[str, ...] = ()
    size_rank: str | None = None   # "biggest" | "smallest"
    pos_rank: str | None = None    # "leftmost" | "rightmost" | "middle"
    pronoun: str | None = None     # "it" | "other"
    pointed: tuple[float, float] | None = None  # gesture click, image px


@dataclass(frozen=True)
class Resolution:
    outcome: str                # "unique" | "ambiguous" | "none"
    ids: tuple[int, ...] = ()

    @property
    def id(self) -> int:
        assert self.outcome == "unique"
        return self.ids[0]


def filter_color(percepts, color: str):
    """Keep objects described with the color, or with at least some of it
    (hist bin above the expanded-match threshold)."""
    color = COLOR_ALIASES.get(color, color)
    idx = _BIN_INDEX[color]
    return [p for p in percepts
            if color in p.dominant or p.hist[idx] > EXPANDED_COLOR_MIN]


def rank_position(percepts, which: str):
    """Leftmost/rightmost by base-point x; middle is nearest the mean of the
    two extremes.  Ties break toward the smaller id."""
    if not percepts:
        return None
    if which == "leftmost":
        return min(percepts, key=lambda p: (p.blob.base_pt[0], p.id))
    if which == "rightmost":
        return max(percepts, key=lambda p: (p.blob.base_pt[0], -p.id))
    lo = min(p.blob.base_pt[0] for p in percepts)
    hi = max(p.blob.base_pt[0] for p in percepts)
    mid = (lo + hi) / 2.0
    return min(percepts, key=lambda p: (abs(p.blob.base_pt[0] - mid), p.id))


def rank_size(percepts, which: str):
    """Biggest/smallest by blob pixel count over the already-filtered set;
    a ranking, never an absolute threshold."""
    if not percepts:
        return None
    if which == "biggest":
        return max(percepts, key=lambda p: (p.blob.pixel_count, -p.id))
    return min(percepts, key=lambda p: (p.blob.pixel_count, p.id))


def resolve(query: ReferenceQuery, percepts, discourse: DiscourseState,
            lexicon=None) -> Resolution:
    """Filter pipeline: name, color, rank, then pronoun/gesture logic.

    A unique result updates the discourse's last referent.  Ambiguity and
    absence are encoded in the outcome, never raised.
    """
    cands = list(percepts)

    if query.name is not None and lexicon is not None:
        ids = set(lexicon.find_instances(query.name, cands))
        cands = [p for p in cands if p.id in ids]

    for color in query.colors:
        cands = filter_color(cands, color)

    if query.pointed is not None:
        picked = gesture.select_object(query.pointed, percepts)
        cands = [p for p in cands if p.id == picked]
    elif query.pronoun == "it":
        if len(percepts) == 1:
            cands = [p for p in cands if p.id == percepts[0].id]
        elif discourse.last_referent is not None:
            cands = [p for p in cands if p.id == discourse.last_referent]
        # else: every candidate stays live and the outcome is ambiguous
    elif query.pronoun == "other":
        remaining = discourse.last_candidates - {discourse.last_suggested}
        cands = [p for p in cands if p.id in remaining]

    if query.pos_rank:
        pick = rank_position(cands, POSITION_ALIASES.get(query.pos_rank, query.pos_rank))
        cands = [pick] if pick else []
    if query.size_rank:
        pick = rank_size(cands, SIZE_ALIASES.get(query.size_rank, query.size_rank))
        cands = [pick] if pick else []

    if not cands:
        return Resolution("none")
    if len(cands) == 1:
        discourse.last_referent = cands[0].id
        return Resolution("unique", (cands[0].id,))
    return Resolution("ambiguous", tuple(sorted(p.id for p in cands)))
