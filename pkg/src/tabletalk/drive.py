"""Motivation calculus over situation-event-action triples.

Triples form only when their event is currently interesting.  Stored triples
then serve three ways: as affordance detectors that latch a desire for the
event when its situation holds, as policies proposing the action when both
the desire and situation hold, and as backward chains that make the
situation's conjuncts temporarily interesting so subgoals get learned.
Driven here from a symbolic event-stream script with a golden trace log.
"""

from __future__ import annotations

from dataclasses import dataclass, field

INTEREST_THRESHOLD = 0.5
TEMP_INTEREST_TICKS = 20


@dataclass(frozen=True)
class SEATriple:
    situation: frozenset[str]
    event: str
    action: str

    def __str__(self) -> str:
        return f"<{'&'.join(sorted(self.situation))} ; {self.event} ; {self.action}>"


@dataclass
class InterestTable:
    """Base interest per token plus temporarily interesting tokens that
    decay after a fixed number of ticks."""

    base: dict[str, float] = field(default_factory=dict)
    temp: dict[str, int] = field(default_factory=dict)
    decay: int = TEMP_INTEREST_TICKS

    def score(self, token: str) -> float:
        if token in self.temp:
            return max(1.0, self.base.get(token, 0.0))
        return self.base.get(token, 0.0)

    def set_base(self, token: str, score: float):
        self.base[token] = score

    def boost(self, token: str) -> bool:
        fresh = token not in self.temp
        self.temp[token] = self.decay
        return fresh

    def tick(self, n: int = 1) -> list[str]:
        expired = []
        for _ in range(n):
            for token in list(self.temp):
                self.temp[token] -= 1
                if self.temp[token] <= 0:
                    del self.temp[token]
                    expired.append(token)
        return expired


@dataclass
class SEAStore:
    triples: list[SEATriple] = field(default_factory=list)

    def __contains__(self, t: SEATriple) -> bool:
        return t in self.triples


def observe(store: SEAStore, situation: frozenset[str], event: str, action: str,
            interest: InterestTable,
            threshold: float = INTEREST_THRESHOLD) -> SEATriple | None:
    """Record the triple iff the event is interesting enough now; duplicates
    are not re-added.  Returns the stored triple or None."""
    if interest.score(event) < threshold:
        return None
    t = SEATriple(situation, event, action)
    if t in store:
        return None
    store.triples.append(t)
    return t


def afford(store: SEAStore, current: frozenset[str], interest: InterestTable,
           directives: set[str],
           threshold: float = INTEREST_THRESHOLD) -> list[str]:
    """Latch a desire for every stored event whose situation holds and whose
    interest is still high.  Returns the newly latched events."""
    latched = []
    for t in store.triples:
        if t.situation <= current and interest.score(t.event) >= threshold:
            if t.event not in directives:
                directives.add(t.event)
                latched.append(t.event)
    return latched


def propose(store: SEAStore, directives: set[str],
            current: frozenset[str]) -> list[str]:
    """Actions from triples whose event is desired and situation holds, in
    store order.  Never fires with an unmet situation."""
    return [t.action for t in store.triples
            if t.event in directives and t.situation <= current]


def backchain(store: SEAStore, directives: set[str],
              interest: InterestTable) -> list[str]:
    """Make every conjunct of a desired event's situations temporarily
    interesting; returns the freshly boosted tokens in first-seen order."""
    boosted = []
    for t in store.triples:
        if t.event in directives:
            for token in sorted(t.situation):
                if interest.boost(token):
                    boosted.append(token)
    return boosted


# ------------------------------------------------------------ script driver

def _parse_obs(parts: list[str]):
    fields = {}
    for part in parts:
        key, _, val = part.partition(":")
        fields[key] = val
    situation = frozenset(tok for tok in fields["s"].split("&") if tok)
    return situation, fields["e"], fields["a"], float(fields["i"])


def run_script(text: str) -> list[str]:
    """Execute an event-stream script and return the trace log.

    Records: ``obs s:<a&b> e:<ev> a:<act> i:<f>`` plus the commands ``sit``,
    ``interest <tok> <f>``, ``afford``, ``propose``, ``backchain``, and
    ``tick <n>``.
    """
    store = SEAStore()
    interest = InterestTable()
    directives: set[str] = set()
    current: frozenset[str] = frozenset()
    trace: list[str] = []

    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        cmd = parts[0]
        if cmd == "obs":
            situation, event, action, score = _parse_obs(parts[1:])
            interest.set_base(event, score)
            stored = observe(store, situation, event, action, interest)
            if stored is not None:
                trace.append(f"store {stored}")
            elif interest.score(event) < INTEREST_THRESHOLD:
                trace.append(f"skip {event} interest={interest.score(event):g}")
            else:
                trace.append(f"dup {SEATriple(situation, event, action)}")
        elif cmd == "sit":
            current = frozenset(parts[1:])
        elif cmd == "interest":
            interest.set_base(parts[1], float(parts[2]))
        elif cmd == "afford":
            for event in afford(store, current, interest, directives):
                trace.append(f"latch {event}")
        elif cmd == "propose":
            actions = propose(store, directives, current)
            trace.append("propose " + (" ".join(actions) if actions else "-"))
        elif cmd == "backchain":
            for token in backchain(store, directives, interest):
                trace.append(f"interest+ {token} {interest.decay}")
        elif cmd == "tick":
            for token in interest.tick(int(parts[1]) if len(parts) > 1 else 1):
                trace.append(f"interest- {token}")
        elif cmd == "clear":
            # explicit satisfy/clear: the only way a directive unlatches
            for event in parts[1:]:
                if event in directives:
                    directives.discard(event)
                    trace.append(f"unlatch {event}")
        else:
            raise ValueError(f"unknown drive-script command {cmd!r}")
    return trace
