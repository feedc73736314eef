"""Golden-script replay.

Script files drive a session and pin its outputs line by line:

    #scene <file>      load a scene (resets world and discourse)
    #lexicon <file>    load a lexicon file into the session
    U: <text>          one utterance
    !point <id>        synthesized human point at a percept
    !transfer          synthesized click in the transfer zone
    R: <text>          expected spoken response, in order
    P: <id>            expected pointing target
    X: <summary>       expected action outcome

Replay is strict in both directions: missing and unexpected output lines are
both mismatches, so a passing script is a byte-exact transcript.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from . import worldsim as ws
from .session import Response, Session


@dataclass
class ScriptResult:
    failures: list[str] = field(default_factory=list)
    transcript: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.failures


def render_responses(responses: list[Response]) -> list[str]:
    lines = []
    for r in responses:
        if r.say is not None:
            lines.append(f"R: {r.say}")
        if r.point_at is not None:
            lines.append(f"P: {r.point_at}")
        if r.executed is not None:
            lines.append(f"X: {r.executed}")
    return lines


def _data_text(kind: str, name: str, search: list[Path]) -> str:
    for root in search:
        candidate = root / name
        if candidate.exists():
            return candidate.read_text()
    return (resources.files("tabletalk") / "data" / kind / name).read_text()


def run_script(text: str, make_session=None, search_paths: list[Path] | None = None
               ) -> ScriptResult:
    """Replay one script; ``make_session`` builds the session from the first
    scene (hook for wiring in a supervisor client or custom config)."""
    make_session = make_session or (lambda scene: Session(scene))
    search = search_paths or []
    result = ScriptResult()
    session: Session | None = None
    emitted: list[str] = []

    def flush_expectations():
        for line in emitted:
            result.failures.append(f"unexpected output: {line}")
        emitted.clear()

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("##"):
            continue
        if line.startswith("#scene "):
            flush_expectations()
            scene = ws.load_scene(_data_text("scenes", line.split(None, 1)[1], search))
            if session is None:
                session = make_session(scene)
            else:
                session.load_scene(scene)
            result.transcript.append(line)
        elif line.startswith("#lexicon "):
            flush_expectations()
            session.load_lexicon(_data_text("lexicons", line.split(None, 1)[1], search))
            result.transcript.append(line)
        elif line.startswith("U: "):
            flush_expectations()
            utterance = line[3:]
            result.transcript.append(line)
            out = render_responses(session.handle_utterance(utterance))
            emitted.extend(out)
            result.transcript.extend(out)
        elif line == "!transfer":
            flush_expectations()
            result.transcript.append(line)
            out = render_responses(session.gesture_transfer())
            emitted.extend(out)
            result.transcript.extend(out)
        elif line.startswith("!point "):
            flush_expectations()
            result.transcript.append(line)
            out = render_responses(session.gesture_point(int(line.split()[1])))
            emitted.extend(out)
            result.transcript.extend(out)
        elif line[:3] in ("R: ", "P: ", "X: ") or line in ("R:", "P:", "X:"):
            if not emitted:
                result.failures.append(f"line {lineno}: expected {line!r}, got nothing")
            else:
                got = emitted.pop(0)
                if got != line:
                    result.failures.append(
                        f"line {lineno}: expected {line!r}, got {got!r}")
        else:
            result.failures.append(f"line {lineno}: unknown directive {line!r}")
    flush_expectations()
    return result
