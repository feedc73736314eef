"""Supervisory action vetting over semantic triples.

Proposed actions are serialized as subject-predicate-object triples and
shipped over a newline-delimited TCP protocol to a reference supervisor that
consults a patient restriction database, a dose lifelog, and a small term
taxonomy, answering accept, veto (with a reason), or a counter-proposal of a
visible alternative.

Wire format, one frame per proposal::

    PROPOSE <id>
    T <subject> <predicate> <object>     (one line per triple)
    END

Replies: ``ACCEPT <id>`` | ``VETO <id> <reason...>`` |
``COUNTER <id> <alt> <reason...>`` | ``ERR <reason...>``.
Tokens use underscores in place of embedded spaces.
"""

from __future__ import annotations

import logging
import socket
import socketserver
import threading
import time
from dataclasses import dataclass, field

logger = logging.getLogger(__name__)

MIN_DOSE_INTERVAL = 4 * 3600.0  # seconds of session time between doses


class ProtocolError(Exception):
    pass


@dataclass(frozen=True)
class Triple:
    subject: str
    predicate: str
    object: str

    def __post_init__(self):
        if not (self.subject and self.predicate and self.object):
            raise ProtocolError("triple fields must be nonempty")


@dataclass(frozen=True)
class Verdict:
    kind: str                 # "accept" | "veto" | "counter"
    reason: str = ""
    alternative: str = ""


def _tok(text: str) -> str:
    return text.replace(" ", "_")


def _untok(text: str) -> str:
    return text.replace("_", " ")


def encode_proposal(action: str, object_name: str | None, obj_index: int | None,
                    scene_names: list[str], act_id: int,
                    give: bool = False) -> list[Triple]:
    """Triples for one proposed action: its type, object binding, the
    object's name (or "unknown"), a recipient for give actions, and one
    scene-contents triple per recognized visible item."""
    act = f"act-{act_id}"
    obj = f"obj-{obj_index}" if obj_index is not None else "obj-0"
    triples = [Triple(act, "type", _tok(action)), Triple(act, "object", obj),
               Triple(obj, "name", _tok(object_name) if object_name else "unknown")]
    if give:
        triples.append(Triple(act, "recipient", "user"))
    for name in scene_names:
        triples.append(Triple("scene", "contains", _tok(name)))
    return triples


# ------------------------------------------------------- knowledge sources

@dataclass
class PatientDB:
    restrictions: dict[str, str] = field(default_factory=dict)  # substance -> reason

    @classmethod
    def load(cls, text: str) -> "PatientDB":
        db = cls()
        for raw in text.splitlines():
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            term, _, reason = line.partition("\t")
            if not reason:
                term, _, reason = line.partition(" ")
            db.restrictions[term.strip().lower()] = reason.strip()
        return db

    def restriction(self, name: str) -> str | None:
        return self.restrictions.get(name.lower())


@dataclass
class LifeLog:
    events: list[tuple[float, str, str]] = field(default_factory=list)

    def append(self, when: float, event: str, detail: str):
        if self.events and when < self.events[-1][0]:
            raise ValueError("lifelog times must be nondecreasing")
        self.events.append((when, event, detail))

    def last(self, event: str, detail: str) -> float | None:
        detail = detail.lower()
        for when, ev, d in reversed(self.events):
            if ev == event and d.lower() == detail:
                return when
        return None

    def dump(self) -> str:
        return "".join(f"{when:g}\t{ev}\t{detail}\n" for when, ev, detail in self.events)

    @classmethod
    def load(cls, text: str) -> "LifeLog":
        log = cls()
        for raw in text.splitlines():
            if not raw.strip():
                continue
            when, ev, detail = raw.split("\t")
            log.append(float(when), ev, detail)
        return log


@dataclass
class Taxonomy:
    parents: dict[str, str] = field(default_factory=dict)  # term -> parent

    @classmethod
    def load(cls, text: str) -> "Taxonomy":
        tax = cls()
        for raw in text.splitlines():
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            term, parent = line.split()
            tax.parents[term.lower()] = parent.lower()
        return tax

    def chain(self, term: str) -> list[str]:
        out = []
        cur = term.lower()
        while cur in self.parents and self.parents[cur] not in out:
            cur = self.parents[cur]
            out.append(cur)
        return out


# ------------------------------------------------------------------ vetting

def _proposal_fields(triples: list[Triple]):
    action = obj_ref = name = None
    recipient = False
    scene = []
    for t in triples:
        if t.predicate == "type":
            action = t.object
        elif t.predicate == "object":
            obj_ref = t.object
        elif t.predicate == "name":
            name = _untok(t.object)
        elif t.predicate == "recipient":
            recipient = True
        elif t.subject == "scene" and t.predicate == "contains":
            scene.append(_untok(t.object))
    if action is None or obj_ref is None or name is None:
        raise ProtocolError("proposal lacks type/object/name triples")
    return action, name, recipient, scene


def vet(triples: list[Triple], db: PatientDB, log: LifeLog, taxonomy: Taxonomy,
        now: float, min_interval: float = MIN_DOSE_INTERVAL) -> Verdict:
    """Accept, veto, or counter-propose one action.

    A restricted substance is vetoed with its restriction text; a substance
    dosed within the minimum interval is vetoed as a recent dose; a name not
    visible in the scene is countered with a visible item sharing a taxonomy
    category when one exists.  Accepted give actions are logged as doses.
    """
    action, name, recipient, scene = _proposal_fields(triples)
    lname = name.lower()

    reason = db.restriction(lname)
    if reason is not None:
        return Verdict("veto", reason=reason)

    last = log.last("dose", lname)
    if last is not None and now - last < min_interval:
        return Verdict("veto", reason=f"You just had {name}.")

    visible = {s.lower(): s for s in scene}
    if lname not in visible and lname != "unknown":
        want = taxonomy.chain(lname)
        best = None  # (specificity rank of shared category, category, item)
        for vis_l, vis in visible.items():
            shared = set(want).intersection(taxonomy.chain(vis_l))
            if shared:
                rank, category = min((want.index(c), c) for c in shared)
                if best is None or rank < best[0]:
                    best = (rank, category, vis)
        if best is not None:
            return Verdict("counter", alternative=best[2],
                           reason=f"another {best[1]}")

    if recipient and lname != "unknown":
        log.append(now, "dose", lname)
    return Verdict("accept")


# --------------------------------------------------------------- transport

def format_frame(act_id: int, triples: list[Triple]) -> str:
    lines = [f"PROPOSE {act_id}"]
    lines += [f"T {t.subject} {t.predicate} {t.object}" for t in triples]
    lines.append("END")
    return "\n".join(lines) + "\n"


def parse_reply(line: str) -> tuple[int, Verdict]:
    parts = line.strip().split(" ", 2)
    if parts[0] == "ACCEPT":
        return int(parts[1]), Verdict("accept")
    if parts[0] == "VETO":
        return int(parts[1]), Verdict("veto", reason=parts[2] if len(parts) > 2 else "")
    if parts[0] == "COUNTER":
        alt, _, reason = parts[2].partition(" ")
        return int(parts[1]), Verdict("counter", alternative=_untok(alt), reason=reason)
    raise ProtocolError(f"bad reply {line!r}")


class SupervisorServer:
    """Reference supervisor: one request at a time per connection, any
    number of connections, lifelog writes serialized."""

    def __init__(self, db: PatientDB, log: LifeLog, taxonomy: Taxonomy,
                 host: str = "127.0.0.1", port: int = 0,
                 clock=None, min_interval: float = MIN_DOSE_INTERVAL):
        self.db, self.log, self.taxonomy = db, log, taxonomy
        self.clock = clock or time.monotonic
        self.min_interval = min_interval
        self._lock = threading.Lock()
        outer = self

        class Handler(socketserver.StreamRequestHandler):
            def handle(self):
                while True:
                    try:
                        head = self.rfile.readline()
                    except OSError:
                        return
                    if not head:
                        return
                    reply = outer._handle_frame(head, self.rfile)
                    try:
                        self.wfile.write(reply.encode())
                        self.wfile.flush()
                    except OSError:
                        return

        class Server(socketserver.ThreadingTCPServer):
            allow_reuse_address = True
            daemon_threads = True

        self._server = Server((host, port), Handler)
        self.address = self._server.server_address
        self._thread: threading.Thread | None = None

    def _handle_frame(self, head: bytes, rfile) -> str:
        try:
            head_parts = head.decode().split()
            if len(head_parts) != 2 or head_parts[0] != "PROPOSE":
                raise ProtocolError(f"expected PROPOSE header, got {head.decode()!r}")
            act_id = int(head_parts[1])
            triples = []
            while True:
                line = rfile.readline()
                if not line:
                    raise ProtocolError("connection closed mid-frame")
                text = line.decode().strip()
                if text == "END":
                    break
                parts = text.split()
                if len(parts) != 4 or parts[0] != "T":
                    raise ProtocolError(f"bad triple line {text!r}")
                triples.append(Triple(parts[1], parts[2], parts[3]))
            with self._lock:
                verdict = vet(triples, self.db, self.log, self.taxonomy,
                              now=self.clock(), min_interval=self.min_interval)
        except (ProtocolError, ValueError, UnicodeDecodeError) as exc:
            logger.warning("protocol error: %s", exc)
            return f"ERR {exc}\n"
        if verdict.kind == "accept":
            return f"ACCEPT {act_id}\n"
        if verdict.kind == "veto":
            return f"VETO {act_id} {verdict.reason}\n"
        return f"COUNTER {act_id} {_tok(verdict.alternative)} {verdict.reason}\n"

    def start(self):
        self._thread = threading.Thread(target=self._server.serve_forever,
                                        daemon=True)
        self._thread.start()
        return self

    def stop(self):
        self._server.shutdown()
        self._server.server_close()


FALLBACK_VERDICT = Verdict("accept", reason="supervisor unavailable; local-only mode")


class SupervisorClient:
    """Engine-side client.  A timeout or connection failure yields the
    configured fallback verdict instead of blocking the session."""

    def __init__(self, host: str, port: int, timeout: float = 2.0,
                 fallback: Verdict = FALLBACK_VERDICT):
        self.host, self.port = host, port
        self.timeout = timeout
        self.fallback = fallback
        self._sock: socket.socket | None = None
        self._file = None

    def _connect(self):
        if self._sock is None:
            self._sock = socket.create_connection((self.host, self.port),
                                                  timeout=self.timeout)
            self._file = self._sock.makefile("rb")

    def submit(self, act_id: int, triples: list[Triple]) -> Verdict:
        try:
            self._connect()
            self._sock.sendall(format_frame(act_id, triples).encode())
            line = self._file.readline()
            if not line:
                raise ProtocolError("supervisor closed the connection")
            text = line.decode().strip()
            if text.startswith("ERR"):
                raise ProtocolError(text)
            _, verdict = parse_reply(text)
            return verdict
        except (OSError, ProtocolError, ValueError) as exc:
            logger.warning("supervisor unavailable (%s); using fallback", exc)
            self.close()
            return self.fallback

    def close(self):
        if self._sock is not None:
            try:
                self._sock.close()
            finally:
                self._sock = None
                self._file = None
