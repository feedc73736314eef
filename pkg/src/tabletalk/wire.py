"""Session wire protocol.

Full-duplex newline-delimited JSON over TCP, one session per connection.

Engine to client: ``state`` (base64 PNG frame plus percept overlays, the
held object, and the last action), ``say``, ``ask``, ``point {id}``,
``macro_state``, ``error``.  Client to engine: ``utter {text}``,
``click {x, y}`` (the engine synthesizes a real pointing-gesture frame
sequence), ``transfer_click``, ``reset``, ``load_scene {name}``.
"""

from __future__ import annotations

import base64
import io
import json
import logging
import socketserver
import threading
from importlib import resources

from PIL import Image

from . import worldsim as ws
from .session import Response, Session

logger = logging.getLogger(__name__)


def _png_b64(frame) -> str:
    buf = io.BytesIO()
    Image.fromarray(frame).save(buf, format="PNG")
    return base64.b64encode(buf.getvalue()).decode()


def state_message(session: Session, last_action: str | None = None) -> dict:
    percepts = session.perceive_now()
    return {
        "type": "state",
        "frame": _png_b64(session.render()),
        "width": session.cfg.camera.width,
        "height": session.cfg.camera.height,
        "percepts": [{
            "id": p.id,
            "bbox": list(p.blob.bbox),
            "base_pt": [round(v, 1) for v in p.blob.base_pt],
            "dominant": p.dominant,
            "name": p.name,
        } for p in percepts],
        "held": session.world.held,
        "clock": session.world.clock,
        "recording": session.recorder.open,
        "last_action": last_action,
        "transfer_zone": [session.cfg.transfer_zone.x0, session.cfg.transfer_zone.y0,
                          session.cfg.transfer_zone.x1, session.cfg.transfer_zone.y1],
    }


def response_messages(responses: list[Response]) -> list[dict]:
    msgs: list[dict] = []
    for r in responses:
        if r.say is not None:
            kind = "ask" if r.asks else "say"
            msgs.append({"type": kind, "text": r.say})
        if r.point_at is not None:
            msgs.append({"type": "point", "id": r.point_at})
    return msgs


class SessionServer:
    """One engine session per connection; messages handled in arrival order."""

    def __init__(self, make_session, host: str = "127.0.0.1", port: int = 0):
        outer = self

        class Handler(socketserver.StreamRequestHandler):
            def handle(self):
                session = make_session()
                send_lock = threading.Lock()

                def send(msg: dict):
                    with send_lock:
                        self.wfile.write((json.dumps(msg) + "\n").encode())
                        self.wfile.flush()

                try:
                    send(state_message(session))
                    for raw in self.rfile:
                        try:
                            outer._dispatch(session, json.loads(raw.decode()), send)
                        except (ValueError, KeyError, TypeError) as exc:
                            logger.warning("bad message: %s", exc)
                            send({"type": "error", "message": str(exc)})
                except (OSError, BrokenPipeError):
                    pass

        class Server(socketserver.ThreadingTCPServer):
            allow_reuse_address = True
            daemon_threads = True

        self._server = Server((host, port), Handler)
        self.address = self._server.server_address
        self._thread: threading.Thread | None = None

    def _dispatch(self, session: Session, msg: dict, send):
        kind = msg["type"]
        last_action = None
        was_recording = session.recorder.open
        if kind == "utter":
            responses = session.handle_utterance(str(msg["text"]))
        elif kind == "click":
            responses = session.gesture_point((float(msg["x"]), float(msg["y"])))
        elif kind == "transfer_click":
            responses = session.gesture_transfer()
        elif kind == "reset":
            session.load_scene(session.initial_scene)
            responses = []
        elif kind == "load_scene":
            name = str(msg["name"])
            text = (resources.files("tabletalk") / "data" / "scenes" / name).read_text()
            session.load_scene(ws.load_scene(text))
            responses = []
        else:
            raise ValueError(f"unknown message type {kind!r}")
        for out in response_messages(responses):
            send(out)
        for r in responses:
            if r.executed is not None:
                last_action = r.executed
        if session.recorder.open != was_recording:
            send({"type": "macro_state", "open": session.recorder.open,
                  "pending": session.recorder.pending_name,
                  "steps": len(session.recorder.steps)})
        send(state_message(session, last_action))

    def start(self):
        self._thread = threading.Thread(target=self._server.serve_forever, daemon=True)
        self._thread.start()
        return self

    def stop(self):
        self._server.shutdown()
        self._server.server_close()
