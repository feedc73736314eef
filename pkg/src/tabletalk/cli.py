"""Command line entry points.

``repl``       interactive session (or ``--script`` golden replay)
``serve``      session wire-protocol server for UI clients
``supervise``  reference supervisor with patient DB, lifelog, and taxonomy
``drive``      motivation engine over an event-stream script
``inspect``    render a scene and dump percept overlays and a JSON report
"""

from __future__ import annotations

import argparse
import sys
import time
from importlib import resources
from pathlib import Path

from . import drive as drive_mod
from . import percept as pc
from . import supervisor as sup
from . import worldsim as ws
from .script import render_responses, run_script
from .session import Session, SessionConfig


def _read(path_or_name: str, kind: str) -> str:
    p = Path(path_or_name)
    if p.exists():
        return p.read_text()
    return (resources.files("tabletalk") / "data" / kind / path_or_name).read_text()


def _supervisor_client(spec: str | None):
    if spec in (None, "off"):
        return None
    host, _, port = spec.partition(":")
    return sup.SupervisorClient(host or "127.0.0.1", int(port))


def _session_args(p: argparse.ArgumentParser):
    p.add_argument("--scene", default="quad.scn", help="scene file or bundled name")
    p.add_argument("--lexicon", help="lexicon file to preload")
    p.add_argument("--supervisor", default="off",
                   help="host:port of a supervisor, or 'off'")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--mishear", type=float, default=0.0,
                   help="test-only token corruption rate")


def _make_session(args) -> Session:
    scene = ws.load_scene(_read(args.scene, "scenes"))
    cfg = SessionConfig(seed=args.seed, mishear=args.mishear)
    session = Session(scene, config=cfg,
                      supervisor_client=_supervisor_client(args.supervisor))
    if args.lexicon:
        session.load_lexicon(_read(args.lexicon, "lexicons"))
    return session


def cmd_repl(args) -> int:
    if args.script:
        text = _read(args.script, "scripts")
        scene_holder = {}

        def make(scene):
            scene_holder["scene"] = scene
            cfg = SessionConfig(seed=args.seed, mishear=args.mishear)
            s = Session(scene, config=cfg,
                        supervisor_client=_supervisor_client(args.supervisor))
            if args.lexicon:
                s.load_lexicon(_read(args.lexicon, "lexicons"))
            return s

        result = run_script(text, make_session=make)
        print("\n".join(result.transcript))
        if not result.ok:
            print("\nMISMATCHES:", file=sys.stderr)
            for f in result.failures:
                print("  " + f, file=sys.stderr)
            return 1
        return 0

    session = _make_session(args)
    print("tabletalk repl; utterances, '!point <id>', '!transfer', or 'quit'")
    while True:
        try:
            line = input("> ").strip()
        except EOFError:
            return 0
        if line in ("quit", "exit"):
            return 0
        if line == "!transfer":
            responses = session.gesture_transfer()
        elif line.startswith("!point "):
            responses = session.gesture_point(int(line.split()[1]))
        elif line.startswith("#scene "):
            session.load_scene(ws.load_scene(_read(line.split(None, 1)[1], "scenes")))
            responses = []
        elif line:
            responses = session.handle_utterance(line)
        else:
            continue
        for out in render_responses(responses):
            print(out)


def cmd_serve(args) -> int:
    from .wire import SessionServer

    def make():
        return _make_session(args)

    server = SessionServer(make, host=args.host, port=args.port).start()
    print(f"session server on {server.address[0]}:{server.address[1]}", flush=True)
    try:
        while True:
            time.sleep(3600)
    except KeyboardInterrupt:
        server.stop()
    return 0


def cmd_supervise(args) -> int:
    db = sup.PatientDB.load(_read(args.db, "supervisor"))
    taxonomy = sup.Taxonomy.load(_read(args.taxonomy, "supervisor"))
    log = sup.LifeLog.load(Path(args.log).read_text()) if args.log and Path(args.log).exists() else sup.LifeLog()
    server = sup.SupervisorServer(db, log, taxonomy, host=args.host,
                                  port=args.port).start()
    print(f"supervisor on {server.address[0]}:{server.address[1]}", flush=True)
    try:
        while True:
            time.sleep(3600)
    except KeyboardInterrupt:
        server.stop()
        if args.log:
            Path(args.log).write_text(log.dump())
    return 0


def cmd_drive(args) -> int:
    trace = drive_mod.run_script(_read(args.events, "drive"))
    print("\n".join(trace))
    if args.golden:
        golden = _read(args.golden, "drive").splitlines()
        if trace != [g for g in golden if g]:
            print("TRACE MISMATCH", file=sys.stderr)
            return 1
    return 0


def cmd_inspect(args) -> int:
    import numpy as np

    scene = ws.load_scene(_read(args.scene, "scenes"))
    world = ws.WorldState(scene=scene)
    rng = np.random.default_rng(args.seed)
    frame = ws.render_rgb(world, rng=rng)
    percepts = pc.perceive(frame)
    print(pc.percept_report(percepts))
    if args.out:
        from PIL import Image

        overlay = pc.draw_overlays(frame, percepts)
        Image.fromarray(overlay).save(args.out)
        print(f"overlay written to {args.out}", file=sys.stderr)
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="tabletalk")
    subs = parser.add_subparsers(dest="command")

    p = subs.add_parser("repl", help="interactive session or scripted replay")
    _session_args(p)
    p.add_argument("--script", help="golden script to replay; exit 1 on mismatch")
    p.set_defaults(func=cmd_repl)

    p = subs.add_parser("serve", help="session wire-protocol server")
    _session_args(p)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=7641)
    p.set_defaults(func=cmd_serve)

    p = subs.add_parser("supervise", help="reference supervisor server")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=7642)
    p.add_argument("--db", default="patient.db")
    p.add_argument("--taxonomy", default="taxonomy.txt")
    p.add_argument("--log", help="lifelog file to load/persist")
    p.set_defaults(func=cmd_supervise)

    p = subs.add_parser("drive", help="run a motivation event script")
    p.add_argument("events", help="event-stream script file or bundled name")
    p.add_argument("--golden", help="trace file to compare against")
    p.set_defaults(func=cmd_drive)

    p = subs.add_parser("inspect", help="percept report for a scene")
    p.add_argument("--scene", default="quad.scn")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="write an annotated PNG here")
    p.set_defaults(func=cmd_inspect)

    args = parser.parse_args(argv)
    if not getattr(args, "func", None):
        parser.print_help()
        return 2
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
