"""Session orchestrator.

One session owns a world, a grammar version, a lexicon, discourse state, a
macro recorder, the gesture tracker, and an optional supervisor client.
Each utterance runs parse -> slots -> routing (teach / record / query /
command) -> grounding -> feasibility -> vetting -> execution -> templated
responses.  Pointing gestures are synthesized as real frame sequences so the
motion pipeline is exercised end to end.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from importlib import resources

import numpy as np

from . import arm, gesture, grammar as gm, ground, percept as pc, supervisor as sup
from . import worldsim as ws
from .lexicon import ModelStore

logger = logging.getLogger(__name__)

NUMBER_WORDS = ["zero", "one", "two", "three", "four", "five", "six",
                "seven", "eight", "nine", "ten"]

OBJECT_VERBS = {"hand_grab", "hand_give", "hand_indicate", "hand_select"}

VERB_ROUTINES = {
    "hand_grab": ("GrabCycle", 1.0),
    "hand_give": ("GiveCycle", 1.0),
    "hand_indicate": ("TablePoint", 1.0),
    "hand_select": ("TablePoint", 1.0),
    "hand_extend": ("ExtendHand", 1.0),
    "hand_retract": ("ExtendHand", -1.0),
    "hand_open": ("OpenHand", 1.0),
    "hand_close": ("CloseHand", 1.0),
}

# Preseeded verbs wired straight to kernel routines rather than macros.
BUILTIN_VERBS = {"wave": ("Wave", 1.0)}

# Dictation corruption table for robustness tests: plausible mishearings.
MISHEARINGS = {
    "aspirin": "offering", "advil": "anvil", "tylenol": "tylanol",
    "tums": "thumbs", "poke": "polk", "grab": "crab", "blue": "blew",
}


@dataclass(frozen=True)
class SessionConfig:
    camera: ws.Camera = ws.Camera()
    noise_sigma: float = 2.0
    seed: int = 0
    mishear: float = 0.0
    percept: pc.PerceptConfig = pc.PerceptConfig()
    gestures: gesture.GestureConfig = gesture.GestureConfig()
    limits: ws.ArmLimits = ws.ArmLimits()
    transfer_zone: gesture.Zone = gesture.Zone(480.0, 330.0, 620.0, 450.0)
    home: ws.ArmPose = ws.ArmPose(2.0, 2.0, 4.0, 90.0, 3.0)
    calibration_inset: int = 50


@dataclass
class Response:
    say: str | None = None
    point_at: int | None = None      # percept id highlighted by pointing
    executed: str | None = None      # action outcome summary
    asks: str | None = None          # clarification kind


def default_grammar() -> gm.Grammar:
    text = (resources.files("tabletalk") / "data" / "core.sg").read_text()
    return gm.load_grammar(text)


class Session:
    def __init__(self, scene: ws.SceneSpec, grammar: gm.Grammar | None = None,
                 config: SessionConfig = SessionConfig(),
                 store: ModelStore | None = None,
                 supervisor_client: sup.SupervisorClient | None = None):
        self.cfg = config
        self.grammar = grammar or default_grammar()
        self.store = store or ModelStore()
        self.supervisor = supervisor_client
        self.rng = np.random.default_rng(config.seed)
        self.initial_scene = scene
        self.world = ws.WorldState(scene=scene, arm=config.home)
        self.homography = self._calibrate()
        self.ctx = arm.ArmContext(
            homography=self.homography, limits=config.limits, home=config.home,
            transfer_xy=self.homography.map_point(config.transfer_zone.center()))
        self.tracker = gesture.PointerTracker(config.gestures)
        self.handoff = gesture.HandoffMonitor(config.transfer_zone, config.gestures)
        self.discourse = ground.DiscourseState()
        self.recorder = arm.MacroRecorder()
        self.background: np.ndarray = self.render()
        self.pending_click: tuple[float, float] | None = None
        self.pending_command: gm.SlotSet | None = None
        self.active_routine: arm.Routine | None = None
        self.act_counter = 0
        self.drop_count = 0
        self.attn_words = {el.word for exp in self.grammar.categories[gm.ATTN]
                           for el in exp if isinstance(el, gm.Tok)}
        self._sync_grammar_with_store()

    # ------------------------------------------------------------ plumbing

    def _calibrate(self) -> arm.Homography:
        cam = self.cfg.camera
        inset = self.cfg.calibration_inset
        img = [(inset, inset), (cam.width - inset, inset),
               (cam.width - inset, cam.height - inset), (inset, cam.height - inset)]
        table = [cam.to_table(*p) for p in img]
        return arm.calibrate(img, table)

    def _sync_grammar_with_store(self):
        for key in self.store.models:
            self.grammar = gm.add_name(self.grammar, key)
        for macro in self.store.macros.values():
            self.grammar = gm.add_verb(self.grammar, macro.name, macro.arity)

    def render(self) -> np.ndarray:
        return ws.render_rgb(self.world, self.cfg.camera, self.cfg.noise_sigma,
                             self.rng)

    def perceive_now(self) -> list[pc.ObjectPercept]:
        percepts = pc.perceive(self.render(), cfg=self.cfg.percept)
        for p in percepts:
            p.name = self.store.recognize(p)
        return percepts

    def scene_id_for(self, percept: pc.ObjectPercept) -> str:
        bx, by = self.homography.map_point(percept.blob.base_pt)
        return min(self.world.scene.objects,
                   key=lambda o: math.hypot(o.cx - bx, o.cy - by)).id

    # ------------------------------------------------------------ gestures

    def synthesize_gesture(self, tip: tuple[float, float]) -> gesture.GestureEvent | None:
        """Drive the motion pipeline with injected-hand frames advancing
        toward ``tip`` and then holding, yielding one click."""
        self.tracker.reset()
        event = None
        for reach in (0.35, 0.55, 0.75, 0.9, 1.0, 1.0, 1.0, 1.0, 1.0):
            frame = ws.inject_hand(self.render(), tip, reach)
            mask = gesture.motion_mask(self.background, frame, self.cfg.gestures)
            got = self.tracker.update(mask)
            if got is not None:
                event = got
        # hand leaves the scene; the tracker resets for the next cycle
        empty = gesture.motion_mask(self.background, self.render(), self.cfg.gestures)
        self.tracker.update(empty)
        return event

    def gesture_point(self, target: int | tuple[float, float]) -> list[Response]:
        """A human point: at a percept id or directly at image coordinates."""
        if isinstance(target, tuple):
            tip = target
        else:
            percepts = self.perceive_now()
            match = [p for p in percepts if p.id == target]
            if not match:
                return [Response(say=f"(no object {target})")]
            x0, y0, x1, y1 = match[0].blob.bbox
            tip = ((x0 + x1) / 2.0, (y0 + y1) / 2.0)
        event = self.synthesize_gesture(tip)
        if event is None:
            return []
        if self.cfg.transfer_zone.contains(event.at):
            return self._transfer_event(event)
        self.pending_click = event.at
        return []

    def gesture_transfer(self) -> list[Response]:
        """A click inside the transfer zone, driving the handoff phases."""
        event = self.synthesize_gesture(self.cfg.transfer_zone.center())
        if event is None:
            return []
        return self._transfer_event(event)

    def _transfer_event(self, event: gesture.GestureEvent) -> list[Response]:
        event = gesture.GestureEvent("transfer_click", event.at, event.when)
        phase = self.handoff.update(event, event.when)
        if phase is None:
            return []
        responses = [Response(executed=f"handoff {phase}")]
        routine = self.active_routine
        if routine is not None:
            routine.signal(phase)
            self.world, status = arm.run_routine(routine, self.world)
            if status.state != "running":
                self.active_routine = None
                if status.state == "failed":
                    responses.append(Response(say=f"Sorry, {status.reason}."))
        self.background = self.render()
        return responses

    # ----------------------------------------------------------- utterance

    def _mishear(self, tokens: list[str]) -> list[str]:
        if self.cfg.mishear <= 0:
            return tokens
        out = []
        for tok in tokens:
            if self.rng.random() < self.cfg.mishear:
                out.append(MISHEARINGS.get(tok, tok[::-1]))
            else:
                out.append(tok)
        return out

    def handle_utterance(self, text: str) -> list[Response]:
        self.background = self.render()
        tokens, originals = gm.tokenize(text)
        tokens = self._mishear(tokens)
        tree = gm.parse(self.grammar, tokens)
        if tree is None:
            if any(t in self.attn_words for t in tokens):
                return [Response(say="Please rephrase.")]
            return []
        slots = gm.extract_slots(tree, self.grammar, originals)
        logger.debug("utterance %r -> %s", text, slots)
        try:
            responses = self._route(slots)
        finally:
            self.pending_click = None
            self.background = self.render()
        return responses

    def _route(self, slots: gm.SlotSet) -> list[Response]:
        if slots.has("FACT"):
            return self._teach_name(slots)
        if slots.has("NEW-ACT"):
            self.recorder.begin(None)
            return [Response(say="Okay. Show me how.")]
        if slots.has("FINISH"):
            return self._finish_macro(slots)
        if slots.has("QUERY"):
            return self.answer_query(slots)
        if slots.has("CMD") or slots.has("ACT-0") or slots.has("ACT-1"):
            return self._command(slots)
        # Bare description: an answer to a pending clarification, or a
        # selection on its own.
        if self.pending_command is not None:
            return self._command(self.pending_command, answer=slots)
        merged = gm.SlotSet((("CMD", "hand_select"),) + slots.slots)
        return self._command(merged)

    # ------------------------------------------------------------- queries

    def _query_from_slots(self, slots: gm.SlotSet, ignore_name: bool = False
                          ) -> ground.ReferenceQuery:
        colors = tuple(v for s, v in slots.slots if s == "COLOR" and v)
        name = None if ignore_name else (slots.get("NAME") or None)
        pronoun = None
        pointed = None
        if slots.has("OTHER"):
            pronoun = "other"
        elif slots.has("PRON"):
            pronoun = "it"
        if slots.has("POINT"):
            if self.pending_click is not None:
                pointed = self.pending_click
            else:
                pronoun = pronoun or "it"
        size = slots.get("SIZE")
        pos = slots.get("POSITION")
        return ground.ReferenceQuery(
            name=name, colors=colors,
            size_rank=size, pos_rank=pos,
            pronoun=pronoun, pointed=pointed)

    def _describe_text(self, dominant: list[str]) -> str:
        if len(dominant) == 1:
            return f"It's {dominant[0]}."
        extras = " and ".join(dominant[1:])
        return f"It's {dominant[0]} with a little {extras}."

    def answer_query(self, slots: gm.SlotSet) -> list[Response]:
        kind = slots.get("QUERY")
        percepts = self.perceive_now()
        name = slots.get("NAME")

        if kind in ("how_many", "where_is") and name:
            if not self.store.knows(name):
                return [Response(say=f"I don't know what {name} looks like.")]
            ids = self.store.find_instances(name, percepts)
            if kind == "how_many":
                n = len(ids)
                word = NUMBER_WORDS[n] if n < len(NUMBER_WORDS) else str(n)
                if n == 0:
                    return [Response(say=f"I don't see any {name}.")]
                return [Response(say=f"I see {word}.")]
            if not ids:
                return [Response(say=f"I don't see any {name}.")]
            target = next(p for p in percepts if p.id == ids[0])
            self.discourse.last_referent = target.id
            return self._point_and_say(target, percepts, "Here.")

        query = self._query_from_slots(slots)
        res = ground.resolve(query, percepts, self.discourse, self.store)
        if res.outcome == "none":
            return [Response(say="I don't see anything like that.")]
        if res.outcome == "ambiguous":
            return self._clarify(res, percepts, slots)
        target = next(p for p in percepts if p.id == res.id)
        if kind == "what_color":
            return [Response(say=self._describe_text(target.dominant))]
        if kind == "what_is":
            if target.name is None:
                return [Response(say="I don't know.")]
            return [Response(say=f"It is {target.name}.")]
        return [Response(say="Please rephrase.")]

    # ------------------------------------------------------------ teaching

    def _teach_name(self, slots: gm.SlotSet) -> list[Response]:
        name = slots.get("DICT") or slots.get("NAME")
        if not name:
            return [Response(say="Please rephrase.")]
        percepts = self.perceive_now()
        query = self._query_from_slots(slots, ignore_name=True)
        res = ground.resolve(query, percepts, self.discourse, self.store)
        if res.outcome == "none":
            return [Response(say="I don't see anything like that.")]
        if res.outcome == "ambiguous":
            return self._clarify(res, percepts, slots)
        target = next(p for p in percepts if p.id == res.id)
        self.store.learn_name(name, target)
        self.grammar = gm.add_name(self.grammar, name)
        display = self.store.display_name(name)
        if query.pointed is not None:
            return [Response(say=f"Okay. That is {display}.")]
        return self._point_and_say(target, percepts, f"Okay. This is {display}.")

    def _finish_macro(self, slots: gm.SlotSet) -> list[Response]:
        verb = (slots.get("ACT-1") or slots.get("ACT-0") or
                self.recorder.pending_name or "").lower()
        if not verb:
            return [Response(say="Please rephrase.")]
        try:
            macro = self.recorder.finish(verb)
        except arm.RecorderError:
            return [Response(say="You haven't shown me anything yet.")]
        self.store.put_macro(macro)
        self.grammar = gm.add_verb(self.grammar, verb, macro.arity)
        return [Response(say=f"Okay. Now I know how to now {verb} something.")]

    # ------------------------------------------------------------ commands

    def _clarify(self, res: ground.Resolution, percepts, slots: gm.SlotSet
                 ) -> list[Response]:
        self.pending_command = slots if (slots.has("CMD") or slots.has("ACT-0")
                                         or slots.has("ACT-1")) else None
        self.discourse.last_candidates = set(res.ids)
        if len(res.ids) == 2:
            suggest = min(res.ids)
            self.discourse.last_suggested = suggest
            target = next(p for p in percepts if p.id == suggest)
            return self._point_and_say(target, percepts, "Do you mean this one?",
                                       asks="choice")
        self.discourse.last_suggested = None
        return [Response(say=f"I'm confused. Which of the {len(res.ids)} "
                             f"things do you mean?", asks="count")]

    def _point_and_say(self, target, percepts, text: str,
                       asks: str | None = None) -> list[Response]:
        routine = arm.TablePoint(self.ctx, focus=target)
        self.world, status = arm.run_routine(routine, self.world)
        if status.state == "failed":
            logger.warning("pointing failed: %s", status.reason)
        return [Response(say=text, point_at=target.id, asks=asks)]

    def _vet(self, action: str, target, requested_name: str | None,
             percepts) -> sup.Verdict:
        if self.supervisor is None:
            return sup.Verdict("accept")
        self.act_counter += 1
        give = action == "hand_give"
        obj_name = target.name if target is not None else requested_name
        scene_names = [p.name for p in percepts if p.name]
        triples = sup.encode_proposal(
            action, obj_name, target.id if target is not None else None,
            scene_names, self.act_counter, give=give)
        return self.supervisor.submit(self.act_counter, triples)

    def _command(self, slots: gm.SlotSet, answer: gm.SlotSet | None = None
                 ) -> list[Response]:
        verb_cat = slots.get("CMD")
        act_verb = slots.get("ACT-1") or slots.get("ACT-0")
        if act_verb:
            act_verb = act_verb.lower()
        needs_object = (verb_cat in OBJECT_VERBS) or slots.has("ACT-1")

        target = None
        percepts = self.perceive_now()
        if needs_object:
            desc = answer if answer is not None else slots
            query = self._query_from_slots(desc)
            pool = percepts
            if answer is not None and self.discourse.last_candidates:
                pool = [p for p in percepts
                        if p.id in self.discourse.last_candidates]
                if not pool:
                    pool = percepts
            res = ground.resolve(query, pool, self.discourse, self.store)
            if res.outcome == "none":
                name = (answer or slots).get("NAME")
                responses = []
                if name and not self.store.knows(name):
                    responses.append(
                        Response(say=f"I don't know what {name} looks like."))
                    verdict = self._vet(verb_cat or act_verb, None, name, percepts)
                    if verdict.kind == "counter":
                        responses.append(Response(
                            say=f"Do you want {verdict.reason}, "
                                f"{verdict.alternative}?"))
                    return responses
                if name:
                    return [Response(say=f"I don't see any {name}.")]
                return [Response(say="I don't see anything like that.")]
            if res.outcome == "ambiguous":
                return self._clarify(res, percepts, slots)
            target = next(p for p in percepts if p.id == res.id)
        self.pending_command = None

        # Unknown verbs open a recording bound to the verb (the object, if
        # any, was already resolved so later pronouns refer to it).
        if (act_verb and self.store.get_macro(act_verb) is None
                and act_verb not in BUILTIN_VERBS):
            self.recorder.begin(act_verb)
            what = " something" if slots.has("ACT-1") else ""
            return [Response(say=f"I don't know how to {act_verb}{what}.")]

        if target is not None:
            feas = arm.feasibility(target, self.homography, self.cfg.limits)
            if feas == "too_big":
                return [Response(say="Sorry, that's too big for me.")]
            if feas == "out_of_reach":
                return [Response(say="Sorry, that's out of my reach.")]

        verdict = self._vet(verb_cat or act_verb, target,
                            (answer or slots).get("NAME"), percepts)
        if verdict.kind == "veto":
            return [Response(say=verdict.reason)]
        if verdict.kind == "counter":
            return [Response(say=f"Do you want {verdict.reason}, "
                                 f"{verdict.alternative}?")]

        return self._execute(verb_cat, act_verb, target)

    def _execute(self, verb_cat: str | None, act_verb: str | None, target
                 ) -> list[Response]:
        if act_verb and act_verb in BUILTIN_VERBS and \
                self.store.get_macro(act_verb) is None:
            name, param = BUILTIN_VERBS[act_verb]
            routine = arm.make_routine(name, self.ctx, param=param, focus=target)
            record = (name, param)
            label = act_verb
        elif act_verb:
            macro = self.store.get_macro(act_verb)
            routine = arm.play_macro(macro, self.ctx, focus=target,
                                     resolver=self.store.get_macro)
            record = (act_verb, 1.0)
            label = act_verb
        elif verb_cat == "hand_grab":
            place = (self.cfg.home.x + 2.5 * self.drop_count, self.cfg.home.y)
            self.drop_count += 1
            routine = arm.GrabCycle(self.ctx, focus=target, place=place)
            record = ("GrabCycle", 1.0)
            label = "GrabCycle"
        else:
            name, param = VERB_ROUTINES[verb_cat]
            routine = arm.make_routine(name, self.ctx, param=param, focus=target)
            record = (name, param)
            label = name
        if verb_cat == "hand_give":
            self.handoff.arm()
        # Bind the summary to the scene object before the world moves it.
        summary = label if target is None else f"{label} {self.scene_id_for(target)}"
        self.world, status = arm.run_routine(routine, self.world)
        if self.recorder.open and status.state != "failed":
            self.recorder.append(*record)
        if status.state == "failed":
            return [Response(say=f"Sorry, I can't. ({status.reason})")]
        if routine.waiting_for is not None:
            self.active_routine = routine
            return [Response(say="Here you go.", executed=summary)]
        return [Response(executed=summary)]

    # --------------------------------------------------------- persistence

    def save_lexicon(self) -> str:
        return self.store.save()

    def load_lexicon(self, text: str):
        self.store = ModelStore.load(text)
        self._sync_grammar_with_store()

    def load_scene(self, scene: ws.SceneSpec):
        self.initial_scene = scene
        self.world = ws.WorldState(scene=scene, arm=self.cfg.home)
        self.discourse = ground.DiscourseState()
        self.pending_click = None
        self.pending_command = None
        self.active_routine = None
        self.tracker.reset()
        self.drop_count = 0
        self.background = self.render()
