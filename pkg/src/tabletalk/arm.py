"""Hand-eye calibration, grasp geometry, and the kernel routine library.

Image pixels map to table inches through a 4-point homography.  Grasps aim
at an object's base point at a fixed height with the gripper along the blob
axis, approached through a via point 3.5 inches out.  Motion is executed by
small finite state machines (kernel routines) advanced one world tick per
step; composites chain kernels, and taught verb macros replay recorded
top-level steps with an optional focus object substituted into indexical
routines.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import worldsim
from .worldsim import ArmCommand, ArmLimits, ArmPose, WorldState

logger = logging.getLogger(__name__)

GRASP_Z = 1.5          # inches above the table at the grasp point
VIA_OFFSET = 3.5       # inches in front of the base along the approach
EXTEND_STEP = 3.0      # inches moved by one ExtendHand
ARRIVE_TOL = 0.1       # inches
WIDEN_AFTER_CONTACT = 0.1
TICK_BUDGET = 2000

INDEXICAL = {"TablePoint", "TableLift", "TableDeposit", "GrabCycle", "GiveCycle"}


class CalibrationError(Exception):
    pass


class RecorderError(Exception):
    pass


# ------------------------------------------------------------- homography

@dataclass(frozen=True)
class Homography:
    matrix: np.ndarray  # 3x3, maps image px (homogeneous) to table inches

    def map_point(self, pt: tuple[float, float]) -> tuple[float, float]:
        v = self.matrix @ np.array([pt[0], pt[1], 1.0])
        if abs(v[2]) < 1e-12:
            raise CalibrationError(f"point {pt} maps to infinity")
        return float(v[0] / v[2]), float(v[1] / v[2])

    def inverse(self) -> "Homography":
        return Homography(np.linalg.inv(self.matrix))

    def axis_heading(self, base: tuple[float, float], axis_deg: float) -> float:
        """Approach heading along an image axis at ``base``.

        The axis is a line (two possible directions); pick the one pointing
        down-table, or rightward inside a small dead zone around horizontal
        so that noise jitter on a level axis cannot flip the approach side.
        """
        th = math.radians(axis_deg)
        p0 = self.map_point(base)
        p1 = self.map_point((base[0] + math.cos(th), base[1] + math.sin(th)))
        dx, dy = p1[0] - p0[0], p1[1] - p0[1]
        norm = math.hypot(dx, dy)
        dx, dy = dx / norm, dy / norm
        if dy < -0.05 or (abs(dy) <= 0.05 and dx < 0):
            dx, dy = -dx, -dy
        return math.degrees(math.atan2(dy, dx)) % 360.0


def calibrate(image_pts, table_pts) -> Homography:
    """Exact DLT from 4 correspondences (no 3 image points collinear)."""
    if len(image_pts) != 4 or len(table_pts) != 4:
        raise CalibrationError("exactly 4 point pairs required")
    A = np.zeros((8, 8))
    b = np.zeros(8)
    for i, ((u, v), (x, y)) in enumerate(zip(image_pts, table_pts)):
        A[2 * i] = [u, v, 1, 0, 0, 0, -x * u, -x * v]
        b[2 * i] = x
        A[2 * i + 1] = [0, 0, 0, u, v, 1, -y * u, -y * v]
        b[2 * i + 1] = y
    try:
        h = np.linalg.solve(A, b)
    except np.linalg.LinAlgError as exc:
        raise CalibrationError(f"degenerate calibration points: {exc}") from exc
    if not np.all(np.isfinite(h)):
        raise CalibrationError("calibration produced non-finite homography")
    return Homography(np.array([[h[0], h[1], h[2]],
                                [h[3], h[4], h[5]],
                                [h[6], h[7], 1.0]]))


def image_to_table(h: Homography, pt: tuple[float, float]) -> tuple[float, float]:
    return h.map_point(pt)


# ----------------------------------------------------------- grasp planning

@dataclass(frozen=True)
class GraspPlan:
    via: ArmPose
    grasp: ArmPose


class GraspError(Exception):
    pass


def plan_grasp(percept, h: Homography, limits: ArmLimits = ArmLimits()) -> GraspPlan:
    """Grasp at the base point, 1.5 in above the table, gripper along the
    blob axis; via point 3.5 in back along the approach, fully open."""
    bx, by = h.map_point(percept.blob.base_pt)
    if not limits.contains(bx, by, GRASP_Z):
        raise GraspError(f"base point ({bx:.1f},{by:.1f}) outside workspace")
    heading = h.axis_heading(percept.blob.base_pt, percept.blob.axis_deg)
    th = math.radians(heading)
    grasp = ArmPose(bx, by, GRASP_Z, heading, grip=0.0)
    via = ArmPose(bx - VIA_OFFSET * math.cos(th), by - VIA_OFFSET * math.sin(th),
                  GRASP_Z, heading, grip=limits.max_open)
    return GraspPlan(via=via, grasp=grasp)


def feasibility(percept, h: Homography, limits: ArmLimits = ArmLimits()) -> str:
    """"ok", "too_big" (short extent beyond the grip), or "out_of_reach"."""
    blob = percept.blob
    th = math.radians(blob.axis_deg)
    px, py = blob.base_pt
    p0 = h.map_point((px, py))
    p1 = h.map_point((px - math.sin(th) * blob.perp_extent,
                      py + math.cos(th) * blob.perp_extent))
    short_in = math.hypot(p1[0] - p0[0], p1[1] - p0[1])
    if short_in > limits.max_open:
        return "too_big"
    if not limits.contains(p0[0], p0[1], GRASP_Z):
        return "out_of_reach"
    return "ok"


# ------------------------------------------------------------ FSM routines

@dataclass
class RoutineStatus:
    state: str           # "running" | "done" | "failed"
    reason: str = ""

    @classmethod
    def running(cls):
        return cls("running")

    @classmethod
    def done(cls):
        return cls("done")

    @classmethod
    def failed(cls, reason: str):
        return cls("failed", reason)


@dataclass(frozen=True)
class ArmContext:
    """Session-level fixtures the routines need: calibration, limits, the
    home pose, and where handoffs happen."""

    homography: Homography
    limits: ArmLimits = ArmLimits()
    home: ArmPose = ArmPose(16.0, 4.0, 4.0, 90.0, 3.0)
    lift_z: float = 4.0
    transfer_xy: tuple[float, float] = (24.5, 19.5)


def _near(a: float, b: float, tol: float = ARRIVE_TOL) -> bool:
    return abs(a - b) <= tol


def _drive(world: WorldState, target: ArmPose, ctx: ArmContext,
           grip: float | None = None) -> tuple[WorldState, bool]:
    """One tick toward a pose; True when position, heading, and any grip
    target have all arrived."""
    g = target.grip if grip is None else grip
    world = worldsim.apply_arm(
        world, ArmCommand(target.x, target.y, target.z, target.heading, g),
        ctx.limits)
    arm = world.arm
    arrived = (math.dist((arm.x, arm.y, arm.z), (target.x, target.y, target.z)) <= ARRIVE_TOL
               and abs((arm.heading - target.heading + 180) % 360 - 180) <= 1.0
               and _near(arm.grip, max(0.0, min(ctx.limits.max_open, g)), 0.05))
    return world, arrived


class Routine:
    """One FSM.  ``step`` advances a single world tick; ``waiting_for`` names
    an external signal when the routine is paused on one."""

    name = "Routine"
    indexical = False

    def __init__(self, ctx: ArmContext, param: float = 1.0, focus=None):
        self.ctx = ctx
        self.param = param
        self.focus = focus
        self.waiting_for: str | None = None

    def signal(self, event: str):
        if self.waiting_for == event:
            self.waiting_for = None

    def step(self, world: WorldState) -> tuple[WorldState, RoutineStatus]:
        raise NotImplementedError


class ExtendHand(Routine):
    """Move |3 in| along the current heading, sign from the parameter."""

    name = "ExtendHand"

    def __init__(self, ctx, param=1.0, focus=None):
        super().__init__(ctx, param, focus)
        self.target: ArmPose | None = None

    def step(self, world):
        arm = world.arm
        if self.target is None:
            th = math.radians(arm.heading)
            sign = 1.0 if self.param >= 0 else -1.0
            self.target = ArmPose(arm.x + EXTEND_STEP * sign * math.cos(th),
                                  arm.y + EXTEND_STEP * sign * math.sin(th),
                                  arm.z, arm.heading, arm.grip)
        try:
            world, arrived = _drive(world, self.target, self.ctx)
        except worldsim.WorkspaceError as exc:
            return world, RoutineStatus.failed(str(exc))
        return world, RoutineStatus.done() if arrived else RoutineStatus.running()


class OpenHand(Routine):
    name = "OpenHand"

    def step(self, world):
        world = worldsim.apply_arm(world, ArmCommand(grip=self.ctx.limits.max_open),
                                   self.ctx.limits)
        if _near(world.arm.grip, self.ctx.limits.max_open, 0.01):
            return world, RoutineStatus.done()
        return world, RoutineStatus.running()


class CloseHand(Routine):
    """Drive the grip toward zero until contact force, then widen slightly."""

    name = "CloseHand"

    def __init__(self, ctx, param=1.0, focus=None):
        super().__init__(ctx, param, focus)
        self.contact_width: float | None = None

    def step(self, world):
        if self.contact_width is None:
            had = world.held
            world = worldsim.apply_arm(world, ArmCommand(grip=0.0), self.ctx.limits)
            if world.held is not None and had is None:
                self.contact_width = world.arm.grip
                return world, RoutineStatus.running()
            if world.arm.grip <= 1e-9:
                return world, RoutineStatus.done()  # closed on empty air
            return world, RoutineStatus.running()
        world = worldsim.apply_arm(
            world, ArmCommand(grip=self.contact_width + WIDEN_AFTER_CONTACT),
            self.ctx.limits)
        if world.arm.grip >= self.contact_width + WIDEN_AFTER_CONTACT - 0.01:
            return world, RoutineStatus.done()
        return world, RoutineStatus.running()


class GotoVia(Routine):
    name = "GotoVia"

    def __init__(self, ctx, param=1.0, focus=None, pose: ArmPose | None = None):
        super().__init__(ctx, param, focus)
        self.pose = pose

    def step(self, world):
        if self.pose is None:
            return world, RoutineStatus.failed("GotoVia needs a pose")
        try:
            world, arrived = _drive(world, self.pose, self.ctx)
        except worldsim.WorkspaceError as exc:
            return world, RoutineStatus.failed(str(exc))
        return world, RoutineStatus.done() if arrived else RoutineStatus.running()


class _Seq(Routine):
    """Shared machinery for composite routines: a list of phases, each a
    child routine or a callable returning one (or a terminal status)."""

    def __init__(self, ctx, param=1.0, focus=None):
        super().__init__(ctx, param, focus)
        self.phase = 0
        self.child: Routine | None = None

    def phases(self) -> list:
        raise NotImplementedError

    def signal(self, event: str):
        super().signal(event)
        if self.child is not None:
            self.child.signal(event)

    def step(self, world):
        phases = self.phases()
        while True:
            if self.phase >= len(phases):
                return world, RoutineStatus.done()
            if self.child is None:
                made = phases[self.phase](world)
                if made is None:
                    self.phase += 1
                    continue
                if isinstance(made, RoutineStatus):
                    if made.state == "failed":
                        return world, made
                    if made.state == "done":
                        self.phase += 1
                        continue
                    return world, made  # running: hold this phase
                self.child = made
            if self.child.waiting_for is not None:
                self.waiting_for = self.child.waiting_for
                return world, RoutineStatus.running()
            world, status = self.child.step(world)
            self.waiting_for = self.child.waiting_for
            if status.state == "failed":
                return world, status
            if status.state == "done":
                self.child = None
                self.phase += 1
                if self.phase >= len(phases):
                    return world, RoutineStatus.done()
            return world, RoutineStatus.running()


class TablePoint(_Seq):
    """Aim at the focus object: move to its via pose, gripper along the
    approach axis."""

    name = "TablePoint"
    indexical = True

    def phases(self):
        return [self._go]

    def _go(self, world):
        try:
            plan = plan_grasp(self.focus, self.ctx.homography, self.ctx.limits)
        except GraspError as exc:
            return RoutineStatus.failed(str(exc))
        return GotoVia(self.ctx, pose=plan.via)


class TableLift(_Seq):
    """Approach through the via point, close on the object, raise it."""

    name = "TableLift"
    indexical = True

    def __init__(self, ctx, param=1.0, focus=None):
        super().__init__(ctx, param, focus)
        self.plan: GraspPlan | None = None

    def phases(self):
        return [self._point, self._open, self._approach, self._close,
                self._check, self._raise]

    def _point(self, world):
        try:
            self.plan = plan_grasp(self.focus, self.ctx.homography, self.ctx.limits)
        except GraspError as exc:
            return RoutineStatus.failed(str(exc))
        return TablePoint(self.ctx, focus=self.focus)

    def _open(self, world):
        return OpenHand(self.ctx)

    def _approach(self, world):
        # slide in fully open; CloseHand does the closing
        open_grasp = ArmPose(self.plan.grasp.x, self.plan.grasp.y,
                             self.plan.grasp.z, self.plan.grasp.heading,
                             self.ctx.limits.max_open)
        return GotoVia(self.ctx, pose=open_grasp)

    def _close(self, world):
        return CloseHand(self.ctx)

    def _check(self, world):
        if world.held is None:
            return RoutineStatus.failed("nothing grasped")
        return None

    def _raise(self, world):
        arm = world.arm
        return GotoVia(self.ctx, pose=ArmPose(arm.x, arm.y, self.ctx.lift_z,
                                              arm.heading, arm.grip))


class TableDeposit(_Seq):
    """Carry to a table position, lower, release, and rise clear."""

    name = "TableDeposit"
    indexical = True

    def __init__(self, ctx, param=1.0, focus=None,
                 place: tuple[float, float] | None = None):
        super().__init__(ctx, param, focus)
        self.place = place

    def phases(self):
        return [self._carry, self._lower, self._release, self._rise]

    def _target_xy(self, world):
        if self.place is not None:
            return self.place
        return (world.arm.x, world.arm.y)

    def _carry(self, world):
        x, y = self._target_xy(world)
        arm = world.arm
        return GotoVia(self.ctx, pose=ArmPose(x, y, self.ctx.lift_z,
                                              arm.heading, arm.grip))

    def _lower(self, world):
        arm = world.arm
        return GotoVia(self.ctx, pose=ArmPose(arm.x, arm.y, GRASP_Z,
                                              arm.heading, arm.grip))

    def _release(self, world):
        return OpenHand(self.ctx)

    def _rise(self, world):
        arm = world.arm
        return GotoVia(self.ctx, pose=ArmPose(arm.x, arm.y, self.ctx.lift_z,
                                              arm.heading, arm.grip))


class GrabCycle(_Seq):
    """Pick up the focus object and deposit it at the home position (or a
    caller-supplied drop spot, so repeated grabs do not pile up)."""

    name = "GrabCycle"
    indexical = True

    def __init__(self, ctx, param=1.0, focus=None,
                 place: tuple[float, float] | None = None):
        super().__init__(ctx, param, focus)
        self.place = place or (ctx.home.x, ctx.home.y)

    def phases(self):
        return [self._lift, self._deposit, self._home]

    def _lift(self, world):
        return TableLift(self.ctx, focus=self.focus)

    def _deposit(self, world):
        return TableDeposit(self.ctx, place=self.place)

    def _home(self, world):
        return Home(self.ctx)


class GiveCycle(_Seq):
    """Carry the focus object to the transfer zone, hand it over on the
    user's click, take it back on the second click, and replace it."""

    name = "GiveCycle"
    indexical = True

    def __init__(self, ctx, param=1.0, focus=None):
        super().__init__(ctx, param, focus)
        self.origin: tuple[float, float] | None = None
        self.aborted = False

    def phases(self):
        return [self._note_origin, self._lift, self._to_zone, self._lower,
                self._wait_release, self._release, self._wait_regrasp,
                self._regrasp, self._replace, self._home]

    def signal(self, event: str):
        if event == "abort" and self.waiting_for in ("release", "regrasp"):
            self.aborted = True
            self.waiting_for = None
            if self.child is not None:
                self.child.waiting_for = None
            self.phase = len(self.phases()) - 1  # go home
            self.child = None
            return
        super().signal(event)

    def _note_origin(self, world):
        obj = world.scene.find(self.focus_scene_id(world))
        self.origin = (obj.cx, obj.cy)
        return None

    def focus_scene_id(self, world):
        # Nearest scene object to the focus percept's table-space base point.
        bx, by = self.ctx.homography.map_point(self.focus.blob.base_pt)
        return min(world.scene.objects,
                   key=lambda o: math.hypot(o.cx - bx, o.cy - by)).id

    def _lift(self, world):
        return TableLift(self.ctx, focus=self.focus)

    def _to_zone(self, world):
        x, y = self.ctx.transfer_xy
        arm = world.arm
        return GotoVia(self.ctx, pose=ArmPose(x, y, self.ctx.lift_z,
                                              arm.heading, arm.grip))

    def _lower(self, world):
        arm = world.arm
        return GotoVia(self.ctx, pose=ArmPose(arm.x, arm.y, GRASP_Z,
                                              arm.heading, arm.grip))

    def _wait_release(self, world):
        self.waiting_for = "release"
        return None

    def _release(self, world):
        if self.waiting_for:
            return RoutineStatus.running()
        return OpenHand(self.ctx)

    def _wait_regrasp(self, world):
        self.waiting_for = "regrasp"
        return None

    def _regrasp(self, world):
        if self.waiting_for:
            return RoutineStatus.running()
        return CloseHand(self.ctx)

    def _replace(self, world):
        if world.held is None:
            return RoutineStatus.failed("regrasp missed the object")
        return TableDeposit(self.ctx, place=self.origin)

    def _home(self, world):
        return Home(self.ctx)

    def step(self, world):
        if self.waiting_for is not None:
            return world, RoutineStatus.running()
        world, status = super().step(world)
        if status.state == "done" and self.aborted:
            return world, RoutineStatus.failed("handoff aborted")
        return world, status


class Home(_Seq):
    name = "Home"

    def phases(self):
        return [self._rise, self._go]

    def _rise(self, world):
        arm = world.arm
        return GotoVia(self.ctx, pose=ArmPose(arm.x, arm.y, self.ctx.lift_z,
                                              arm.heading, arm.grip))

    def _go(self, world):
        return GotoVia(self.ctx, pose=self.ctx.home)


class Wave(_Seq):
    """Arity-0 demo routine: an out-and-back flourish."""

    name = "Wave"

    def phases(self):
        return [lambda w: ExtendHand(self.ctx, 1.0),
                lambda w: ExtendHand(self.ctx, -1.0)]


KERNEL: dict[str, type[Routine]] = {
    "ExtendHand": ExtendHand,
    "OpenHand": OpenHand,
    "CloseHand": CloseHand,
    "GotoVia": GotoVia,
    "TablePoint": TablePoint,
    "TableLift": TableLift,
    "TableDeposit": TableDeposit,
    "GrabCycle": GrabCycle,
    "GiveCycle": GiveCycle,
    "Home": Home,
    "Wave": Wave,
}


def make_routine(name: str, ctx: ArmContext, param: float = 1.0,
                 focus=None) -> Routine:
    cls = KERNEL.get(name)
    if cls is None:
        raise KeyError(name)
    return cls(ctx, param=param, focus=focus)


def step_routine(routine: Routine, world: WorldState) -> tuple[WorldState, RoutineStatus]:
    """Advance one tick of the routine's FSM against the world."""
    return routine.step(world)


def run_routine(routine: Routine, world: WorldState,
                budget: int = TICK_BUDGET) -> tuple[WorldState, RoutineStatus]:
    """Tick to completion, an external wait, or budget exhaustion."""
    for _ in range(budget):
        if routine.waiting_for is not None:
            return world, RoutineStatus.running()
        world, status = routine.step(world)
        if status.state != "running":
            return world, status
        if routine.waiting_for is not None:
            return world, status
    return world, RoutineStatus.failed(f"tick budget {budget} exhausted")


class MacroPlayback(_Seq):
    """Replays a taught macro's recorded steps in order, substituting the
    focus object into indexical routines; steps may themselves name other
    macros (nesting) via the resolver."""

    name = "MacroPlayback"

    def __init__(self, ctx, macro, focus=None, resolver=None):
        super().__init__(ctx, 1.0, focus)
        self.macro = macro
        self.resolver = resolver

    def phases(self):
        return [self._make_step(r, p) for r, p in self.macro.steps]

    def _make_step(self, routine_name, param):
        def build(world):
            if routine_name in KERNEL:
                return make_routine(routine_name, self.ctx, param=param,
                                    focus=self.focus)
            nested = self.resolver(routine_name) if self.resolver else None
            if nested is None:
                return RoutineStatus.failed(f"unknown routine {routine_name!r}")
            return MacroPlayback(self.ctx, nested, focus=self.focus,
                                 resolver=self.resolver)
        return build


def play_macro(macro, ctx: ArmContext, focus=None, resolver=None) -> Routine:
    """Build the playback routine; arity-1 macros require a focus object."""
    if macro.arity == 1 and focus is None:
        raise GraspError(f"macro {macro.name!r} needs a focus object")
    return MacroPlayback(ctx, macro, focus=focus, resolver=resolver)


# ---------------------------------------------------------- macro recorder

@dataclass
class MacroRecorder:
    open: bool = False
    pending_name: str | None = None
    steps: list[tuple[str, float]] = field(default_factory=list)

    def begin(self, name: str | None = None):
        self.open = True
        self.pending_name = name
        self.steps = []

    def append(self, routine_name: str, param: float):
        if not self.open:
            logger.warning("macro step %s ignored: no recording open", routine_name)
            return
        self.steps.append((routine_name, param))

    def finish(self, name: str):
        """Bind the recorded steps to the verb; arity is 1 when any step is
        indexical (takes the focus object)."""
        from .lexicon import VerbMacro

        if not self.open:
            raise RecorderError("no recording open")
        if not self.steps:
            raise RecorderError("recording has no steps")
        arity = 1 if any(r in INDEXICAL for r, _ in self.steps) else 0
        macro = VerbMacro(name=name, arity=arity, steps=tuple(self.steps))
        self.open = False
        self.pending_name = None
        self.steps = []
        return macro
