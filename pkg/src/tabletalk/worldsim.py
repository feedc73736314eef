"""Synthetic tabletop world.

Renders RGB and depth frames from ground truth and simulates simple arm
kinematics, so every perception and manipulation claim in the engine can be
tested against known answers.

Conventions used throughout the package:

- Table coordinates are inches, x to the right, y increasing toward the
  viewer (toward the bottom of the image).
- The camera is a pure orthographic top-down projection with a single
  inches-per-pixel scale (default 0.05 in/px at 640x480, i.e. a 32x24 in
  viewport).  Frames are numpy arrays of shape (H, W, 3), dtype uint8, RGB.
- Depth frames are (H, W) float32 range maps in arbitrary linear units
  (1 unit per inch of protrusion); 0.0 is the invalid-depth sentinel.
  The table plane is nearer (smaller range) at the bottom of the image.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from PIL import Image, ImageDraw

INVALID_DEPTH = 0.0

# Skin tone of the synthesized pointing hand; distinct from all test paints.
HAND_COLOR = (205, 170, 140)


class SceneError(Exception):
    """Raised for malformed or inconsistent scene descriptions."""


class WorkspaceError(Exception):
    """Raised when an arm motion target lies outside the workspace box."""


@dataclass(frozen=True)
class Camera:
    width: int = 640
    height: int = 480
    scale: float = 0.05  # inches per pixel

    def to_px(self, x: float, y: float) -> tuple[float, float]:
        return x / self.scale, y / self.scale

    def to_table(self, px: float, py: float) -> tuple[float, float]:
        return px * self.scale, py * self.scale


@dataclass(frozen=True)
class ObjSpec:
    """One object footprint: a rectangle or ellipse plus paint layers.

    ``long_in``/``short_in`` are full extents in inches; ``angle_deg`` is the
    orientation of the long axis.  ``paint`` is a list of (rgb, fraction)
    layers laid out as bands along the long axis; fractions must sum to 1.
    """

    id: str
    shape: str  # "rect" | "ellipse"
    cx: float
    cy: float
    long_in: float
    short_in: float
    angle_deg: float = 0.0
    height_in: float = 2.0
    paint: tuple[tuple[tuple[int, int, int], float], ...] = (((128, 128, 128), 1.0),)

    def validate(self) -> None:
        if self.shape not in ("rect", "ellipse"):
            raise SceneError(f"object {self.id}: unknown shape {self.shape!r}")
        if self.long_in <= 0 or self.short_in <= 0:
            raise SceneError(f"object {self.id}: axes must be positive")
        total = sum(frac for _, frac in self.paint)
        if abs(total - 1.0) > 1e-6:
            raise SceneError(f"object {self.id}: paint fractions sum to {total}, not 1.0")


@dataclass(frozen=True)
class SceneSpec:
    table_color: tuple[int, int, int] = (130, 105, 80)
    table_w: float = 32.0
    table_h: float = 24.0
    objects: tuple[ObjSpec, ...] = ()

    def validate(self) -> None:
        seen = set()
        for obj in self.objects:
            obj.validate()
            if obj.id in seen:
                raise SceneError(f"duplicate object id {obj.id!r}")
            seen.add(obj.id)
            r = obj.long_in / 2.0
            if not (0 <= obj.cx - r and obj.cx + r <= self.table_w
                    and 0 <= obj.cy - r and obj.cy + r <= self.table_h):
                raise SceneError(f"object {obj.id!r} footprint outside table extent")

    def find(self, obj_id: str) -> ObjSpec:
        for obj in self.objects:
            if obj.id == obj_id:
                return obj
        raise SceneError(f"no object {obj_id!r} in scene")


@dataclass(frozen=True)
class ArmPose:
    x: float = 16.0
    y: float = 4.0
    z: float = 4.0
    heading: float = 90.0  # degrees on the table plane, along +x at 0
    grip: float = 3.0  # inches of opening


@dataclass(frozen=True)
class ArmCommand:
    """Per-tick motion target; None fields hold their current value."""

    x: float | None = None
    y: float | None = None
    z: float | None = None
    heading: float | None = None
    grip: float | None = None


@dataclass(frozen=True)
class ArmLimits:
    # The reachable box extends past the table edge so via points can hover
    # just off it.
    box_x: tuple[float, float] = (-6.0, 38.0)
    box_y: tuple[float, float] = (-6.0, 30.0)
    box_z: tuple[float, float] = (0.0, 12.0)
    max_open: float = 3.0
    lin_step: float = 1.0  # inches per tick
    ang_step: float = 30.0  # degrees per tick
    grip_step: float = 0.5  # inches per tick
    grasp_tol: float = 1.5  # hand-to-base distance that counts as contact
    grasp_z: float = 2.5  # hand must be at or below this height to grasp
    release_slack: float = 0.2

    def contains(self, x: float, y: float, z: float) -> bool:
        return (self.box_x[0] <= x <= self.box_x[1]
                and self.box_y[0] <= y <= self.box_y[1]
                and self.box_z[0] <= z <= self.box_z[1])


@dataclass(frozen=True)
class WorldState:
    scene: SceneSpec
    arm: ArmPose = ArmPose()
    held: str | None = None
    clock: int = 0


def _local_frames(cam: Camera):
    """Pixel-center coordinate grids in table inches, cached per camera."""
    key = (cam.width, cam.height, cam.scale)
    grids = _local_frames.cache.get(key)
    if grids is None:
        cols = (np.arange(cam.width) + 0.5) * cam.scale
        rows = (np.arange(cam.height) + 0.5) * cam.scale
        grids = np.meshgrid(cols, rows)
        _local_frames.cache[key] = grids
    return grids


_local_frames.cache = {}


def _footprint_fields(obj: ObjSpec, cx: float, cy: float, cam: Camera):
    """Inside-mask and normalized long-axis position for one footprint."""
    wx, wy = _local_frames(cam)
    dx = wx - cx
    dy = wy - cy
    th = math.radians(obj.angle_deg)
    u = dx * math.cos(th) + dy * math.sin(th)
    v = -dx * math.sin(th) + dy * math.cos(th)
    a = obj.long_in / 2.0
    b = obj.short_in / 2.0
    if obj.shape == "rect":
        inside = (np.abs(u) <= a) & (np.abs(v) <= b)
        # Fraction of the footprint area left of each axial position.
        area_frac = (u / (2 * a)) + 0.5
    else:
        inside = (u / a) ** 2 + (v / b) ** 2 <= 1.0
        t = np.clip(u / a, -1.0, 1.0)
        # Exact area fraction of an ellipse left of axial position t.
        area_frac = (t * np.sqrt(1.0 - t * t) + np.arcsin(t)) / math.pi + 0.5
    return inside, area_frac


def _object_center(world: WorldState, obj: ObjSpec) -> tuple[float, float]:
    if world.held == obj.id:
        return world.arm.x, world.arm.y
    return obj.cx, obj.cy


def render_rgb(world: WorldState, cam: Camera = Camera(), noise_sigma: float = 2.0,
               rng: np.random.Generator | None = None) -> np.ndarray:
    """Top-down orthographic render: table color plus painted footprints.

    Noise is independent Gaussian per channel, applied only when a generator
    is supplied, so renders are deterministic given a seed.
    """
    world.scene.validate()
    frame = np.empty((cam.height, cam.width, 3), dtype=np.float64)
    frame[:] = world.scene.table_color
    for obj in world.scene.objects:
        ocx, ocy = _object_center(world, obj)
        inside, area_frac = _footprint_fields(obj, ocx, ocy, cam)
        cum = 0.0
        for rgb, frac in obj.paint:
            band = inside & (area_frac >= cum - 1e-9) & (area_frac < cum + frac + 1e-9)
            frame[band] = rgb
            cum += frac
    if rng is not None and noise_sigma > 0:
        frame += rng.normal(0.0, noise_sigma, frame.shape)
    return np.clip(np.floor(frame + 0.5), 0, 255).astype(np.uint8)


def render_depth(world: WorldState, cam: Camera = Camera(), noise_sigma: float = 0.0,
                 speckle: float = 0.0, rng: np.random.Generator | None = None,
                 base_range: float = 200.0, row_grad: float = 0.5) -> np.ndarray:
    """Range map: a single table plane, nearer at the image bottom, with
    object footprints protruding toward the camera by their height.

    ``speckle`` is the fraction of pixels replaced by the invalid sentinel.
    """
    world.scene.validate()
    wx, wy = _local_frames(cam)
    depth = base_range - row_grad * wy
    for obj in world.scene.objects:
        ocx, ocy = _object_center(world, obj)
        inside, _ = _footprint_fields(obj, ocx, ocy, cam)
        lift = world.arm.z if world.held == obj.id else 0.0
        depth = np.where(inside, depth - (obj.height_in + lift), depth)
    if rng is not None and noise_sigma > 0:
        depth = depth + rng.normal(0.0, noise_sigma, depth.shape)
    depth = depth.astype(np.float32)
    if rng is not None and speckle > 0:
        bad = rng.random(depth.shape) < speckle
        depth[bad] = INVALID_DEPTH
    return depth


def apply_arm(world: WorldState, cmd: ArmCommand, limits: ArmLimits = ArmLimits()) -> WorldState:
    """Advance one tick toward the commanded pose.

    Grip closing clamps at an object's width when the hand is within grasp
    tolerance of its base (the object becomes held and snaps to the hand);
    opening past the width releases it where the hand is.
    """
    arm = world.arm
    tx = arm.x if cmd.x is None else cmd.x
    ty = arm.y if cmd.y is None else cmd.y
    tz = arm.z if cmd.z is None else cmd.z
    if not limits.contains(tx, ty, tz):
        raise WorkspaceError(f"target ({tx:.2f},{ty:.2f},{tz:.2f}) outside workspace box")

    dx, dy, dz = tx - arm.x, ty - arm.y, tz - arm.z
    dist = math.sqrt(dx * dx + dy * dy + dz * dz)
    if dist <= limits.lin_step:
        nx, ny, nz = tx, ty, tz
    else:
        f = limits.lin_step / dist
        nx, ny, nz = arm.x + dx * f, arm.y + dy * f, arm.z + dz * f

    th = arm.heading if cmd.heading is None else cmd.heading
    dh = (th - arm.heading + 180.0) % 360.0 - 180.0
    nh = (arm.heading + max(-limits.ang_step, min(limits.ang_step, dh))) % 360.0

    tg = arm.grip if cmd.grip is None else max(0.0, min(limits.max_open, cmd.grip))
    dg = tg - arm.grip
    ng = arm.grip + max(-limits.grip_step, min(limits.grip_step, dg))

    held = world.held
    scene = world.scene
    if dg < 0 and held is None and nz <= limits.grasp_z:
        for obj in scene.objects:
            near = math.hypot(obj.cx - nx, obj.cy - ny) <= limits.grasp_tol
            if near and obj.short_in <= limits.max_open and ng <= obj.short_in:
                ng = obj.short_in  # simulated contact force
                held = obj.id
                break
    elif dg < 0 and held is not None:
        ng = max(ng, scene.find(held).short_in)  # contact force persists
    if dg > 0 and held is not None:
        width = scene.find(held).short_in
        if ng >= width + limits.release_slack:
            scene = _move_object(scene, held, nx, ny)
            held = None

    if held is not None:
        scene = _move_object(scene, held, nx, ny)

    return WorldState(scene=scene, arm=ArmPose(nx, ny, nz, nh, ng),
                      held=held, clock=world.clock + 1)


def _move_object(scene: SceneSpec, obj_id: str, x: float, y: float) -> SceneSpec:
    objs = tuple(replace(o, cx=x, cy=y) if o.id == obj_id else o for o in scene.objects)
    return replace(scene, objects=objs)


def inject_hand(frame: np.ndarray, tip: tuple[float, float], reach: float,
                base_halfwidth: int = 30, tip_halfwidth: float = 1.8) -> np.ndarray:
    """Paint a skin-toned wedge from the lower-left corner toward ``tip``.

    ``reach`` scales how far along the corner-to-tip line the wedge extends;
    0 leaves the frame untouched, 1 puts the fingertip at the tip.  The tip
    edge stays a few pixels wide (a fingertip, not a needle) so morphology
    in the motion pipeline cannot erase it.
    """
    if reach <= 0:
        return frame.copy()
    h, w = frame.shape[:2]
    if not (0 <= tip[0] < w and 0 <= tip[1] < h):
        raise ValueError(f"tip {tip} outside frame")
    corner = (0.0, float(h - 1))
    apex = (corner[0] + reach * (tip[0] - corner[0]),
            corner[1] + reach * (tip[1] - corner[1]))
    dx, dy = apex[0] - corner[0], apex[1] - corner[1]
    norm = math.hypot(dx, dy)
    if norm < 1.0:
        return frame.copy()
    px, py = -dy / norm, dx / norm
    quad = [(corner[0] + px * base_halfwidth, corner[1] + py * base_halfwidth),
            (corner[0] - px * base_halfwidth, corner[1] - py * base_halfwidth),
            (apex[0] - px * tip_halfwidth, apex[1] - py * tip_halfwidth),
            (apex[0] + px * tip_halfwidth, apex[1] + py * tip_halfwidth)]
    img = Image.fromarray(frame)
    ImageDraw.Draw(img).polygon(quad, fill=HAND_COLOR)
    return np.asarray(img)


def footprint_mask(obj: ObjSpec, cam: Camera = Camera(),
                   center: tuple[float, float] | None = None) -> np.ndarray:
    """Exact ground-truth rasterization of one footprint (test oracle)."""
    cx, cy = center if center is not None else (obj.cx, obj.cy)
    inside, _ = _footprint_fields(obj, cx, cy, cam)
    return inside


def projected_area_px(obj: ObjSpec, cam: Camera = Camera()) -> float:
    """Analytic projected footprint area in pixels (test oracle)."""
    if obj.shape == "rect":
        area_in = obj.long_in * obj.short_in
    else:
        area_in = math.pi * (obj.long_in / 2.0) * (obj.short_in / 2.0)
    return area_in / (cam.scale * cam.scale)


def load_scene(text: str) -> SceneSpec:
    """Parse the line-oriented scene format.

    ``table <r> <g> <b> <w_in> <h_in>`` then one line per object::

        obj <id> <rect|ellipse> <cx> <cy> <long> <short> <deg> <height> <r,g,b:frac>[;...]

    Comments start with ``#``.  Malformed lines raise SceneError naming the
    line number.
    """
    table_color = SceneSpec.table_color
    table_w, table_h = SceneSpec.table_w, SceneSpec.table_h
    objects: list[ObjSpec] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        try:
            if parts[0] == "table":
                r, g, b = (int(p) for p in parts[1:4])
                table_color = (r, g, b)
                table_w, table_h = float(parts[4]), float(parts[5])
            elif parts[0] == "obj":
                if len(parts) != 10:
                    raise ValueError(f"expected 10 fields, got {len(parts)}")
                paint = []
                for layer in parts[9].split(";"):
                    rgb_s, frac_s = layer.split(":")
                    rgb = tuple(int(c) for c in rgb_s.split(","))
                    paint.append((rgb, float(frac_s)))
                objects.append(ObjSpec(
                    id=parts[1], shape=parts[2],
                    cx=float(parts[3]), cy=float(parts[4]),
                    long_in=float(parts[5]), short_in=float(parts[6]),
                    angle_deg=float(parts[7]), height_in=float(parts[8]),
                    paint=tuple(paint)))
            else:
                raise ValueError(f"unknown directive {parts[0]!r}")
        except SceneError:
            raise
        except (ValueError, IndexError) as exc:
            raise SceneError(f"line {lineno}: {exc}") from exc
    scene = SceneSpec(table_color=table_color, table_w=table_w,
                      table_h=table_h, objects=tuple(objects))
    try:
        scene.validate()
    except SceneError as exc:
        raise SceneError(str(exc)) from exc
    return scene


def dump_scene(scene: SceneSpec) -> str:
    lines = ["table %d %d %d %g %g" % (*scene.table_color, scene.table_w, scene.table_h)]
    for o in scene.objects:
        paint = ";".join("%d,%d,%d:%g" % (*rgb, frac) for rgb, frac in o.paint)
        lines.append("obj %s %s %g %g %g %g %g %g %s" % (
            o.id, o.shape, o.cx, o.cy, o.long_in, o.short_in,
            o.angle_deg, o.height_in, paint))
    return "\n".join(lines) + "\n"
