import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tabletalk import arm, percept as pc, worldsim as ws
from tabletalk.lexicon import VerbMacro


def ortho_homography(cam=ws.Camera()):
    img = [(50, 50), (590, 50), (590, 430), (50, 430)]
    return arm.calibrate(img, [cam.to_table(*p) for p in img])


def percept_at(cx, cy, long_in=2.4, short_in=1.4, angle=90, paint=(30, 60, 200)):
    obj = ws.ObjSpec("obj", "rect", cx, cy, long_in, short_in, angle, 3,
                     ((paint, 1.0),))
    world = ws.WorldState(scene=ws.SceneSpec(objects=(obj,)),
                          arm=ws.ArmPose(2, 2, 4, 90, 3))
    frame = ws.render_rgb(world, rng=np.random.default_rng(1))
    return pc.perceive(frame)[0], world


class TestCalibrate:
    def test_unit_square_identity(self):
        pts = [(0, 0), (1, 0), (1, 1), (0, 1)]
        h = arm.calibrate(pts, pts)
        assert np.allclose(h.matrix, np.eye(3), atol=1e-9)

    def test_fifth_point_maps_exactly(self):
        cam = ws.Camera()
        # a letter-size sheet at a known offset supplies the 4 references
        corners_in = [(8.0, 6.0), (16.5, 6.0), (16.5, 17.0), (8.0, 17.0)]
        img = [(x / cam.scale, y / cam.scale) for x, y in corners_in]
        h = arm.calibrate(img, corners_in)
        probe = (321.7, 222.2)
        want = cam.to_table(*probe)
        got = h.map_point(probe)
        assert math.dist(got, want) < 1e-6

    def test_collinear_points_rejected(self):
        img = [(0, 0), (1, 1), (2, 2), (0, 1)]
        with pytest.raises(arm.CalibrationError):
            arm.calibrate(img, [(0, 0), (1, 0), (1, 1), (0, 1)])

    def test_midpoint_linearity(self):
        h = ortho_homography()
        a, b = (100.0, 100.0), (300.0, 200.0)
        mid = ((a[0] + b[0]) / 2, (a[1] + b[1]) / 2)
        ma, mb = h.map_point(a), h.map_point(b)
        assert math.dist(h.map_point(mid),
                         ((ma[0] + mb[0]) / 2, (ma[1] + mb[1]) / 2)) < 1e-9

    def test_point_at_infinity_is_error(self):
        m = np.array([[1.0, 0, 0], [0, 1.0, 0], [1.0, 0, 0]])
        h = arm.Homography(m)
        with pytest.raises(arm.CalibrationError):
            h.map_point((0.0, 5.0))

    @given(st.floats(1, 639), st.floats(1, 479))
    @settings(max_examples=100, deadline=None)
    def test_inverse_round_trip(self, x, y):
        h = ortho_homography()
        back = h.inverse().map_point(h.map_point((x, y)))
        assert math.dist(back, (x, y)) < 1e-9


class TestPlanGrasp:
    def test_axis_zero_via_offset(self):
        p, _ = percept_at(10, 5, long_in=4, short_in=2, angle=0)
        plan = arm.plan_grasp(p, ortho_homography())
        assert plan.grasp.z == 1.5
        assert plan.via.z == 1.5
        assert plan.via.x == pytest.approx(plan.grasp.x - 3.5, abs=1e-9)
        assert plan.via.y == pytest.approx(plan.grasp.y, abs=1e-9)
        assert math.dist((plan.via.x, plan.via.y),
                         (plan.grasp.x, plan.grasp.y)) == pytest.approx(3.5)

    def test_axis_ninety_via_offset(self):
        p, _ = percept_at(10, 8, angle=90)
        plan = arm.plan_grasp(p, ortho_homography())
        assert plan.via.y == pytest.approx(plan.grasp.y - 3.5, abs=1e-9)
        assert plan.via.x == pytest.approx(plan.grasp.x, abs=1e-9)

    def test_out_of_reach_fails(self):
        p, _ = percept_at(30, 12)
        tight = ws.ArmLimits(box_x=(0, 20), box_y=(0, 24))
        with pytest.raises(arm.GraspError):
            arm.plan_grasp(p, ortho_homography(), tight)


class TestFeasibility:
    def test_small_bottle_ok(self):
        p, _ = percept_at(16, 12)
        assert arm.feasibility(p, ortho_homography()) == "ok"

    def test_lettuce_too_big(self):
        obj = ws.ObjSpec("lettuce", "ellipse", 16, 12, 6, 6, 0, 5,
                         (((50, 150, 50), 1.0),))
        frame = ws.render_rgb(ws.WorldState(scene=ws.SceneSpec(objects=(obj,))),
                              rng=np.random.default_rng(2))
        p = pc.perceive(frame)[0]
        assert arm.feasibility(p, ortho_homography()) == "too_big"

    def test_far_object_out_of_reach(self):
        p, _ = percept_at(30, 12)
        tight = ws.ArmLimits(box_x=(0, 20))
        assert arm.feasibility(p, ortho_homography(), tight) == "out_of_reach"


def make_ctx():
    return arm.ArmContext(homography=ortho_homography(),
                          home=ws.ArmPose(2, 2, 4, 90, 3))


class TestRoutines:
    def test_extend_then_retract_returns_to_start(self):
        ctx = make_ctx()
        world = ws.WorldState(scene=ws.SceneSpec(), arm=ws.ArmPose(16, 12, 4, 0, 3))
        w1, s1 = arm.run_routine(arm.ExtendHand(ctx, 1.0), world)
        assert s1.state == "done"
        assert math.dist((w1.arm.x, w1.arm.y), (19, 12)) <= 0.1
        w2, s2 = arm.run_routine(arm.ExtendHand(ctx, -1.0), w1)
        assert s2.state == "done"
        assert math.dist((w2.arm.x, w2.arm.y), (16, 12)) <= 0.1

    def test_close_on_empty_air(self):
        ctx = make_ctx()
        world = ws.WorldState(scene=ws.SceneSpec(), arm=ws.ArmPose(16, 12, 1.5, 0, 3))
        w, s = arm.run_routine(arm.CloseHand(ctx), world)
        assert s.state == "done"
        assert w.arm.grip == pytest.approx(0.0)
        assert w.held is None

    def test_grab_cycle_deposits_at_home(self):
        ctx = make_ctx()
        p, world = percept_at(16, 12)
        w, s = arm.run_routine(arm.GrabCycle(ctx, focus=p), world)
        assert s.state == "done"
        assert w.held is None
        obj = w.scene.find("obj")
        assert math.dist((obj.cx, obj.cy), (2, 2)) <= 0.2

    def test_unknown_routine_fails(self):
        with pytest.raises(KeyError):
            arm.make_routine("LevitateHand", make_ctx())

    def test_tick_budget_bounds_every_composite(self):
        ctx = make_ctx()
        p, world = percept_at(20, 15)
        for name in ("TablePoint", "TableLift", "GrabCycle", "Home", "Wave"):
            routine = arm.make_routine(name, ctx, focus=p)
            _, status = arm.run_routine(routine, world, budget=2000)
            assert status.state == "done", (name, status.reason)

    def test_give_cycle_waits_and_replaces(self):
        ctx = make_ctx()
        p, world = percept_at(16, 12)
        give = arm.GiveCycle(ctx, focus=p)
        world, status = arm.run_routine(give, world)
        assert status.state == "running" and give.waiting_for == "release"
        assert world.held == "obj"
        give.signal("release")
        world, status = arm.run_routine(give, world)
        assert give.waiting_for == "regrasp"
        assert world.held is None
        give.signal("regrasp")
        world, status = arm.run_routine(give, world)
        assert status.state == "done"
        obj = world.scene.find("obj")
        assert math.dist((obj.cx, obj.cy), (16, 12)) <= 0.2

    def test_give_cycle_abort_goes_home(self):
        ctx = make_ctx()
        p, world = percept_at(16, 12)
        give = arm.GiveCycle(ctx, focus=p)
        world, _ = arm.run_routine(give, world)
        give.signal("release")
        world, _ = arm.run_routine(give, world)
        give.signal("abort")
        world, status = arm.run_routine(give, world)
        assert status.state == "failed"
        assert math.dist((world.arm.x, world.arm.y), (2, 2)) <= 0.2


class TestMacroRecorder:
    def test_fig_style_teaching_sequence(self):
        rec = arm.MacroRecorder()
        rec.begin("poke")
        rec.append("TablePoint", 1.0)
        rec.append("ExtendHand", 1.0)
        rec.append("ExtendHand", -1.0)
        macro = rec.finish("poke")
        assert macro.steps == (("TablePoint", 1.0), ("ExtendHand", 1.0),
                               ("ExtendHand", -1.0))
        assert macro.arity == 1
        assert not rec.open

    def test_finish_without_steps_is_error(self):
        rec = arm.MacroRecorder()
        rec.begin()
        with pytest.raises(arm.RecorderError):
            rec.finish("noop")

    def test_append_while_closed_ignored(self):
        rec = arm.MacroRecorder()
        rec.append("ExtendHand", 1.0)
        assert rec.steps == []

    def test_non_indexical_macro_is_arity_zero(self):
        rec = arm.MacroRecorder()
        rec.begin()
        rec.append("ExtendHand", 1.0)
        rec.append("ExtendHand", -1.0)
        assert rec.finish("wave").arity == 0


class TestMacroPlayback:
    POKE = VerbMacro("poke", 1, (("TablePoint", 1.0), ("ExtendHand", 1.0),
                                 ("ExtendHand", -1.0)))

    def test_arity_one_requires_focus(self):
        with pytest.raises(arm.GraspError):
            arm.play_macro(self.POKE, make_ctx(), focus=None)

    def test_playback_matches_teaching_commands(self):
        """Replaying the macro reaches the same world state as running the
        recorded routines one by one."""
        ctx = make_ctx()
        p, world = percept_at(16, 12)

        taught = world
        for name, param in self.POKE.steps:
            routine = arm.make_routine(name, ctx, param=param, focus=p)
            taught, status = arm.run_routine(routine, taught)
            assert status.state == "done"

        played, status = arm.run_routine(
            arm.play_macro(self.POKE, ctx, focus=p), world)
        assert status.state == "done"
        assert played.arm == taught.arm
        assert played.scene == taught.scene

    def test_unknown_step_fails(self):
        ctx = make_ctx()
        bad = VerbMacro("zap", 0, (("Teleport", 1.0),))
        _, status = arm.run_routine(arm.play_macro(bad, ctx),
                                    ws.WorldState(scene=ws.SceneSpec()))
        assert status.state == "failed"

    def test_nested_macro_replays(self):
        ctx = make_ctx()
        p, world = percept_at(16, 12)
        double = VerbMacro("double-poke", 1, (("poke", 1.0), ("poke", 1.0)))
        macros = {"poke": self.POKE, "double-poke": double}
        routine = arm.play_macro(double, ctx, focus=p,
                                 resolver=lambda n: macros.get(n))
        world2, status = arm.run_routine(routine, world, budget=4000)
        assert status.state == "done"
