import math

import numpy as np
import pytest

from tabletalk import worldsim as ws

from conftest import make_world


class TestRenderRgb:
    def test_empty_scene_is_all_table_color(self):
        world = make_world()
        frame = ws.render_rgb(world, rng=np.random.default_rng(0))
        assert frame.shape == (480, 640, 3)
        assert np.all(np.abs(frame.astype(int) - [130, 105, 80]) <= 10)

    def test_footprint_pixel_count_matches_projection(self):
        obj = ws.ObjSpec("bar", "rect", 16, 12, 4, 2, 0, 3, (((200, 30, 30), 1.0),))
        frame = ws.render_rgb(make_world(obj))
        red = np.all(frame == (200, 30, 30), axis=2)
        expected = ws.projected_area_px(obj)
        assert abs(red.sum() - expected) / expected < 0.05

    def test_disjoint_objects_render_disjoint_regions(self, two_object_scene):
        world = ws.WorldState(scene=two_object_scene)
        frame = ws.render_rgb(world)
        m1 = ws.footprint_mask(two_object_scene.objects[0])
        m2 = ws.footprint_mask(two_object_scene.objects[1])
        assert not (m1 & m2).any()
        non_table = ~np.all(frame == (130, 105, 80), axis=2)
        assert (non_table & m1).any() and (non_table & m2).any()

    def test_deterministic_given_seed(self, two_object_scene):
        world = ws.WorldState(scene=two_object_scene)
        f1 = ws.render_rgb(world, rng=np.random.default_rng(9))
        f2 = ws.render_rgb(world, rng=np.random.default_rng(9))
        assert np.array_equal(f1, f2)

    def test_paint_layer_fractions(self):
        obj = ws.ObjSpec("two", "rect", 16, 12, 8, 4, 0, 3,
                         (((200, 30, 30), 0.8), ((5, 5, 5), 0.2)))
        frame = ws.render_rgb(make_world(obj))
        red = np.all(frame == (200, 30, 30), axis=2).sum()
        black = np.all(frame == (5, 5, 5), axis=2).sum()
        assert abs(red / (red + black) - 0.8) < 0.02

    def test_ellipse_paint_fractions_are_area_exact(self):
        obj = ws.ObjSpec("egg", "ellipse", 16, 12, 10, 6, 30, 3,
                         (((200, 30, 30), 0.5), ((30, 60, 200), 0.5)))
        frame = ws.render_rgb(make_world(obj))
        red = np.all(frame == (200, 30, 30), axis=2).sum()
        blue = np.all(frame == (30, 60, 200), axis=2).sum()
        assert abs(red / (red + blue) - 0.5) < 0.02


class TestRenderDepth:
    def test_empty_scene_single_plane(self):
        depth = ws.render_depth(make_world())
        h, w = depth.shape
        cols, rows = np.meshgrid(np.arange(w), np.arange(h))
        wy = (rows + 0.5) * 0.05
        expected = 200.0 - 0.5 * wy
        assert np.allclose(depth, expected, atol=1e-4)

    def test_bottom_of_image_is_nearer(self):
        depth = ws.render_depth(make_world())
        assert depth[-1].mean() < depth[0].mean()

    def test_box_protrudes_by_height(self):
        obj = ws.ObjSpec("box", "rect", 16, 12, 4, 4, 0, 3.0, (((9, 9, 9), 1.0),))
        world = make_world(obj)
        flat = ws.render_depth(make_world())
        depth = ws.render_depth(world)
        mask = ws.footprint_mask(obj)
        assert np.allclose(flat[mask] - depth[mask], 3.0, atol=1e-4)
        assert np.allclose(depth[~mask], flat[~mask], atol=1e-4)

    def test_speckle_fraction(self):
        depth = ws.render_depth(make_world(), speckle=0.01,
                                rng=np.random.default_rng(5))
        frac = (depth == ws.INVALID_DEPTH).mean()
        assert abs(frac - 0.01) < 0.002


class TestApplyArm:
    def test_move_to_current_pose_is_identity(self):
        world = make_world()
        cmd = ws.ArmCommand(world.arm.x, world.arm.y, world.arm.z,
                            world.arm.heading, world.arm.grip)
        after = ws.apply_arm(world, cmd)
        assert after.arm == world.arm
        assert after.held is None
        assert after.clock == world.clock + 1

    def test_linear_interpolation_per_tick(self):
        world = make_world()
        cmd = ws.ArmCommand(x=world.arm.x + 10)
        after = ws.apply_arm(world, cmd)
        assert after.arm.x == pytest.approx(world.arm.x + 1.0)

    def test_close_on_object_grasps_it(self):
        obj = ws.ObjSpec("cup", "rect", 16, 12, 2, 1.5, 0, 2, (((9, 9, 9), 1.0),))
        world = ws.WorldState(scene=ws.SceneSpec(objects=(obj,)),
                              arm=ws.ArmPose(16, 12, 1.5, 0, 3.0))
        for _ in range(10):
            world = ws.apply_arm(world, ws.ArmCommand(grip=0.0))
        assert world.held == "cup"
        assert world.arm.grip == pytest.approx(1.5)

    def test_close_on_empty_air(self):
        world = ws.WorldState(scene=ws.SceneSpec(),
                              arm=ws.ArmPose(16, 12, 1.5, 0, 3.0))
        for _ in range(10):
            world = ws.apply_arm(world, ws.ArmCommand(grip=0.0))
        assert world.held is None
        assert world.arm.grip == pytest.approx(0.0)

    def test_held_object_moves_with_hand_and_releases_at_hand(self):
        obj = ws.ObjSpec("cup", "rect", 16, 12, 2, 1.5, 0, 2, (((9, 9, 9), 1.0),))
        world = ws.WorldState(scene=ws.SceneSpec(objects=(obj,)),
                              arm=ws.ArmPose(16, 12, 1.5, 0, 3.0))
        for _ in range(10):
            world = ws.apply_arm(world, ws.ArmCommand(grip=0.0))
        for _ in range(10):
            world = ws.apply_arm(world, ws.ArmCommand(x=20, y=8))
        assert world.scene.find("cup").cx == pytest.approx(20)
        for _ in range(10):
            world = ws.apply_arm(world, ws.ArmCommand(grip=3.0))
        assert world.held is None
        assert world.scene.find("cup").cx == pytest.approx(20)
        assert world.scene.find("cup").cy == pytest.approx(8)

    def test_object_count_preserved(self, two_object_scene):
        world = ws.WorldState(scene=two_object_scene)
        for _ in range(30):
            world = ws.apply_arm(world, ws.ArmCommand(x=10, y=12, z=1.5, grip=0.0))
        assert len(world.scene.objects) == 2

    def test_workspace_violation_refused(self):
        world = make_world()
        with pytest.raises(ws.WorkspaceError):
            ws.apply_arm(world, ws.ArmCommand(x=100.0))


class TestInjectHand:
    def test_zero_reach_is_identity(self):
        frame = ws.render_rgb(make_world())
        out = ws.inject_hand(frame, (320, 240), 0.0)
        assert np.array_equal(out, frame)

    def test_full_reach_apex_near_tip(self):
        frame = ws.render_rgb(make_world())
        tip = (400.0, 150.0)
        out = ws.inject_hand(frame, tip, 1.0)
        hand = np.all(out == ws.HAND_COLOR, axis=2)
        ys, xs = np.nonzero(hand)
        # extremal wedge pixel: farthest from the lower-left corner
        d = np.hypot(xs - 0, ys - 479)
        far = d.argmax()
        assert math.hypot(xs[far] - tip[0], ys[far] - tip[1]) <= 2.0

    def test_reach_advances_monotonically(self):
        frame = ws.render_rgb(make_world())
        tip = (500.0, 100.0)
        d_prev = -1.0
        for reach in (0.5, 1.0):
            out = ws.inject_hand(frame, tip, reach)
            hand = np.all(out == ws.HAND_COLOR, axis=2)
            ys, xs = np.nonzero(hand)
            d = np.hypot(xs, ys - 479).max()
            assert d > d_prev
            d_prev = d


class TestLoadScene:
    def test_empty_file_gives_default_table(self):
        scene = ws.load_scene("")
        assert scene.objects == ()
        assert scene.table_color == (130, 105, 80)

    def test_shipped_shelf_fixture(self):
        from importlib import resources

        text = (resources.files("tabletalk") / "data/scenes/shelf.scn").read_text()
        scene = ws.load_scene(text)
        assert len(scene.objects) == 4
        assert [o.id for o in scene.objects] == [
            "bottle_aspirin", "bottle_advil1", "bottle_advil2", "med_tylenol"]

    def test_duplicate_id_rejected(self):
        text = ("obj a rect 10 10 2 1 0 2 9,9,9:1\n"
                "obj a rect 20 10 2 1 0 2 9,9,9:1\n")
        with pytest.raises(ws.SceneError, match="duplicate"):
            ws.load_scene(text)

    def test_malformed_line_names_line_number(self):
        with pytest.raises(ws.SceneError, match="line 2"):
            ws.load_scene("table 1 2 3 32 24\nobj broken\n")

    def test_paint_fractions_must_sum_to_one(self):
        with pytest.raises(ws.SceneError, match="fractions"):
            ws.load_scene("obj a rect 10 10 2 1 0 2 9,9,9:0.5\n")

    def test_round_trip(self, two_object_scene):
        text = ws.dump_scene(two_object_scene)
        assert ws.load_scene(text) == two_object_scene


def test_ground_truth_object_count_equals_nontable_regions(two_object_scene):
    """Noise-free render: maximal non-table regions == ground truth count."""
    from scipy import ndimage

    frame = ws.render_rgb(ws.WorldState(scene=two_object_scene))
    non_table = ~np.all(frame == (130, 105, 80), axis=2)
    _, count = ndimage.label(non_table)
    assert count == len(two_object_scene.objects)
