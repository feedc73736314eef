import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tabletalk import percept as pc
from tabletalk import worldsim as ws

from conftest import make_world


from oracles import brute_force_base_point


def disk_mask(r, size=201):
    yy, xx = np.mgrid[0:size, 0:size]
    c = size // 2
    return (xx - c) ** 2 + (yy - c) ** 2 <= r * r


class TestBoostColorfulness:
    def test_scales_to_saturation(self):
        frame = np.full((2, 2, 3), (100, 50, 25), dtype=np.uint8)
        out = pc.boost_colorfulness(frame)
        assert tuple(out[0, 0]) == (255, 128, 64)

    def test_leaves_saturated_pixels(self):
        frame = np.full((1, 1, 3), (255, 10, 10), dtype=np.uint8)
        assert tuple(pc.boost_colorfulness(frame)[0, 0]) == (255, 10, 10)

    def test_factor_capped_at_five(self):
        frame = np.full((1, 1, 3), (10, 10, 10), dtype=np.uint8)
        assert tuple(pc.boost_colorfulness(frame)[0, 0]) == (50, 50, 50)

    def test_all_zero_pixel_safe(self):
        frame = np.zeros((1, 1, 3), dtype=np.uint8)
        assert tuple(pc.boost_colorfulness(frame)[0, 0]) == (0, 0, 0)

    @given(st.tuples(st.integers(61, 255), st.integers(0, 255), st.integers(0, 255)))
    @settings(max_examples=60, deadline=None)
    def test_hue_preserved(self, rgb):
        frame = np.array([[rgb]], dtype=np.uint8)
        before = pc._hsi(frame.reshape(1, 3).astype(np.uint8))
        out = pc.boost_colorfulness(frame)
        after = pc._hsi(out.reshape(1, 3))
        if before[1][0] > 60:  # saturated enough for hue to be meaningful
            dh = abs(before[0][0] - after[0][0]) % 360
            assert min(dh, 360 - dh) <= 1.5


class TestOpponentChannels:
    def test_gray_is_zero(self):
        frame = np.full((1, 1, 3), (77, 77, 77), dtype=np.uint8)
        rg, yb = pc.opponent_channels(frame)
        assert rg[0, 0] == 0 and yb[0, 0] == 0

    def test_pure_red(self):
        frame = np.full((1, 1, 3), (255, 0, 0), dtype=np.uint8)
        rg, yb = pc.opponent_channels(frame)
        assert rg[0, 0] == 255 and yb[0, 0] == 255

    def test_pure_blue(self):
        frame = np.full((1, 1, 3), (0, 0, 255), dtype=np.uint8)
        rg, yb = pc.opponent_channels(frame)
        assert rg[0, 0] == 0 and yb[0, 0] == -510


class TestTableColorModel:
    def test_uniform_table_brackets_table_values(self):
        frame = ws.render_rgb(make_world(), rng=np.random.default_rng(0))
        boosted = pc.boost_colorfulness(frame)
        rg, yb = pc.opponent_channels(boosted)
        model = pc.fit_table_color(rg, yb)
        h = rg.shape[0]
        band = slice(h // 3, 2 * h // 3)
        rg_med = int(np.median(rg[band]))
        yb_med = int(np.median(yb[band]))
        assert model.rg_lo <= rg_med <= model.rg_hi
        assert model.yb_lo <= yb_med <= model.yb_hi

    def test_small_object_falls_outside(self):
        obj = ws.ObjSpec("dot", "rect", 16, 12, 3, 2, 0, 2, (((30, 60, 200), 1.0),))
        frame = ws.render_rgb(make_world(obj), rng=np.random.default_rng(1))
        boosted = pc.boost_colorfulness(frame)
        rg, yb = pc.opponent_channels(boosted)
        model = pc.fit_table_color(rg, yb)
        mask = ws.footprint_mask(obj)
        inside = (rg >= model.rg_lo) & (rg <= model.rg_hi) \
            & (yb >= model.yb_lo) & (yb <= model.yb_hi)
        assert inside[mask].mean() < 0.05

    def test_bimodal_band_keeps_taller_mode(self):
        # object covers just under half of the center band
        obj = ws.ObjSpec("slab", "rect", 8, 12, 14, 7.5, 0, 2, (((30, 60, 200), 1.0),))
        frame = ws.render_rgb(make_world(obj), rng=np.random.default_rng(2))
        boosted = pc.boost_colorfulness(frame)
        rg, yb = pc.opponent_channels(boosted)
        model = pc.fit_table_color(rg, yb)
        table_rg = int(np.median(rg[ws.footprint_mask(obj) == False]))  # noqa: E712
        slab_rg = int(np.median(rg[ws.footprint_mask(obj)]))
        assert model.rg_lo <= table_rg <= model.rg_hi
        assert not (model.rg_lo <= slab_rg <= model.rg_hi)

    def test_permutation_invariance(self):
        a = ws.ObjSpec("a", "rect", 8, 12, 3, 2, 0, 2, (((30, 60, 200), 1.0),))
        b = ws.ObjSpec("b", "rect", 24, 12, 3, 2, 0, 2, (((200, 30, 30), 1.0),))
        models = []
        for objs in ((a, b), (b, a)):
            frame = ws.render_rgb(
                ws.WorldState(scene=ws.SceneSpec(objects=objs)),
                rng=np.random.default_rng(3))
            boosted = pc.boost_colorfulness(frame)
            models.append(pc.fit_table_color(*pc.opponent_channels(boosted)))
        assert models[0] == models[1]

    def test_all_table_mask_white(self):
        frame = ws.render_rgb(make_world())
        boosted = pc.boost_colorfulness(frame)
        rg, yb = pc.opponent_channels(boosted)
        model = pc.fit_table_color(rg, yb)
        assert pc.table_mask(boosted, model).all()


class TestFitPlane:
    def test_exact_plane_recovered(self):
        depth = ws.render_depth(make_world())
        model, inliers = pc.fit_plane(depth)
        assert inliers.all()
        assert model.a == pytest.approx(0.0, abs=1e-6)
        assert model.b == pytest.approx(-0.5 * 0.05, abs=1e-6)
        assert model.c == pytest.approx(200.0 - 0.5 * 0.025, abs=1e-4)

    def test_box_excluded_from_inliers(self):
        obj = ws.ObjSpec("box", "rect", 16, 12, 4, 4, 0, 3, (((9, 9, 9), 1.0),))
        depth = ws.render_depth(make_world(obj))
        _, inliers = pc.fit_plane(depth)
        mask = ws.footprint_mask(obj)
        assert not inliers[mask].any()
        assert inliers[~mask].mean() > 0.99

    def test_speckle_does_not_move_coefficients(self):
        clean = ws.render_depth(make_world())
        speckled = ws.render_depth(make_world(), speckle=0.01,
                                   rng=np.random.default_rng(4))
        m1, _ = pc.fit_plane(clean)
        m2, _ = pc.fit_plane(speckled)
        assert m1.a == pytest.approx(m2.a, abs=1e-3)
        assert m1.b == pytest.approx(m2.b, abs=1e-3)
        assert m1.c == pytest.approx(m2.c, abs=0.1)

    def test_mostly_invalid_is_error(self):
        depth = np.zeros((480, 640), dtype=np.float32)
        with pytest.raises(pc.PerceptError, match="valid"):
            pc.fit_plane(depth)


class TestExtractObjects:
    def test_three_object_render(self):
        objs = [
            ws.ObjSpec("a", "rect", 6, 8, 4, 2, 20, 2, (((200, 30, 30), 1.0),)),
            ws.ObjSpec("b", "rect", 16, 14, 3, 2, 70, 2, (((30, 60, 200), 1.0),)),
            ws.ObjSpec("c", "ellipse", 26, 9, 4, 2.5, 120, 2, (((50, 150, 50), 1.0),)),
        ]
        frame = ws.render_rgb(make_world(*objs))
        boosted = pc.boost_colorfulness(frame)
        model = pc.fit_table_color(*pc.opponent_channels(boosted))
        blobs = pc.extract_objects(pc.table_mask(boosted, model))
        assert len(blobs) == 3
        areas = sorted(b.pixel_count for b in blobs)
        expected = sorted(ws.projected_area_px(o) for o in objs)
        for got, want in zip(areas, expected):
            assert abs(got - want) / want < 0.05

    def test_empty_table_has_zero_blobs(self):
        frame = ws.render_rgb(make_world(), rng=np.random.default_rng(0))
        boosted = pc.boost_colorfulness(frame)
        model = pc.fit_table_color(*pc.opponent_channels(boosted))
        assert pc.extract_objects(pc.table_mask(boosted, model)) == []

    def test_axis_of_elongated_rectangle(self):
        mask = np.zeros((100, 100), dtype=bool)
        mask[45:55, 20:60] = True  # 40x10, long axis horizontal
        blobs = pc.extract_objects(~np.zeros((100, 100), dtype=bool) ^ ~mask)
        # build via the public path instead: table white, hole black
        table = np.ones((100, 100), dtype=bool)
        table[45:55, 20:60] = False
        blobs = pc.extract_objects(table)
        assert len(blobs) == 1
        assert min(blobs[0].axis_deg, 180 - blobs[0].axis_deg) <= 3.0

    def test_rotated_rectangle_axis_matches_moment_oracle(self):
        obj = ws.ObjSpec("r", "rect", 16, 12, 5, 2, 30, 2, (((200, 30, 30), 1.0),))
        frame = ws.render_rgb(make_world(obj))
        boosted = pc.boost_colorfulness(frame)
        model = pc.fit_table_color(*pc.opponent_channels(boosted))
        blob = pc.extract_objects(pc.table_mask(boosted, model))[0]
        assert blob.axis_deg == pytest.approx(30.0, abs=3.0)

    def test_no_table_is_error(self):
        with pytest.raises(pc.PerceptError):
            pc.extract_objects(np.zeros((50, 50), dtype=bool))


class TestBasePoint:
    def test_circle(self):
        r = 12
        mask = disk_mask(r, 101)
        blob = pc.ObjectBlob(mask=mask, pixel_count=int(mask.sum()),
                             axis_deg=90.0, base_pt=(0, 0), bbox=(38, 38, 62, 62))
        bx, by = pc.base_point(blob)
        ox, oy = brute_force_base_point(mask)
        assert math.hypot(bx - ox, by - oy) <= 1e-6
        # analytic: within 2 px of the point r/2 above the lowest pixel
        assert math.hypot(bx - 50, by - (50 + r - r / 2)) <= 2.0

    def test_square(self):
        table = np.ones((101, 101), dtype=bool)
        table[30:61, 30:61] = False  # side 31
        blob = pc.extract_objects(table)[0]
        bx, by = blob.base_pt
        # s/2 above the bottom edge midpoint
        assert bx == pytest.approx(45.0, abs=1.0)
        assert by == pytest.approx(60 - 31 / 2, abs=1.0)
        ox, oy = brute_force_base_point(~table)
        assert math.hypot(bx - ox, by - oy) <= 1e-6

    def test_one_pixel_wide_line(self):
        mask = np.zeros((101, 101), dtype=bool)
        mask[20:80, 50] = True
        blob_geom = pc.base_point(pc.ObjectBlob(
            mask=mask, pixel_count=60, axis_deg=90.0, base_pt=(0, 0),
            bbox=(50, 20, 50, 79)))
        assert blob_geom[0] == pytest.approx(50.0, abs=0.6)
        assert blob_geom[1] == pytest.approx(79.0, abs=0.6)


class TestClassifyColors:
    def _blob_for(self, obj, frame):
        boosted = pc.boost_colorfulness(frame)
        model = pc.fit_table_color(*pc.opponent_channels(boosted))
        return pc.extract_objects(pc.table_mask(boosted, model))[0]

    def test_saturated_red(self):
        obj = ws.ObjSpec("r", "rect", 16, 12, 5, 3, 0, 2, (((200, 30, 30), 1.0),))
        frame = ws.render_rgb(make_world(obj), rng=np.random.default_rng(0))
        hist = pc.classify_colors(frame, self._blob_for(obj, frame))
        assert hist[pc.COLOR_BINS.index("red")] >= 0.95

    def test_two_tone_red_black(self):
        obj = ws.ObjSpec("t", "rect", 16, 12, 5, 2, 0, 3,
                         (((200, 30, 30), 0.8), ((5, 5, 5), 0.2)))
        frame = ws.render_rgb(make_world(obj), rng=np.random.default_rng(1))
        hist = pc.classify_colors(frame, self._blob_for(obj, frame))
        assert hist[pc.COLOR_BINS.index("red")] == pytest.approx(0.8, abs=0.05)
        assert hist[pc.COLOR_BINS.index("black")] == pytest.approx(0.2, abs=0.05)

    def test_mid_gray_is_gray(self):
        obj = ws.ObjSpec("g", "rect", 16, 12, 5, 3, 0, 2, (((120, 120, 120), 1.0),))
        frame = ws.render_rgb(make_world(obj), rng=np.random.default_rng(2))
        hist = pc.classify_colors(frame, self._blob_for(obj, frame))
        assert hist[pc.COLOR_BINS.index("gray")] >= 0.95

    def test_erosion_fallback_on_tiny_blob(self):
        frame = np.full((20, 20, 3), (200, 30, 30), dtype=np.uint8)
        mask = np.zeros((20, 20), dtype=bool)
        mask[5:8, 5:8] = True  # erodes to nothing
        blob = pc.ObjectBlob(mask=mask, pixel_count=9, axis_deg=90.0,
                             base_pt=(6, 7), bbox=(5, 5, 7, 7))
        hist = pc.classify_colors(frame, blob)
        assert hist[pc.COLOR_BINS.index("red")] == pytest.approx(1.0)


class TestDescribeColors:
    def _hist(self, **kw):
        h = np.zeros(9)
        for name, v in kw.items():
            h[pc.COLOR_BINS.index(name)] = v
        return h

    def test_single_dominant(self):
        assert pc.describe_colors(self._hist(red=0.8, black=0.2)) == ["red"]

    def test_expanded_description(self):
        got = pc.describe_colors(self._hist(white=0.55, red=0.45))
        assert got == ["white", "red"]

    def test_pure_color(self):
        assert pc.describe_colors(self._hist(green=1.0)) == ["green"]

    @given(st.lists(st.floats(0.0, 1.0), min_size=9, max_size=9)
           .filter(lambda v: sum(v) > 0))
    @settings(max_examples=100, deadline=None)
    def test_nonempty_whenever_hist_is(self, values):
        h = np.array(values) / sum(values)
        out = pc.describe_colors(h)
        assert out and out[0] == pc.COLOR_BINS[int(np.argmax(h))]


class TestPerceive:
    def test_empty_scene(self):
        frame = ws.render_rgb(make_world(), rng=np.random.default_rng(0))
        assert pc.perceive(frame) == []

    def test_shelf_fixture_dominants(self):
        from importlib import resources

        text = (resources.files("tabletalk") / "data/scenes/shelf.scn").read_text()
        scene = ws.load_scene(text)
        frame = ws.render_rgb(ws.WorldState(scene=scene),
                              rng=np.random.default_rng(0))
        percepts = pc.perceive(frame)
        assert [p.dominant[0] for p in percepts] == ["white", "green", "green", "red"]
        assert [p.id for p in percepts] == [0, 1, 2, 3]

    def test_depth_path_agrees_on_count(self, two_object_scene):
        world = ws.WorldState(scene=two_object_scene)
        frame = ws.render_rgb(world, rng=np.random.default_rng(1))
        depth = ws.render_depth(world)
        assert len(pc.perceive(frame, depth)) == len(pc.perceive(frame))

    @given(st.integers(0, 10_000))
    @settings(max_examples=25, deadline=None)
    def test_hist_normalization(self, seed):
        obj = ws.ObjSpec("x", "rect", 16, 12, 5, 3, 0, 2,
                         (((200, 30, 30), 0.5), ((30, 60, 200), 0.5)))
        frame = ws.render_rgb(make_world(obj), rng=np.random.default_rng(seed))
        for p in pc.perceive(frame):
            assert p.hist.sum() == pytest.approx(1.0, abs=1e-6)
            assert (p.hist >= 0).all()


def test_base_points_match_ground_truth_oracle(two_object_scene):
    """Noise-free fixture base points within 4 px of the footprint oracle."""
    world = ws.WorldState(scene=two_object_scene)
    frame = ws.render_rgb(world)
    percepts = pc.perceive(frame)
    oracle_pts = sorted(
        (brute_force_base_point(ws.footprint_mask(o)) for o in two_object_scene.objects),
        key=lambda p: p[0])
    for p, want in zip(percepts, oracle_pts):
        assert math.hypot(p.blob.base_pt[0] - want[0],
                          p.blob.base_pt[1] - want[1]) <= 4.0
