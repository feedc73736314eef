"""Tabletop perception pipeline.

Finds the table by its opponent-channel color model (or by a depth plane),
extracts object blobs from the holes in the table mask, and computes per-blob
geometry (axis of minimal inertia, base point) and a 9-class semantic color
histogram with a dominant-color description.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .worldsim import INVALID_DEPTH

COLOR_BINS = ("red", "orange", "yellow", "green", "blue", "violet",
              "black", "gray", "white")
_BIN_INDEX = {name: i for i, name in enumerate(COLOR_BINS)}


class PerceptError(Exception):
    pass


@dataclass(frozen=True)
class PerceptConfig:
    peak_fraction: float = 0.1       # histogram threshold relative to peak
    plane_strips: int = 16
    plane_tol: float = 1.5           # inlier residual, depth units
    morph_kernel: int = 3
    min_blob_area: int = 50
    mask_erode: int = 2              # px shrunk before color classification
    black_max_i: float = 45.0
    white_min_i: float = 210.0
    gray_max_s: float = 60.0
    # Hue bin edges, degrees: red wraps around 0.
    hue_edges: tuple[float, ...] = (20.0, 45.0, 70.0, 160.0, 260.0, 340.0)
    dominant_solo: float = 2.0       # single color if >= 2x every other bin
    dominant_keep: float = 0.3       # extra colors above 0.3x the dominant


@dataclass(frozen=True)
class TableColorModel:
    rg_lo: int
    rg_hi: int
    yb_lo: int
    yb_hi: int

    def __post_init__(self):
        if not (self.rg_lo < self.rg_hi and self.yb_lo < self.yb_hi):
            raise PerceptError("table color thresholds must satisfy lo < hi")


@dataclass(frozen=True)
class PlaneModel:
    a: float
    b: float
    c: float
    tol: float

    def predict(self, cols: np.ndarray, rows: np.ndarray) -> np.ndarray:
        return self.a * cols + self.b * rows + self.c


@dataclass
class ObjectBlob:
    mask: np.ndarray            # full-frame bool raster
    pixel_count: int
    axis_deg: float             # axis of minimal inertia, [0, 180)
    base_pt: tuple[float, float]
    bbox: tuple[int, int, int, int]   # x0, y0, x1, y1 inclusive
    axial_extent: float = 0.0
    perp_extent: float = 0.0


@dataclass
class ObjectPercept:
    id: int
    blob: ObjectBlob
    hist: np.ndarray            # 9 fractions in COLOR_BINS order
    dominant: list[str]
    name: str | None = None     # filled in by the lexicon, when recognized


def boost_colorfulness(frame: np.ndarray) -> np.ndarray:
    """Scale each pixel so its max channel reaches 255 (factor capped at 5).

    Saturation and intensity rise; hue is unchanged.  All-zero pixels take
    the capped factor rather than dividing by zero.
    """
    f = frame.astype(np.float64)
    peak = f.max(axis=2)
    factor = np.where(peak > 0, np.minimum(5.0, 255.0 / np.maximum(peak, 1e-9)), 5.0)
    out = f * factor[..., None]
    # exact ties like 127.5 sit a few ulp low after the division; keep half-up
    return np.clip(np.floor(out + 0.5 + 1e-6), 0, 255).astype(np.uint8)


def opponent_channels(frame: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Signed opponent images: RG = R - G and YB = R + G - 2B."""
    f = frame.astype(np.int32)
    rg = f[..., 0] - f[..., 1]
    yb = f[..., 0] + f[..., 1] - 2 * f[..., 2]
    return rg, yb


def _band_thresholds(values: np.ndarray, peak_fraction: float) -> tuple[int, int]:
    """Nearest bins below the cutoff, scanning outward from the peak; bins
    just past the observed range count as empty, so lo < hi always holds."""
    lo_edge = int(values.min())
    counts = np.bincount((values - lo_edge).ravel())
    peak_idx = int(counts.argmax())
    cutoff = peak_fraction * counts[peak_idx]
    lo = peak_idx
    while lo >= 0 and counts[lo] >= cutoff:
        lo -= 1
    hi = peak_idx
    while hi < len(counts) and counts[hi] >= cutoff:
        hi += 1
    return lo + lo_edge, hi + lo_edge


def fit_table_color(rg: np.ndarray, yb: np.ndarray,
                    cfg: PerceptConfig = PerceptConfig()) -> TableColorModel:
    """Histogram the opponent values over the center-third horizontal band
    and bracket each peak where counts fall below ``peak_fraction`` of it."""
    h = rg.shape[0]
    band = slice(h // 3, 2 * h // 3)
    rg_band, yb_band = rg[band], yb[band]
    if rg_band.size == 0:
        raise PerceptError("empty center band")
    rg_lo, rg_hi = _band_thresholds(rg_band, cfg.peak_fraction)
    yb_lo, yb_hi = _band_thresholds(yb_band, cfg.peak_fraction)
    return TableColorModel(rg_lo, rg_hi, yb_lo, yb_hi)


def table_mask(frame: np.ndarray, model: TableColorModel) -> np.ndarray:
    """White where the boosted pixel lies inside both opponent windows."""
    rg, yb = opponent_channels(frame)
    return ((rg >= model.rg_lo) & (rg <= model.rg_hi)
            & (yb >= model.yb_lo) & (yb <= model.yb_hi))


def _strip_line(cols: np.ndarray, rows: np.ndarray, d: np.ndarray,
                tol: float) -> tuple[float, float] | None:
    """Robust depth-vs-row line for one strip: LSQ with outlier rejection."""
    if rows.size < 10:
        return None
    keep = np.ones(rows.size, dtype=bool)
    m = q = 0.0
    for _ in range(3):
        if keep.sum() < 10:
            return None
        A = np.stack([rows[keep], np.ones(keep.sum())], axis=1)
        m, q = np.linalg.lstsq(A, d[keep], rcond=None)[0]
        res = np.abs(d - (m * rows + q))
        new_keep = res <= max(tol, np.median(res[keep]) * 3)
        if (new_keep == keep).all():
            break
        keep = new_keep
    return float(m), float(q)


def fit_plane(depth: np.ndarray, cfg: PerceptConfig = PerceptConfig()
              ) -> tuple[PlaneModel, np.ndarray]:
    """Strip-wise line fits merged into one plane: depth = a*x + b*y + c.

    Strips whose lines agree with the majority are pooled for a final
    least-squares plane with one outlier-rejection pass; the inlier mask
    marks valid pixels within ``plane_tol`` of the plane.
    """
    valid = depth != INVALID_DEPTH
    if valid.mean() < 0.5:
        raise PerceptError("fewer than 50% valid depth pixels")
    h, w = depth.shape
    rows_g, cols_g = np.mgrid[0:h, 0:w]
    bounds = np.linspace(0, w, cfg.plane_strips + 1).astype(int)
    lines = []
    for i in range(cfg.plane_strips):
        sl = (slice(None), slice(bounds[i], bounds[i + 1]))
        v = valid[sl]
        fit = _strip_line(cols_g[sl][v].astype(float), rows_g[sl][v].astype(float),
                          depth[sl][v].astype(float), cfg.plane_tol)
        lines.append(fit)
    fitted = [f for f in lines if f is not None]
    if not fitted:
        raise PerceptError("no strip admitted a line fit")
    slopes = np.array([m for m, _ in fitted])
    inters = np.array([q for _, q in fitted])
    med_m, med_q = np.median(slopes), np.median(inters)
    compatible = [i for i, f in enumerate(lines)
                  if f is not None
                  and abs(f[0] - med_m) <= 0.05
                  and abs(f[1] - med_q) <= 3.0 * cfg.plane_tol]
    if len(compatible) <= cfg.plane_strips // 2:
        raise PerceptError("no compatible strip majority for plane fit")

    pool = np.zeros_like(valid)
    for i in compatible:
        pool[:, bounds[i]:bounds[i + 1]] = True
    pool &= valid
    cols = cols_g[pool].astype(float)
    rows = rows_g[pool].astype(float)
    d = depth[pool].astype(float)
    coeffs = (0.0, 0.0, 0.0)
    keep = np.ones(d.size, dtype=bool)
    for _ in range(2):
        A = np.stack([cols[keep], rows[keep], np.ones(keep.sum())], axis=1)
        coeffs = np.linalg.lstsq(A, d[keep], rcond=None)[0]
        keep = np.abs(d - (coeffs[0] * cols + coeffs[1] * rows + coeffs[2])) <= cfg.plane_tol
    model = PlaneModel(float(coeffs[0]), float(coeffs[1]), float(coeffs[2]), cfg.plane_tol)
    residual = np.abs(depth - model.predict(cols_g.astype(float), rows_g.astype(float)))
    return model, valid & (residual <= cfg.plane_tol)


def _blob_geometry(mask: np.ndarray) -> ObjectBlob:
    ys, xs = np.nonzero(mask)
    n = xs.size
    cx, cy = xs.mean(), ys.mean()
    dx, dy = xs - cx, ys - cy
    mu20 = float((dx * dx).sum())
    mu02 = float((dy * dy).sum())
    mu11 = float((dx * dy).sum())
    scale = mu20 + mu02
    if abs(mu20 - mu02) < 1e-9 * max(scale, 1.0) and abs(mu11) < 1e-9 * max(scale, 1.0):
        axis = 90.0  # isotropic blob: prefer the vertical axis
    else:
        axis = math.degrees(0.5 * math.atan2(2.0 * mu11, mu20 - mu02)) % 180.0
    blob = ObjectBlob(
        mask=mask, pixel_count=int(n), axis_deg=axis, base_pt=(cx, cy),
        bbox=(int(xs.min()), int(ys.min()), int(xs.max()), int(ys.max())))
    blob.base_pt = base_point(blob)
    return blob


def base_point(blob: ObjectBlob) -> tuple[float, float]:
    """Table-contact point: half the characteristic width up the axis from
    the lowest axial extent.

    Widths are projected perpendicular to the axis; the characteristic width
    is the median over the lowest quarter of the axial extent.  The axis
    direction is taken pointing down the image, or rightward within a small
    dead zone around horizontal so noise jitter on a level axis cannot flip
    which end counts as lowest.
    """
    ys, xs = np.nonzero(blob.mask)
    cx, cy = xs.mean(), ys.mean()
    th = math.radians(blob.axis_deg)
    ux, uy = math.cos(th), math.sin(th)
    if uy < -0.05 or (abs(uy) <= 0.05 and ux < 0):
        ux, uy = -ux, -uy
    t = (xs - cx) * ux + (ys - cy) * uy
    v = -(xs - cx) * uy + (ys - cy) * ux
    t_min, t_max = t.min(), t.max()
    extent = t_max - t_min
    blob.axial_extent = float(extent) + 1.0
    perp = v.max() - v.min()
    blob.perp_extent = float(perp) + 1.0
    if extent < 1.0:
        return (float(xs[t.argmax()]), float(ys[t.argmax()]))
    low = t >= t_max - extent / 4.0
    bins = np.floor(t[low] - (t_max - extent / 4.0)).astype(int)
    widths = [v[low][bins == b].max() - v[low][bins == b].min() + 1.0
              for b in np.unique(bins)]
    char_w = float(np.median(widths))
    base_t = t_max - char_w / 2.0
    return (float(cx + ux * base_t), float(cy + uy * base_t))


def extract_objects(mask: np.ndarray, cfg: PerceptConfig = PerceptConfig()
                    ) -> list[ObjectBlob]:
    """Blobs from the holes in the table mask.

    The mask edges are smoothed morphologically, the largest white component
    is taken as the table, and every enclosed black component above the
    minimum area becomes an ObjectBlob.
    """
    # Close first: isolated off-color noise pixels are holes in the table and
    # would balloon under an initial erosion.  Then open to drop white specks.
    kernel = np.ones((cfg.morph_kernel, cfg.morph_kernel), dtype=bool)
    smooth = ndimage.binary_opening(ndimage.binary_closing(mask, structure=kernel),
                                    structure=kernel)
    labels, count = ndimage.label(smooth)
    if count == 0:
        raise PerceptError("no table component found")
    sizes = ndimage.sum_labels(np.ones_like(labels), labels, index=range(1, count + 1))
    table = labels == (1 + int(np.argmax(sizes)))
    holes = ndimage.binary_fill_holes(table) & ~table
    hole_labels, hole_count = ndimage.label(holes)
    blobs = []
    for i in range(1, hole_count + 1):
        blob_mask = hole_labels == i
        if int(blob_mask.sum()) >= cfg.min_blob_area:
            blobs.append(_blob_geometry(blob_mask))
    return blobs


def _hsi(pixels: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Hue (degrees), saturation (0-255), intensity (0-255) per pixel row."""
    f = pixels.astype(np.float64)
    r, g, b = f[:, 0], f[:, 1], f[:, 2]
    i = (r + g + b) / 3.0
    mn = f.min(axis=1)
    s = np.where(i > 0, 255.0 * (1.0 - mn / np.maximum(i, 1e-9)), 0.0)
    mx = f.max(axis=1)
    c = mx - mn
    hp = np.zeros_like(i)
    nz = c > 0
    rmax = nz & (mx == r)
    gmax = nz & (mx == g) & ~rmax
    bmax = nz & ~rmax & ~gmax
    hp[rmax] = ((g - b)[rmax] / c[rmax]) % 6.0
    hp[gmax] = (b - r)[gmax] / c[gmax] + 2.0
    hp[bmax] = (r - g)[bmax] / c[bmax] + 4.0
    return hp * 60.0, s, i


def classify_colors(frame: np.ndarray, blob: ObjectBlob,
                    cfg: PerceptConfig = PerceptConfig()) -> np.ndarray:
    """9-bin semantic color histogram of the blob's pixels.

    The mask is shrunk first since borders pick up surrounding colors; if
    erosion empties it the full mask is used.  Classification runs on the
    original (unboosted) frame: very dark is black, very bright is white,
    desaturated mid tones are gray, the rest bin by hue.
    """
    mask = blob.mask
    if cfg.mask_erode > 0:
        eroded = ndimage.binary_erosion(mask, structure=np.ones((3, 3), dtype=bool),
                                        iterations=cfg.mask_erode)
        if eroded.any():
            mask = eroded
    pixels = frame[mask]
    hue, sat, inten = _hsi(pixels)
    counts = np.zeros(9, dtype=np.float64)
    black = inten <= cfg.black_max_i
    white = ~black & (inten >= cfg.white_min_i)
    gray = ~black & ~white & (sat <= cfg.gray_max_s)
    counts[_BIN_INDEX["black"]] = black.sum()
    counts[_BIN_INDEX["white"]] = white.sum()
    counts[_BIN_INDEX["gray"]] = gray.sum()
    hued = ~(black | white | gray)
    h = hue[hued]
    e = cfg.hue_edges
    counts[_BIN_INDEX["red"]] = ((h >= e[5]) | (h < e[0])).sum()
    counts[_BIN_INDEX["orange"]] = ((h >= e[0]) & (h < e[1])).sum()
    counts[_BIN_INDEX["yellow"]] = ((h >= e[1]) & (h < e[2])).sum()
    counts[_BIN_INDEX["green"]] = ((h >= e[2]) & (h < e[3])).sum()
    counts[_BIN_INDEX["blue"]] = ((h >= e[3]) & (h < e[4])).sum()
    counts[_BIN_INDEX["violet"]] = ((h >= e[4]) & (h < e[5])).sum()
    return counts / counts.sum()


def describe_colors(hist: np.ndarray, cfg: PerceptConfig = PerceptConfig()) -> list[str]:
    """Dominant color name, alone if its bin is twice every other bin,
    otherwise followed by each color above 0.3x the dominant bin."""
    order = np.argsort(-hist, kind="stable")
    dom = int(order[0])
    others = [i for i in range(9) if i != dom]
    if all(hist[dom] >= cfg.dominant_solo * hist[i] for i in others):
        return [COLOR_BINS[dom]]
    extra = [int(i) for i in order[1:] if hist[i] > cfg.dominant_keep * hist[dom]]
    return [COLOR_BINS[dom]] + [COLOR_BINS[i] for i in extra]


def perceive(frame: np.ndarray, depth: np.ndarray | None = None,
             cfg: PerceptConfig = PerceptConfig()) -> list[ObjectPercept]:
    """Full pipeline: table model, blob extraction, color description.

    With a depth frame the table is segmented as the fitted plane's inliers
    instead of by color.  Object ids are assigned left to right by base
    point x so downstream references are deterministic.
    """
    if depth is not None:
        _, inliers = fit_plane(depth, cfg)
        mask = inliers
    else:
        boosted = boost_colorfulness(frame)
        rg, yb = opponent_channels(boosted)
        model = fit_table_color(rg, yb, cfg)
        mask = table_mask(boosted, model)
    blobs = extract_objects(mask, cfg)
    blobs.sort(key=lambda b: b.base_pt[0])
    percepts = []
    for i, blob in enumerate(blobs):
        hist = classify_colors(frame, blob, cfg)
        percepts.append(ObjectPercept(id=i, blob=blob, hist=hist,
                                      dominant=describe_colors(hist, cfg)))
    return percepts


def percept_report(percepts: list[ObjectPercept]) -> str:
    """JSON debug report: id, pixel_count, axis, base point, hist, dominant."""
    rows = []
    for p in percepts:
        rows.append({
            "id": p.id,
            "pixel_count": p.blob.pixel_count,
            "axis_deg": round(p.blob.axis_deg, 2),
            "base_pt": [round(v, 2) for v in p.blob.base_pt],
            "bbox": list(p.blob.bbox),
            "hist": {name: round(float(v), 4) for name, v in zip(COLOR_BINS, p.hist)},
            "dominant": p.dominant,
            "name": p.name,
        })
    return json.dumps(rows, indent=2)


def draw_overlays(frame: np.ndarray, percepts: list[ObjectPercept]) -> np.ndarray:
    """Debug render: bounding boxes, axis T marks, and base points."""
    from PIL import Image, ImageDraw

    img = Image.fromarray(frame)
    draw = ImageDraw.Draw(img)
    for p in percepts:
        x0, y0, x1, y1 = p.blob.bbox
        draw.rectangle([x0, y0, x1, y1], outline=(255, 0, 255))
        bx, by = p.blob.base_pt
        th = math.radians(p.blob.axis_deg)
        ln = max(8.0, p.blob.axial_extent / 2.0)
        draw.line([bx - math.cos(th) * ln, by - math.sin(th) * ln,
                   bx + math.cos(th) * ln, by + math.sin(th) * ln],
                  fill=(0, 200, 0), width=2)
        draw.ellipse([bx - 3, by - 3, bx + 3, by + 3], fill=(0, 200, 0))
        draw.text((x0, max(0, y0 - 12)), f"{p.id}:{'/'.join(p.dominant)}",
                  fill=(255, 255, 0))
    return np.asarray(img)
