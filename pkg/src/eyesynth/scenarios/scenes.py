"""Scene descriptions for each scenario family and their rendering."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..render import (BRIGHT, DARK, GaussianFeature, add_pixel_noise, composite_scene,
                      finalize_image)
from .distributions import Distribution
from .layouts import (IrisSpec, PlacementError, PolygonLayout, build_collarette, min_separation,
                      place_nonoverlapping_crs, sample_house_layout, sample_ring_layout,
                      sample_spurious_positions)

MAX_LAYOUT_ATTEMPTS = 1000
MAX_PUPIL_REDRAWS = 100


def raised_cosine(signed_distance, width):
    """Blend weight across an edge: 1 inside, 0 outside, cosine ramp of ``width`` px.

    The ramp is centered on the boundary (signed distance 0).
    """
    d = np.asarray(signed_distance, dtype=float)
    if width <= 0:
        return (d <= 0).astype(float)
    t = np.clip(d / width + 0.5, 0.0, 1.0)
    return 0.5 * (1.0 + np.cos(np.pi * t))


def _grid(width, height):
    return np.arange(width, dtype=float)[None, :], np.arange(height, dtype=float)[:, None]


@dataclass(frozen=True)
class UniformBackground:
    level: float

    def render(self, width, height):
        return np.full((height, width), float(self.level))


@dataclass(frozen=True)
class GradientBackground:
    """Linear ramp from ``start`` to ``end`` along the unit axis at ``angle``."""

    start: float
    end: float
    angle: float

    def render(self, width, height):
        xs, ys = _grid(width, height)
        proj = xs * math.cos(self.angle) + ys * math.sin(self.angle)
        lo, hi = proj.min(), proj.max()
        t = (proj - lo) / (hi - lo) if hi > lo else np.zeros_like(proj)
        return self.start + (self.end - self.start) * t


@dataclass(frozen=True)
class SplitBackground:
    """Two half-planes split by a straight line through ``point``.

    The line's normal points along ``normal_angle``; the dark half is on the
    side ``dark_sign * n . (p - point) > 0``.
    """

    point: tuple
    normal_angle: float
    dark: float
    grey: float
    dark_sign: float = 1.0

    def render(self, width, height):
        xs, ys = _grid(width, height)
        side = (xs - self.point[0]) * math.cos(self.normal_angle) + \
            (ys - self.point[1]) * math.sin(self.normal_angle)
        return np.where(self.dark_sign * side > 0, float(self.dark), float(self.grey))


def ellipse_signed_distance(xs, ys, center, alpha, beta, theta):
    """First-order signed distance to an ellipse boundary (exact for circles)."""
    dx, dy = xs - center[0], ys - center[1]
    c, s = math.cos(theta), math.sin(theta)
    u = dx * c + dy * s
    v = -dx * s + dy * c
    rho = np.sqrt((u / alpha) ** 2 + (v / beta) ** 2)
    grad = np.sqrt((u / alpha ** 2) ** 2 + (v / beta ** 2) ** 2)
    with np.errstate(divide="ignore", invalid="ignore"):
        d = (rho - 1.0) * rho / grad
    return np.where(grad > 0, d, -np.inf)


def polygon_signed_distance(xs, ys, polygon):
    """Exact signed distance to a closed polygon; negative inside (even-odd rule)."""
    px = np.broadcast_to(xs, np.broadcast_shapes(xs.shape, ys.shape)).ravel()[:, None]
    py = np.broadcast_to(ys, np.broadcast_shapes(xs.shape, ys.shape)).ravel()[:, None]
    a = np.asarray(polygon, dtype=float)
    b = np.roll(a, -1, axis=0)
    ax, ay, bx, by = a[:, 0], a[:, 1], b[:, 0], b[:, 1]
    ex, ey = bx - ax, by - ay
    seg_len2 = ex * ex + ey * ey
    t = np.clip(((px - ax) * ex + (py - ay) * ey) / np.where(seg_len2 > 0, seg_len2, 1.0), 0, 1)
    dist = np.sqrt(((px - ax - t * ex) ** 2 + (py - ay - t * ey) ** 2).min(axis=1))
    crosses = ((ay > py) != (by > py)) & (px < ax + (py - ay) * ex / np.where(ey != 0, ey, 1.0))
    inside = (crosses.sum(axis=1) % 2) == 1
    shape = np.broadcast_shapes(xs.shape, ys.shape)
    return np.where(inside, -dist, dist).reshape(shape)


@dataclass(frozen=True)
class LayeredEyeBackground:
    """Sclera, iris with a soft edge, and a collarette ring on top."""

    sclera: float
    iris: IrisSpec
    collarette: object  # CollaretteSpec

    def render(self, width, height):
        xs, ys = _grid(width, height)
        img = np.full((height, width), float(self.sclera))
        ir = self.iris
        w = raised_cosine(ellipse_signed_distance(xs, ys, ir.center, ir.alpha, ir.beta, ir.theta),
                          ir.edge_width)
        img += (ir.luminance - img) * w
        col = self.collarette
        poly = col.polygon
        pad = col.edge_width + 1.0
        c0 = max(int(math.floor(poly[:, 0].min() - pad)), 0)
        c1 = min(int(math.ceil(poly[:, 0].max() + pad)), width - 1)
        r0 = max(int(math.floor(poly[:, 1].min() - pad)), 0)
        r1 = min(int(math.ceil(poly[:, 1].max() + pad)), height - 1)
        if c0 <= c1 and r0 <= r1:
            sub_x = np.arange(c0, c1 + 1, dtype=float)[None, :]
            sub_y = np.arange(r0, r1 + 1, dtype=float)[:, None]
            wc = raised_cosine(polygon_signed_distance(sub_x, sub_y, poly), col.edge_width)
            region = img[r0:r1 + 1, c0:c1 + 1]
            region += (col.luminance - region) * wc
        return img


@dataclass(frozen=True)
class CrLabel:
    index: int
    x: float
    y: float
    present: bool
    feature: GaussianFeature
    dropped: bool = False


@dataclass
class Scene:
    scenario: str
    stage: int
    width: int
    height: int
    background: object
    noise_sigma: float
    pupil: GaussianFeature = None
    crs: list = field(default_factory=list)
    spurious: list = field(default_factory=list)
    layout: PolygonLayout = None

    @property
    def dark_features(self):
        return [self.pupil] if self.pupil is not None else []

    @property
    def bright_features(self):
        """``(role, index, feature)`` in compositing order: CRs, then spurious."""
        out = [("cr", cr.index, cr.feature) for cr in self.crs if cr.present]
        out += [("spurious", i, f) for i, f in enumerate(self.spurious)]
        return out

    def present_crs(self):
        return [cr for cr in self.crs if cr.present]


def render_clean(scene):
    """Composited image before noise, in 8-bit units."""
    bg = scene.background.render(scene.width, scene.height)
    bright = [f for _, _, f in scene.bright_features]
    return composite_scene(bg, scene.dark_features, bright)


def render_scene(scene, rng):
    """Noisy, quantized gray image of ``scene``; noise drawn from ``rng``."""
    return finalize_image(add_pixel_noise(render_clean(scene), scene.noise_sigma, rng))


# -- sampling ---------------------------------------------------------------

def _d(spec):
    return Distribution.from_config(spec)


def _draw(spec, rng):
    if isinstance(spec, (int, float)):
        return float(spec)
    return _d(spec).draw(rng)


def image_center(width, height):
    return 0.5 * (width - 1), 0.5 * (height - 1)


def _sample_center(rng, width, height, margin, span):
    cx, cy = image_center(width, height)
    if span is not None:
        half = 0.5 * span
        return cx + rng.uniform(-half, half), cy + rng.uniform(-half, half)
    x = cx if 2 * margin >= width - 1 else rng.uniform(margin, width - 1 - margin)
    y = cy if 2 * margin >= height - 1 else rng.uniform(margin, height - 1 - margin)
    return x, y


def _ellipse_feature(part, rng, x, y, polarity):
    alpha = _draw(part["alpha"], rng)
    beta = alpha * _draw(part["aspect"], rng)
    amplitude = _draw(part["amplitude"], rng)
    lum = _draw(part["luminance"], rng)
    theta = rng.uniform(0.0, math.pi)
    return GaussianFeature(x, y, theta, alpha, max(beta, alpha), amplitude, lum, polarity)


def _uniform_position(rng, width, height):
    return rng.uniform(0.0, width - 1), rng.uniform(0.0, height - 1)


def sample_cr_scene(cfg, rng):
    """Single circular CR on a background split by a nearby straight line."""
    size = int(cfg["canvas"])
    part = cfg["cr"]
    r = _draw(part["radius"], rng)
    amplitude = _draw(part["amplitude"], rng)
    if cfg.get("center_span") is not None:
        x, y = _sample_center(rng, size, size, 0.0, cfg["center_span"])
    else:
        x, y = _uniform_position(rng, size, size)
    cr = GaussianFeature(x, y, 0.0, r, r, amplitude, _draw(part["luminance"], rng), BRIGHT)
    bg_cfg = cfg["background"]
    normal = rng.uniform(0.0, 2.0 * math.pi)
    offset = _draw(bg_cfg["line_offset"], rng) * r
    point = (x + offset * math.cos(normal), y + offset * math.sin(normal))
    sign = 1.0 if rng.random() < 0.5 else -1.0
    background = SplitBackground(point, normal, _draw(bg_cfg["dark"], rng),
                                 _draw(bg_cfg["grey"], rng), sign)
    noise = _draw(cfg["noise_sigma"], rng)
    return Scene(cfg["scenario"], cfg.get("stage", 1), size, size, background, noise,
                 crs=[CrLabel(0, x, y, True, cr)])


def _free_crs(part, rng, width, height):
    count = int(_draw(part["count"], rng))
    candidates = [_ellipse_feature(part, rng, *_uniform_position(rng, width, height), BRIGHT)
                  for _ in range(count)]
    placed = place_nonoverlapping_crs(candidates, rng, width, height)
    return [CrLabel(i, f.x, f.y, True, f) for i, f in enumerate(placed)]


def sample_pupil_scene(cfg, rng):
    """Dark pupil plus 1-4 randomly placed CRs on a uniform field."""
    size = int(cfg["canvas"])
    pupil = _ellipse_feature(cfg["pupil"], rng, 0.0, 0.0, DARK)
    pupil = pupil.moved(*_sample_center(rng, size, size, pupil.beta, cfg.get("center_span")))
    crs = _free_crs(cfg["crs"], rng, size, size)
    background = UniformBackground(_draw(cfg["background"]["level"], rng))
    noise = _draw(cfg["noise_sigma"], rng)
    return Scene(cfg["scenario"], cfg.get("stage", 1), size, size, background, noise,
                 pupil=pupil, crs=crs)


def sample_full_eye_scene(cfg, rng):
    """Sclera, iris, collarette, pupil and 1-8 CRs."""
    size = int(cfg["canvas"])
    sclera = _draw(cfg["sclera"], rng)
    ic = cfg["iris"]
    alpha_i = _draw(ic["alpha"], rng)
    beta_i = alpha_i * _draw(ic["aspect"], rng)
    iris = IrisSpec(
        center=_sample_center(rng, size, size, beta_i, None),
        alpha=alpha_i,
        beta=beta_i,
        theta=rng.uniform(0.0, math.pi),
        luminance=_draw(ic["luminance"], rng),
        edge_width=_draw(ic["edge_width"], rng),
    )
    collarette = build_collarette(iris, rng, cfg["collarette"])
    pupil = _ellipse_feature(cfg["pupil"], rng, 0.0, 0.0, DARK)
    pupil = pupil.moved(*_sample_center(rng, size, size, pupil.beta, cfg.get("center_span")))
    crs = _free_crs(cfg["crs"], rng, size, size)
    noise = _draw(cfg["noise_sigma"], rng)
    return Scene(cfg["scenario"], cfg.get("stage", 1), size, size,
                 LayeredEyeBackground(sclera, iris, collarette), noise, pupil=pupil, crs=crs)


def _layout_fits(layout, crs):
    v = layout.vertices
    for i in range(len(v)):
        for j in range(i + 1, len(v)):
            gap = math.hypot(v[i, 0] - v[j, 0], v[i, 1] - v[j, 1])
            if gap < min_separation(crs[i].beta, crs[j].beta):
                return False
    return True


def _sample_layout(cfg, rng, anchor_base, crs):
    lc = cfg["layout"]
    d = float(cfg.get("d", 128))
    reach = float(lc.get("anchor_jitter", 0.0)) * d
    sampler = sample_house_layout if lc["shape"] == "house" else sample_ring_layout
    for _ in range(MAX_LAYOUT_ATTEMPTS):
        r = reach * math.sqrt(rng.random())
        ang = rng.uniform(0.0, 2.0 * math.pi)
        anchor = (anchor_base[0] + r * math.cos(ang), anchor_base[1] + r * math.sin(ang))
        layout = sampler(lc, rng, anchor, d)
        if _layout_fits(layout, crs):
            return layout
    return None


def sample_layout_scene(cfg, rng):
    """Pupil, illuminator pattern with per-CR dropout, spurious reflections, gradient."""
    size = int(cfg["canvas"])
    pupil = _ellipse_feature(cfg["pupil"], rng, 0.0, 0.0, DARK)
    n_crs = 5 if cfg["layout"]["shape"] == "house" else 8
    shapes = [_ellipse_feature(cfg["crs"], rng, 0.0, 0.0, BRIGHT) for _ in range(n_crs)]
    layout = None
    for _ in range(MAX_PUPIL_REDRAWS):
        pupil = pupil.moved(*_sample_center(rng, size, size, pupil.beta, cfg.get("center_span")))
        layout = _sample_layout(cfg, rng, pupil.center, shapes)
        if layout is not None:
            break
    if layout is None:
        raise PlacementError("no non-overlapping illuminator layout found")
    dropout = float(cfg["crs"]["dropout"])
    crs = []
    for i, (shape, (x, y)) in enumerate(zip(shapes, layout.vertices)):
        dropped = rng.random() < dropout
        # an illuminator whose reflection lands off the canvas is not visible
        present = not dropped and 0 <= x <= size - 1 and 0 <= y <= size - 1
        crs.append(CrLabel(i, float(x), float(y), present, shape.moved(x, y), dropped))
    spurious = []
    sc = cfg.get("spurious")
    if sc:
        count = int(_draw(sc["count"], rng))
        feats = [_ellipse_feature(sc, rng, 0.0, 0.0, BRIGHT) for _ in range(count)]
        positions = sample_spurious_positions(pupil, count, rng, size, size)
        spurious = [f.moved(x, y) for f, (x, y) in zip(feats, positions)]
    levels = cfg["background"]["levels"]
    background = GradientBackground(_draw(levels, rng), _draw(levels, rng),
                                    rng.uniform(0.0, 2.0 * math.pi))
    noise = _draw(cfg["noise_sigma"], rng)
    return Scene(cfg["scenario"], cfg.get("stage", 1), size, size, background, noise,
                 pupil=pupil, crs=crs, spurious=spurious, layout=layout)


SAMPLERS = {
    "cr": sample_cr_scene,
    "pupil": sample_pupil_scene,
    "full_eye": sample_full_eye_scene,
    "layout": sample_layout_scene,
}

# per-scenario names for the layout sampler
sample_chugh_scene = sample_layout_scene
sample_eds2020_scene = sample_layout_scene


def sample_scene(cfg, rng):
    return SAMPLERS[cfg["family"]](cfg, rng)
