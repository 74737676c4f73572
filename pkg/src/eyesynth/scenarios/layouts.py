"""Geometric placement: illuminator layouts, CR spacing, spurious reflections, collarette."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.interpolate import CubicSpline

from ..render import eval_gaussian
from .distributions import Distribution

OVERLAP_FACTOR = 1.25
MAX_PLACEMENT_ATTEMPTS = 1000


class PlacementError(RuntimeError):
    """Raised when a configuration is too dense to place features."""


@dataclass(frozen=True)
class PolygonLayout:
    """Illuminator pattern in image coordinates.

    ``vertices`` is an ``(n, 2)`` array of ``(x, y)`` in labeling order.
    """

    shape: str
    params: dict
    rotation: float  # degrees
    anchor: tuple
    vertices: np.ndarray
    d: float = 128.0


@dataclass(frozen=True)
class IrisSpec:
    center: tuple
    alpha: float
    beta: float
    theta: float
    luminance: float
    edge_width: float


@dataclass(frozen=True)
class CollaretteSpec:
    center: tuple
    n_vertices: int
    mean_radius: float
    radial_jitter: float  # fraction of mean_radius
    luminance: float
    edge_width: float
    vertex_radii: np.ndarray
    polygon: np.ndarray  # (5 * n_vertices, 2) closed implicitly


def _rotate(points, degrees):
    t = math.radians(degrees)
    c, s = math.cos(t), math.sin(t)
    return points @ np.array([[c, s], [-s, c]])


def house_vertices(width, rect_height, roof_height, rotation=0.0, anchor=(0.0, 0.0)):
    """Five house vertices around the rectangle center ``anchor``.

    Ordered from the topmost vertex, then clockwise as seen on screen
    (y grows downward, so clockwise means increasing ``atan2(dy, dx)``).
    """
    hw, hh = 0.5 * width, 0.5 * rect_height
    local = np.array([
        [0.0, -hh - roof_height],
        [hw, -hh],
        [hw, hh],
        [-hw, hh],
        [-hw, -hh],
    ])
    pts = _rotate(local, rotation) + np.asarray(anchor, dtype=float)
    top = int(np.argmin(pts[:, 1]))
    return np.roll(pts, -top, axis=0)


def ring_vertices(radius, rotation=0.0, anchor=(0.0, 0.0), n=8):
    """``n`` equally spaced vertices, starting bottom-right, then clockwise."""
    angles = np.radians(45.0 + rotation + 360.0 / n * np.arange(n))
    pts = radius * np.column_stack([np.cos(angles), np.sin(angles)])
    return pts + np.asarray(anchor, dtype=float)


def _dist(spec):
    return Distribution.from_config(spec)


def sample_house_layout(cfg, rng, anchor, d=128.0):
    """Draw one house-shaped five-illuminator layout.

    ``cfg`` holds fractions: ``width`` of ``d``, ``rect_height`` and
    ``roof_height`` of the width, plus ``rotation`` in degrees.
    """
    w = _dist(cfg["width"]).draw(rng) * d
    h = _dist(cfg["rect_height"]).draw(rng) * w
    roof = _dist(cfg["roof_height"]).draw(rng) * w
    rot = _dist(cfg["rotation"]).draw(rng)
    verts = house_vertices(w, h, roof, rot, anchor)
    return PolygonLayout("house", {"base_w": w, "rect_h": h, "roof_h": roof},
                         rot, tuple(anchor), verts, d)


def sample_ring_layout(cfg, rng, anchor, d=128.0):
    """Draw one ring of eight illuminators; ``cfg["radius"]`` is a fraction of ``d``."""
    radius = _dist(cfg["radius"]).draw(rng) * d
    rot = _dist(cfg["rotation"]).draw(rng)
    verts = ring_vertices(radius, rot, anchor, n=8)
    return PolygonLayout("ring", {"radius": radius, "n": 8}, rot, tuple(anchor), verts, d)


def min_separation(beta_i, beta_j):
    return OVERLAP_FACTOR * (beta_i + beta_j)


def overlaps(a, b):
    return math.hypot(a.x - b.x, a.y - b.y) < min_separation(a.beta, b.beta)


def place_nonoverlapping_crs(candidates, rng, width, height,
                             max_attempts=MAX_PLACEMENT_ATTEMPTS, sampler=None):
    """Keep CRs apart by at least 1.25 times the sum of their major radii.

    Candidates are accepted in order; one that sits too close to an already
    accepted CR is moved to a fresh random position (uniform over the image
    unless ``sampler(rng) -> (x, y)`` is given) until it fits.
    """
    if sampler is None:
        def sampler(rng):
            return rng.uniform(0.0, width - 1), rng.uniform(0.0, height - 1)

    placed = []
    attempts = 0
    for cr in candidates:
        while any(overlaps(cr, other) for other in placed):
            attempts += 1
            if attempts > max_attempts:
                raise PlacementError(
                    f"could not place {len(candidates)} CRs without overlap "
                    f"after {max_attempts} resamples")
            cr = cr.moved(*sampler(rng))
        placed.append(cr)
    return placed


def spurious_acceptance(pupil, x, y):
    """Probability of keeping a spurious reflection at ``(x, y)``."""
    return 1.0 - np.clip(eval_gaussian(pupil, x, y), 0.0, 1.0)


def sample_spurious_positions(pupil, count, rng, width, height):
    """Rejection-sample ``count`` positions, thinned by ``1 - clamp(G_pupil)``."""
    out = []
    while len(out) < count:
        x = rng.uniform(0.0, width - 1)
        y = rng.uniform(0.0, height - 1)
        if rng.random() < spurious_acceptance(pupil, x, y):
            out.append((x, y))
    return out


def collarette_polygon(center, phase, radii, upsample=5):
    """Closed curve through polar vertices, smoothed by a periodic cubic spline.

    The spline interpolates radius as a function of angle, so equal radii give
    points exactly on a circle.
    """
    n = len(radii)
    step = 2.0 * np.pi / n
    knots = phase + step * np.arange(n + 1)
    spline = CubicSpline(knots, np.append(radii, radii[0]), bc_type="periodic")
    phi = phase + 2.0 * np.pi / (upsample * n) * np.arange(upsample * n)
    r = spline(phi)
    cx, cy = center
    return np.column_stack([cx + r * np.cos(phi), cy + r * np.sin(phi)])


def build_collarette(iris, rng, cfg):
    """Irregular collarette ring near the iris center.

    ``cfg`` keys: ``vertices`` (count), ``radius`` (fraction of the iris major
    radius), ``jitter`` (fraction of the mean radius), ``luminance_ratio``
    (relative to the iris), ``edge_width`` (px), ``center_jitter`` (fraction
    of the iris minor radius).
    """
    n = int(_dist(cfg["vertices"]).draw(rng))
    r_col = _dist(cfg["radius"]).draw(rng) * iris.beta
    jitter = _dist(cfg["jitter"])
    offsets = np.array([jitter.draw(rng) for _ in range(n)]) * r_col
    signs = rng.choice((-1.0, 1.0), size=n)
    radii = r_col + signs * offsets
    phase = rng.uniform(0.0, 2.0 * np.pi / n)
    reach = _dist(cfg.get("center_jitter", 0.0)).draw(rng) * iris.alpha
    ang = rng.uniform(0.0, 2.0 * np.pi)
    center = (iris.center[0] + reach * math.cos(ang), iris.center[1] + reach * math.sin(ang))
    lum = _dist(cfg["luminance_ratio"]).draw(rng) * iris.luminance
    edge = _dist(cfg["edge_width"]).draw(rng)
    poly = collarette_polygon(center, phase, radii, upsample=cfg.get("upsample", 5))
    mean_jitter = float(np.mean(offsets) / r_col) if n else 0.0
    return CollaretteSpec(center, n, r_col, mean_jitter, lum, edge, radii, poly)
