"""Threshold-based pupil and CR localization.

Binary images are boolean arrays.  Coordinates follow the rendering
convention: ``x`` is the column index, ``y`` the row index, pixel centers at
integers.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage
from skimage.measure import perimeter as _perimeter

CROSS = ndimage.generate_binary_structure(2, 1)
SQUARE = ndimage.generate_binary_structure(2, 2)

CUTOUT_SIZE = 180
CR_MASK_RADIUS = 48.0
PUPIL_MASK_SCALE = 1.4
MIDDLE_GRAY = 128 / 255
UNET_THRESHOLD = 0.99


class NoBlobError(ValueError):
    """No component survived thresholding and selection."""


class DegenerateFitError(ValueError):
    """Too few or collinear points for an ellipse fit."""


@dataclass(frozen=True)
class ThresholdConfig:
    pupil_threshold: float = 0.25
    cr_threshold: float = 0.99
    roi: tuple = None  # (x0, y0, width, height)
    min_area_frac: float = 1e-4
    max_area_frac: float = 0.6
    circularity_min: float = 0.6

    def __post_init__(self):
        for t in (self.pupil_threshold, self.cr_threshold):
            if not 0.0 <= t <= 1.0:
                raise ValueError(f"threshold {t!r} outside [0, 1]")
        if not self.min_area_frac < self.max_area_frac:
            raise ValueError("min area must be below max area")

    def area_bounds(self, shape):
        n = shape[0] * shape[1]
        return self.min_area_frac * n, self.max_area_frac * n


@dataclass(frozen=True)
class BlobStats:
    area: int
    centroid: tuple
    perimeter: float
    circularity: float
    bbox: tuple  # (row0, col0, row1, col1), exclusive end
    mask: np.ndarray  # full-size boolean image of this blob

    @property
    def label_slice(self):
        r0, c0, r1, c1 = self.bbox
        return slice(r0, r1), slice(c0, c1)


@dataclass(frozen=True)
class EllipseParams:
    """Ellipse with ``theta`` the angle of the major axis from +x, in [0, pi)."""

    center: tuple
    semi_major: float
    semi_minor: float
    theta: float


def binarize(img, threshold, mode="dark_below"):
    if not 0.0 <= threshold <= 1.0:
        raise ValueError(f"threshold {threshold!r} outside [0, 1]")
    img = np.asarray(img)
    if mode == "dark_below":
        return img < threshold
    if mode == "bright_above":
        return img >= threshold
    raise ValueError(f"unknown mode {mode!r}")


def fill_holes(binary):
    # holes are background components not 4-connected to the border
    return ndimage.binary_fill_holes(binary, structure=CROSS)


def remove_speckle(binary):
    """Drop 8-connected components that an opening with a 3x3 cross erases.

    Surviving components are kept exactly as they were (opening by
    reconstruction), so their outlines do not change.
    """
    opened = ndimage.binary_opening(binary, structure=CROSS)
    labels, n = ndimage.label(binary, structure=SQUARE)
    if n == 0:
        return binary.copy()
    keep = np.zeros(n + 1, dtype=bool)
    keep[np.unique(labels[opened])] = True
    keep[0] = False
    return keep[labels]


def morph_cleanup(binary):
    return remove_speckle(fill_holes(np.asarray(binary, dtype=bool)))


def blob_stats(mask):
    """Shape statistics of one component given as a boolean image."""
    rows, cols = np.nonzero(mask)
    area = rows.size
    r0, r1 = rows.min(), rows.max() + 1
    c0, c1 = cols.min(), cols.max() + 1
    crop = np.pad(mask[r0:r1, c0:c1], 1)
    perim = float(_perimeter(crop, neighborhood=4))
    if perim > 0:
        circ = 4.0 * math.pi * area / perim ** 2
    else:
        circ = 1.0  # single pixel
    return BlobStats(area, (cols.mean(), rows.mean()), perim, circ,
                     (int(r0), int(c0), int(r1), int(c1)), mask)


def select_feature_blob(binary, criteria=None):
    """Largest 8-connected component within the size bounds and circularity limit."""
    criteria = criteria or ThresholdConfig()
    binary = np.asarray(binary, dtype=bool)
    labels, n = ndimage.label(binary, structure=SQUARE)
    if n == 0:
        return None
    lo, hi = criteria.area_bounds(binary.shape)
    areas = np.bincount(labels.ravel(), minlength=n + 1)
    best = None
    for lab in np.argsort(-areas[1:], kind="stable") + 1:
        if not lo <= areas[lab] <= hi:
            continue
        stats = blob_stats(labels == lab)
        if stats.circularity >= criteria.circularity_min:
            best = stats
            break
    return best


def center_of_mass(region, origin=(0, 0)):
    """Intensity-weighted centroid ``(x, y)`` of a 2D array.

    ``x`` weights column indices and ``y`` row indices; ``origin`` is added
    when ``region`` is a cutout.
    """
    region = np.asarray(region, dtype=float)
    total = region.sum()
    if not total > 0:
        raise ValueError("center of mass undefined for zero total mass")
    cols = np.arange(region.shape[1], dtype=float)
    rows = np.arange(region.shape[0], dtype=float)
    x = (region.sum(axis=0) @ cols) / total
    y = (region.sum(axis=1) @ rows) / total
    return float(x + origin[0]), float(y + origin[1])


# -- ellipse fitting --------------------------------------------------------

def fit_conic(x, y):
    """Direct least-squares ellipse fit (Halir & Flusser formulation).

    Returns conic coefficients ``(A, B, C, D, E, F)`` of
    ``A x^2 + B xy + C y^2 + D x + E y + F = 0``.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.size < 6:
        raise DegenerateFitError(f"need at least 6 points, got {x.size}")
    d1 = np.column_stack([x * x, x * y, y * y])
    d2 = np.column_stack([x, y, np.ones_like(x)])
    s1, s2, s3 = d1.T @ d1, d1.T @ d2, d2.T @ d2
    try:
        t = -np.linalg.solve(s3, s2.T)
    except np.linalg.LinAlgError:
        raise DegenerateFitError("points are degenerate (collinear)") from None
    m = s1 + s2 @ t
    m = np.array([m[2] / 2.0, -m[1], m[0] / 2.0])
    evals, evecs = np.linalg.eig(m)
    evecs = np.real(evecs)
    cond = 4.0 * evecs[0] * evecs[2] - evecs[1] ** 2
    ok = np.nonzero(cond > 0)[0]
    if ok.size == 0:
        raise DegenerateFitError("no elliptical solution")
    a1 = evecs[:, ok[np.argmin(np.abs(np.real(evals[ok])))]] if ok.size > 1 else evecs[:, ok[0]]
    return np.concatenate([a1, t @ a1])


def conic_to_ellipse(coeffs):
    a, b, c, d, e, f = coeffs
    den = b * b - 4.0 * a * c
    if den >= 0:
        raise DegenerateFitError("conic is not an ellipse")
    x0 = (2.0 * c * d - b * e) / den
    y0 = (2.0 * a * e - b * d) / den
    # value of the conic at the center, then eigen-axes of the quadratic part
    f0 = f + 0.5 * (d * x0 + e * y0)
    q = np.array([[a, b / 2.0], [b / 2.0, c]])
    if f0 > 0:  # conic scale is arbitrary; make the quadratic part positive
        q, f0 = -q, -f0
    evals, evecs = np.linalg.eigh(q)
    if f0 * evals[0] >= 0 or f0 * evals[1] >= 0:
        raise DegenerateFitError("imaginary ellipse")
    axes = np.sqrt(-f0 / evals)
    # eigh sorts ascending: the smaller eigenvalue belongs to the major axis
    semi_major, semi_minor = axes[0], axes[1]
    vx, vy = evecs[:, 0]
    theta = math.atan2(vy, vx) % math.pi
    return EllipseParams((float(x0), float(y0)), float(semi_major), float(semi_minor), theta)


def fit_ellipse(points):
    """Ellipse through ``points`` (``(n, 2)`` array of ``x, y``)."""
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[0] < 6:
        raise DegenerateFitError(f"need at least 6 points, got {len(pts)}")
    mean = pts.mean(axis=0)
    scale = np.sqrt(((pts - mean) ** 2).sum(axis=1).mean())
    if not scale > 0:
        raise DegenerateFitError("all points coincide")
    norm = (pts - mean) / scale
    if np.linalg.matrix_rank(norm, tol=1e-9) < 2:
        raise DegenerateFitError("points are collinear")
    e = conic_to_ellipse(fit_conic(norm[:, 0], norm[:, 1]))
    center = (float(e.center[0] * scale + mean[0]), float(e.center[1] * scale + mean[1]))
    return EllipseParams(center, e.semi_major * scale, e.semi_minor * scale, e.theta)


def sample_ellipse(ellipse, n=32, phase=0.0):
    t = phase + 2.0 * np.pi * np.arange(n) / n
    c, s = math.cos(ellipse.theta), math.sin(ellipse.theta)
    u = ellipse.semi_major * np.cos(t)
    v = ellipse.semi_minor * np.sin(t)
    return np.column_stack([ellipse.center[0] + u * c - v * s, ellipse.center[1] + u * s + v * c])


def boundary_points(mask):
    """``(x, y)`` of blob pixels with at least one 4-neighbor outside the blob."""
    mask = np.asarray(mask, dtype=bool)
    edge = mask & ~ndimage.binary_erosion(mask, structure=CROSS, border_value=0)
    rows, cols = np.nonzero(edge)
    return np.column_stack([cols, rows]).astype(float)


# -- pipelines --------------------------------------------------------------

@dataclass(frozen=True)
class FeatureEstimate:
    center: tuple
    blob: BlobStats
    ellipse: EllipseParams = None


def _roi_view(img, roi):
    if roi is None:
        return img, (0, 0)
    x0, y0, w, h = roi
    return img[y0:y0 + h, x0:x0 + w], (x0, y0)


def locate_feature(img, threshold, mode, criteria=None, fit=False):
    """binarize -> cleanup -> select -> center of mass (-> ellipse)."""
    criteria = criteria or ThresholdConfig()
    view, (ox, oy) = _roi_view(np.asarray(img), criteria.roi)
    blob = select_feature_blob(morph_cleanup(binarize(view, threshold, mode)), criteria)
    if blob is None:
        return None
    cx, cy = center_of_mass(blob.mask, origin=(ox, oy))
    ellipse = None
    if fit:
        pts = boundary_points(blob.mask)
        try:
            e = fit_ellipse(pts)
            ellipse = EllipseParams((e.center[0] + ox, e.center[1] + oy), e.semi_major,
                                    e.semi_minor, e.theta)
        except DegenerateFitError:
            ellipse = None
    return FeatureEstimate((cx, cy), blob, ellipse)


def locate_pupil(img, criteria=None, threshold=None):
    criteria = criteria or ThresholdConfig()
    t = criteria.pupil_threshold if threshold is None else threshold
    return locate_feature(img, t, "dark_below", criteria, fit=True)


def locate_cr(img, criteria=None, threshold=None):
    criteria = criteria or ThresholdConfig()
    t = criteria.cr_threshold if threshold is None else threshold
    return locate_feature(img, t, "bright_above", criteria)


def plateau_threshold(img):
    """Threshold just above the darkest gray level (for noise-free renders)."""
    level = np.rint(np.min(img) * 255.0)
    return min((level + 0.5) / 255.0, 1.0)


def detector_report(img, criteria=None):
    """Pupil center plus a confidence score from blob roundness, in [0, 1]."""
    from .pcr import DetectorReport

    est = locate_pupil(img, criteria)
    if est is None:
        h, w = np.shape(img)
        return DetectorReport((0.5 * (w - 1), 0.5 * (h - 1)), 0.0)
    return DetectorReport(est.center, float(min(max(est.blob.circularity, 0.0), 1.0)))


@dataclass(frozen=True)
class MaskResult:
    center: tuple  # image coordinates
    ellipse: EllipseParams  # image coordinates
    redo: bool
    recenter: tuple  # suggested new cutout center when redo is set


def postprocess_unet_mask(prob_map, crop_origin=(0, 0), criteria=None,
                          threshold=UNET_THRESHOLD):
    """Pupil center from a segmentation probability map.

    Flags a redo (recentred cutout) when the center of mass lies closer to
    a cutout edge than the fitted ellipse's semi-major axis.
    """
    prob_map = np.asarray(prob_map, dtype=float)
    criteria = criteria or ThresholdConfig(circularity_min=0.0)
    blob = select_feature_blob(morph_cleanup(prob_map >= threshold), criteria)
    if blob is None:
        raise NoBlobError("no pupil blob above threshold")
    cx, cy = center_of_mass(blob.mask)
    ellipse = fit_ellipse(boundary_points(blob.mask))
    h, w = prob_map.shape
    edge_gap = min(cx, cy, w - 1 - cx, h - 1 - cy)
    ox, oy = crop_origin
    center = (cx + ox, cy + oy)
    shifted = EllipseParams((ellipse.center[0] + ox, ellipse.center[1] + oy),
                            ellipse.semi_major, ellipse.semi_minor, ellipse.theta)
    return MaskResult(center, shifted, edge_gap < ellipse.semi_major, center)


# -- cutouts ----------------------------------------------------------------

def cutout(img, center, size=CUTOUT_SIZE):
    """``size x size`` crop around the rounded center, edge-replicated at borders.

    Returns the crop and the image coordinates of its top-left pixel.
    """
    img = np.asarray(img)
    h, w = img.shape
    cx = int(math.floor(center[0] + 0.5))
    cy = int(math.floor(center[1] + 0.5))
    half = size // 2
    x0, y0 = cx - half, cy - half
    pad = size
    padded = np.pad(img, pad, mode="edge")
    crop = padded[y0 + pad:y0 + pad + size, x0 + pad:x0 + pad + size]
    return crop.copy(), (x0, y0)


def cr_mask(size=CUTOUT_SIZE, radius=CR_MASK_RADIUS):
    c = size // 2
    yy, xx = np.mgrid[0:size, 0:size]
    return (xx - c) ** 2 + (yy - c) ** 2 <= radius ** 2


def make_cr_cutout(img, center, size=CUTOUT_SIZE, radius=CR_MASK_RADIUS):
    crop, _ = cutout(img, center, size)
    crop[~cr_mask(size, radius)] = 0.0
    return crop


def pupil_mask(ellipse, origin, size=CUTOUT_SIZE, scale=PUPIL_MASK_SCALE):
    yy, xx = np.mgrid[0:size, 0:size]
    dx = xx + origin[0] - ellipse.center[0]
    dy = yy + origin[1] - ellipse.center[1]
    c, s = math.cos(ellipse.theta), math.sin(ellipse.theta)
    u = dx * c + dy * s
    v = -dx * s + dy * c
    return (u / (scale * ellipse.semi_major)) ** 2 + (v / (scale * ellipse.semi_minor)) ** 2 <= 1.0


def make_pupil_cutout(img, center, ellipse, size=CUTOUT_SIZE, scale=PUPIL_MASK_SCALE):
    crop, origin = cutout(img, center, size)
    crop[~pupil_mask(ellipse, origin, size, scale)] = MIDDLE_GRAY
    return crop


def sweep_thresholds(frames, thresholds, mode="dark_below", rate=1000.0, criteria=None,
                     window_ms=200.0):
    """Pick the threshold whose center signal has the lowest median RMS-S2S.

    ``frames`` is a sequence of gray images from one recording.  Returns
    ``(best_threshold, {threshold: median_rms})``; thresholds that lose the
    feature in any frame window score ``nan``.
    """
    from .metrics import Signal, rms_s2s

    scores = {}
    for t in thresholds:
        pts, ok = [], []
        for img in frames:
            est = locate_feature(img, t, mode, criteria)
            pts.append(est.center if est is not None else (np.nan, np.nan))
            ok.append(est is not None)
        try:
            scores[t] = rms_s2s(Signal.from_frames(pts, rate, ok), window_ms).median
        except ValueError:
            scores[t] = float("nan")
    finite = {t: v for t, v in scores.items() if np.isfinite(v)}
    best = min(finite, key=finite.get) if finite else None
    return best, scores


def threshold_grid(lo, hi, step=1 / 255):
    return list(np.arange(lo, hi + 0.5 * step, step))
