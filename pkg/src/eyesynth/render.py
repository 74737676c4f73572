"""Elliptical-Gaussian light features: evaluation, rasterization and compositing.

Images are plain 2D ``float64`` arrays indexed ``[row, col]``.  Pixel centers
sit at integer coordinates with the origin at the top-left, so column ``j``
samples ``x = j`` and row ``i`` samples ``y = i``.  Working images hold
intensities in 8-bit units (0..255); :func:`finalize_image` turns them into
quantized gray images in ``[0, 1]``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

DARK = "dark"
BRIGHT = "bright"

# Profiles are zeroed beyond this many standard deviations (Mahalanobis).
CULL_SIGMAS = 6.0


def plateau_sigma(r, amplitude):
    """Spread that keeps the plateau radius at ``r`` for peak ``amplitude``.

    ``G = A exp(-d^2 / 2 sigma^2)`` crosses 1 at ``d = r`` when
    ``sigma = r / sqrt(2 ln A)``.
    """
    if not amplitude > 1.0:
        raise ValueError(f"amplitude must be > 1, got {amplitude!r}")
    if not r > 0:
        raise ValueError(f"plateau radius must be > 0, got {r!r}")
    return r / math.sqrt(-2.0 * math.log(1.0 / amplitude))


@dataclass(frozen=True)
class GaussianFeature:
    """One elliptical light feature.

    ``alpha`` is the plateau radius along the direction ``(cos theta, sin theta)``
    (the minor axis), ``beta`` the plateau radius perpendicular to it.
    ``amplitude`` sets the edge steepness without moving the plateau.
    """

    x: float
    y: float
    theta: float
    alpha: float
    beta: float
    amplitude: float
    luminance: float
    polarity: str = BRIGHT

    def __post_init__(self):
        if not self.amplitude > 1.0:
            raise ValueError(f"amplitude must be > 1, got {self.amplitude!r}")
        if not 0 < self.alpha <= self.beta:
            raise ValueError(f"need 0 < alpha <= beta, got {self.alpha!r}, {self.beta!r}")
        if self.polarity not in (DARK, BRIGHT):
            raise ValueError(f"unknown polarity {self.polarity!r}")

    @property
    def sigma_alpha(self):
        return plateau_sigma(self.alpha, self.amplitude)

    @property
    def sigma_beta(self):
        return plateau_sigma(self.beta, self.amplitude)

    @property
    def center(self):
        return (self.x, self.y)

    def coefficients(self):
        """Quadratic-form coefficients ``(a, b, c)`` of the exponent.

        The exponent is ``-(a dx^2 + 2 b dx dy + c dy^2)``.
        """
        sa2 = self.sigma_alpha ** 2
        sb2 = self.sigma_beta ** 2
        cos_t, sin_t = math.cos(self.theta), math.sin(self.theta)
        sin_2t = math.sin(2.0 * self.theta)
        a = cos_t ** 2 / (2 * sa2) + sin_t ** 2 / (2 * sb2)
        b = sin_2t / (4 * sa2) - sin_2t / (4 * sb2)
        c = sin_t ** 2 / (2 * sa2) + cos_t ** 2 / (2 * sb2)
        return a, b, c

    def boundary_point(self, phi):
        """Point on the plateau ellipse at parametric angle ``phi``."""
        u = self.alpha * math.cos(phi)
        v = self.beta * math.sin(phi)
        cos_t, sin_t = math.cos(self.theta), math.sin(self.theta)
        return self.x + u * cos_t - v * sin_t, self.y + u * sin_t + v * cos_t

    def moved(self, x, y):
        return replace(self, x=float(x), y=float(y))


def eval_gaussian(f, x, y):
    """Unclamped value of ``f`` at ``(x, y)``; works on scalars or arrays."""
    a, b, c = f.coefficients()
    dx = np.asarray(x, dtype=float) - f.x
    dy = np.asarray(y, dtype=float) - f.y
    return f.amplitude * np.exp(-a * dx * dx - 2.0 * b * dx * dy - c * dy * dy)


def normalized_radius2(f, xs, ys):
    """Squared ellipse-normalized radius; 1 on the plateau boundary."""
    dx = xs - f.x
    dy = ys - f.y
    cos_t, sin_t = math.cos(f.theta), math.sin(f.theta)
    u = dx * cos_t + dy * sin_t
    v = -dx * sin_t + dy * cos_t
    return (u / f.alpha) ** 2 + (v / f.beta) ** 2


def cull_radius(f):
    return CULL_SIGMAS * max(f.sigma_alpha, f.sigma_beta)


def profile_patch(f, width, height):
    """Clamped profile restricted to its culling box.

    Returns ``(rows, cols, patch)`` with ``rows``/``cols`` slices into a
    ``height x width`` image, or ``None`` if the box misses the image.
    """
    r = cull_radius(f)
    c0 = max(int(math.ceil(f.x - r)), 0)
    c1 = min(int(math.floor(f.x + r)), width - 1)
    r0 = max(int(math.ceil(f.y - r)), 0)
    r1 = min(int(math.floor(f.y + r)), height - 1)
    if c0 > c1 or r0 > r1:
        return None
    xs = np.arange(c0, c1 + 1, dtype=float)[None, :]
    ys = np.arange(r0, r1 + 1, dtype=float)[:, None]
    q = normalized_radius2(f, xs, ys)
    log_a = math.log(f.amplitude)
    # Plateau test on q alone keeps the plateau set independent of A.
    patch = np.where(q <= 1.0, 1.0, np.exp(log_a * (1.0 - np.maximum(q, 1.0))))
    # q * ln(A) is the exponent; beyond 6 sigma it exceeds 18.
    patch[q * log_a > 0.5 * CULL_SIGMAS ** 2] = 0.0
    return slice(r0, r1 + 1), slice(c0, c1 + 1), patch


def render_profile(f, width, height):
    """``clamp(G, 0, 1)`` sampled at every pixel center."""
    if width <= 0 or height <= 0:
        raise ValueError("image dimensions must be positive")
    out = np.zeros((height, width))
    hit = profile_patch(f, width, height)
    if hit is not None:
        rows, cols, patch = hit
        out[rows, cols] = patch
    return out


def plateau_mask(f, width, height):
    """Boolean image of the plateau set ``{clamp(G) == 1}``."""
    return render_profile(f, width, height) == 1.0


def apply_dark(image, f):
    """Pull ``image`` toward ``f.luminance`` in place, weighted by the profile."""
    h, w = image.shape
    hit = profile_patch(f, w, h)
    if hit is not None:
        rows, cols, p = hit
        region = image[rows, cols]
        region -= (region - f.luminance) * p
    return image


def apply_bright(image, f):
    """``image = max(image, L * profile)`` in place."""
    h, w = image.shape
    hit = profile_patch(f, w, h)
    if hit is not None:
        rows, cols, p = hit
        np.maximum(image[rows, cols], f.luminance * p, out=image[rows, cols])
    return image


def composite_scene(background, dark=(), bright=()):
    """Layer dark features, then bright features, onto a copy of ``background``."""
    image = np.array(background, dtype=float, copy=True)
    for f in dark:
        apply_dark(image, f)
    for f in bright:
        apply_bright(image, f)
    return image


def add_pixel_noise(image, sigma, rng):
    if sigma < 0:
        raise ValueError("noise sigma must be >= 0")
    if sigma == 0:
        return np.array(image, dtype=float, copy=True)
    return image + rng.normal(0.0, sigma, size=np.shape(image))


def finalize_image(image):
    """Clamp to [0, 255], round half away from zero, scale to [0, 1]."""
    clipped = np.clip(np.asarray(image, dtype=float), 0.0, 255.0)
    return np.floor(clipped + 0.5) / 255.0


def to_uint8(gray):
    return np.rint(np.asarray(gray) * 255.0).astype(np.uint8)


def from_uint8(pixels):
    return np.asarray(pixels, dtype=np.uint8) / 255.0
