"""Crop choice, heat-map peaks and selection of the two most confident CRs.

CR indices are 0-based and follow the illuminator order of the scenario.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .stream import gaussian_map

MAP_MAGIC = "LEYESMAPS"
MAP_VERSION = 1
MIN_PEAK = 1.0

CSV_HEADER = ("frame", "status", "pupil_x", "pupil_y",
              "cr_a_index", "cr_a_x", "cr_a_y", "cr_a_logit",
              "cr_b_index", "cr_b_x", "cr_b_y", "cr_b_logit")


class MapFileError(ValueError):
    """Malformed, truncated or inconsistent map file."""


@dataclass(frozen=True)
class DetectorReport:
    center: tuple
    confidence: float

    def __post_init__(self):
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError(f"confidence must be in [0, 1], got {self.confidence!r}")


@dataclass
class FeatureMapSet:
    pupil_map: np.ndarray
    cr_maps: list
    crop_origin: tuple = (0, 0)

    def __post_init__(self):
        self.pupil_map = np.asarray(self.pupil_map, dtype=float)
        self.cr_maps = [np.asarray(m, dtype=float) for m in self.cr_maps]
        for m in self.cr_maps:
            if m.shape != self.pupil_map.shape:
                raise ValueError("all maps must share dimensions")

    @property
    def k(self):
        return len(self.cr_maps)

    @property
    def shape(self):
        return self.pupil_map.shape


@dataclass(frozen=True)
class SelectedCr:
    index: int
    center: tuple
    logit: float


@dataclass
class PcrResult:
    valid: bool
    pupil_center: tuple
    selected: list = field(default_factory=list)
    peaks: list = field(default_factory=list)

    @property
    def status(self):
        return "valid" if self.valid else "invalid"

    def csv_row(self, frame):
        row = [frame, self.status, _fmt(self.pupil_center[0]), _fmt(self.pupil_center[1])]
        for cr in self.selected[:2]:
            row += [cr.index, _fmt(cr.center[0]), _fmt(cr.center[1]), _fmt(cr.logit)]
        row += [""] * (len(CSV_HEADER) - len(row))
        return row


def _fmt(v):
    return repr(float(v))


@dataclass(frozen=True)
class CropDecision:
    origin: tuple
    branch: str  # "detector" or "center"
    center: tuple


def decide_crop(report, threshold, image_shape, crop_size=128):
    """Center the crop on the detector if it is confident enough, else on the image.

    ``image_shape`` is ``(height, width)``.  The origin ``(x0, y0)`` is clamped
    so the crop stays inside the image.
    """
    if not 0.0 <= threshold <= 1.0:
        raise ValueError(f"confidence threshold must be in [0, 1], got {threshold!r}")
    height, width = image_shape
    if crop_size > width or crop_size > height:
        raise ValueError(f"crop {crop_size} larger than image {width}x{height}")
    if report.confidence >= threshold:
        branch, center = "detector", tuple(report.center)
    else:
        branch, center = "center", (0.5 * (width - 1), 0.5 * (height - 1))
    half = crop_size // 2
    x0 = int(math.floor(center[0] + 0.5)) - half
    y0 = int(math.floor(center[1] + 0.5)) - half
    x0 = min(max(x0, 0), width - crop_size)
    y0 = min(max(y0, 0), height - crop_size)
    return CropDecision((x0, y0), branch, center)


def peak_of_map(m):
    """``(value, x, y)`` of the maximum; ties go to the first row-major index."""
    m = np.asarray(m)
    if m.size == 0:
        raise ValueError("empty map")
    flat = int(np.argmax(m))
    y, x = divmod(flat, m.shape[1])
    return float(m[y, x]), x, y


def refine_peak(m, x, y):
    """Subpixel peak by a 1D parabola through the 3-neighborhood on each axis."""
    m = np.asarray(m, dtype=float)
    h, w = m.shape

    def offset(lo, mid, hi):
        denom = lo - 2.0 * mid + hi
        return 0.0 if denom >= 0 else 0.5 * (lo - hi) / denom

    dx = offset(m[y, x - 1], m[y, x], m[y, x + 1]) if 0 < x < w - 1 else 0.0
    dy = offset(m[y - 1, x], m[y, x], m[y + 1, x]) if 0 < y < h - 1 else 0.0
    return x + dx, y + dy


def select_best_two_crs(maps, min_peak=MIN_PEAK, subpixel=False):
    """Pick the two CR maps with the highest peaks; invalid unless two reach ``min_peak``."""
    ox, oy = maps.crop_origin

    def locate(m):
        value, x, y = peak_of_map(m)
        if subpixel:
            x, y = refine_peak(m, x, y)
        return value, (x + ox, y + oy)

    _, pupil_center = locate(maps.pupil_map)
    peaks = [locate(m) for m in maps.cr_maps]
    order = sorted(range(len(peaks)), key=lambda i: (-peaks[i][0], i))
    strong = [i for i in order if peaks[i][0] >= min_peak]
    if len(strong) < 2:
        return PcrResult(False, pupil_center, [], [p[0] for p in peaks])
    selected = [SelectedCr(i, peaks[i][1], peaks[i][0]) for i in strong[:2]]
    return PcrResult(True, pupil_center, selected, [p[0] for p in peaks])


def synthesize_oracle_maps(labels, shape, peak_scale=6.0, sigma=1.5, crop_origin=(0, 0)):
    """Heat maps a perfect model would emit for ``labels`` (a LabelSet or label record).

    Present features get a Gaussian bump of height ``peak_scale``; absent
    features get all-zero maps.  Label coordinates are in image space.
    """
    if not peak_scale > 0:
        raise ValueError("peak_scale must be > 0")
    if isinstance(labels, dict):
        pupil, crs = labels.get("pupil"), labels.get("crs", [])
    else:
        pupil, crs = labels.pupil, labels.crs
    h, w = shape
    ox, oy = crop_origin
    pupil_map = np.zeros((h, w))
    if pupil is not None:
        pupil_map = gaussian_map((pupil["x"] - ox, pupil["y"] - oy), w, h, sigma, peak_scale)
    cr_maps = []
    for cr in crs:
        if cr["present"]:
            cr_maps.append(gaussian_map((cr["x"] - ox, cr["y"] - oy), w, h, sigma, peak_scale))
        else:
            cr_maps.append(np.zeros((h, w)))
    return FeatureMapSet(pupil_map, cr_maps, tuple(crop_origin))


# -- map files --------------------------------------------------------------

def write_maps(maps, path):
    """Header line, then pupil and CR maps as row-major float32 little-endian."""
    h, w = maps.shape
    header = f"{MAP_MAGIC} {MAP_VERSION} {w} {h} {maps.k + 1}\n".encode("ascii")
    stack = np.stack([maps.pupil_map, *maps.cr_maps]).astype("<f4")
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(stack.tobytes(order="C"))


def read_maps(path, crop_origin=(0, 0)):
    data = Path(path).read_bytes()
    newline = data.find(b"\n")
    if newline < 0:
        raise MapFileError(f"{path}: missing header line")
    try:
        fields = data[:newline].decode("ascii").split()
    except UnicodeDecodeError:
        raise MapFileError(f"{path}: header is not ASCII") from None
    if len(fields) != 5 or fields[0] != MAP_MAGIC:
        raise MapFileError(f"{path}: bad header {data[:newline]!r}")
    try:
        version, w, h, count = (int(f) for f in fields[1:])
    except ValueError:
        raise MapFileError(f"{path}: non-integer header field") from None
    if version != MAP_VERSION:
        raise MapFileError(f"{path}: unsupported version {version}")
    if w <= 0 or h <= 0 or count < 1:
        raise MapFileError(f"{path}: bad dimensions {w}x{h}x{count}")
    body = data[newline + 1:]
    expected = count * w * h * 4
    if len(body) < expected:
        raise MapFileError(f"{path}: short file, expected {count} maps "
                           f"({expected} bytes), found {len(body)} bytes")
    if len(body) > expected:
        raise MapFileError(f"{path}: {len(body) - expected} trailing bytes; "
                           f"dimension mismatch with header")
    stack = np.frombuffer(body, dtype="<f4").reshape(count, h, w).astype(float)
    return FeatureMapSet(stack[0], list(stack[1:]), tuple(crop_origin))
