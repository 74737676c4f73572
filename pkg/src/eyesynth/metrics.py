"""P-CR gaze signals, polynomial calibration and data-quality measures."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

WINDOW_MS = 200.0
FIXATION_SKIP_MS = 300.0
BASIS = ("1", "u", "v", "u^2", "v^2", "uv")


class CalibrationError(ValueError):
    """Design matrix is rank deficient."""


@dataclass
class Signal:
    """Timestamped 2D samples; ``t`` in ms, ``xy`` shaped ``(n, 2)``."""

    t: np.ndarray
    xy: np.ndarray
    valid: np.ndarray = None
    rate: float = None  # Hz; inferred from the timestamps when missing

    def __post_init__(self):
        self.t = np.asarray(self.t, dtype=float)
        self.xy = np.asarray(self.xy, dtype=float).reshape(-1, 2)
        if self.valid is None:
            self.valid = np.isfinite(self.xy).all(axis=1)
        else:
            self.valid = np.asarray(self.valid, dtype=bool) & np.isfinite(self.xy).all(axis=1)
        if not (len(self.t) == len(self.xy) == len(self.valid)):
            raise ValueError("timestamps, points and validity must have equal length")
        if len(self.t) > 1 and not np.all(np.diff(self.t) > 0):
            raise ValueError("timestamps must be strictly increasing")
        if self.rate is None and len(self.t) > 1:
            self.rate = 1000.0 / float(np.median(np.diff(self.t)))

    def __len__(self):
        return len(self.t)

    @classmethod
    def from_frames(cls, xy, rate, valid=None, t0=0.0):
        xy = np.asarray(xy, dtype=float).reshape(-1, 2)
        return cls(t0 + np.arange(len(xy)) * 1000.0 / rate, xy, valid, rate)


def pcr_vector(pupil, cr):
    """Pupil minus CR, invalid where either input is invalid."""
    if len(pupil) != len(cr) or not np.array_equal(pupil.t, cr.t):
        raise ValueError("pupil and CR signals are not aligned")
    return Signal(pupil.t.copy(), pupil.xy - cr.xy, pupil.valid & cr.valid, pupil.rate)


def design_matrix(uv):
    uv = np.asarray(uv, dtype=float).reshape(-1, 2)
    u, v = uv[:, 0], uv[:, 1]
    return np.column_stack([np.ones_like(u), u, v, u * u, v * v, u * v])


@dataclass(frozen=True)
class CalibrationModel:
    """Second-order polynomial ``(u, v) -> (x, y)`` over :data:`BASIS`."""

    coef_x: tuple
    coef_y: tuple

    def __post_init__(self):
        if not (np.all(np.isfinite(self.coef_x)) and np.all(np.isfinite(self.coef_y))):
            raise ValueError("calibration coefficients must be finite")

    def __call__(self, uv):
        d = design_matrix(uv)
        return np.column_stack([d @ np.asarray(self.coef_x), d @ np.asarray(self.coef_y)])

    def to_dict(self):
        return {"basis": list(BASIS), "x": [float(c) for c in self.coef_x],
                "y": [float(c) for c in self.coef_y]}

    @classmethod
    def from_dict(cls, data):
        return cls(tuple(data["x"]), tuple(data["y"]))

    @classmethod
    def identity(cls):
        return cls((0.0, 1.0, 0.0, 0.0, 0.0, 0.0), (0.0, 0.0, 1.0, 0.0, 0.0, 0.0))


def fit_calibration(pcr, targets):
    """Least-squares fit of both output coordinates; needs rank 6."""
    d = design_matrix(pcr)
    targets = np.asarray(targets, dtype=float).reshape(-1, 2)
    if len(d) != len(targets):
        raise ValueError("need one target per P-CR point")
    if len(d) < 6 or np.linalg.matrix_rank(d) < 6:
        raise CalibrationError(f"rank-deficient calibration data ({len(d)} points)")
    coef, *_ = np.linalg.lstsq(d, targets, rcond=None)
    return CalibrationModel(tuple(coef[:, 0]), tuple(coef[:, 1]))


def apply_calibration(model, signal):
    return Signal(signal.t.copy(), model(signal.xy), signal.valid.copy(), signal.rate)


# -- precision --------------------------------------------------------------

@dataclass
class WindowedMetric:
    starts: np.ndarray  # first sample index of each kept window
    values: np.ndarray
    median: float
    window: int  # samples per window


def window_samples(signal, window_ms=WINDOW_MS):
    if signal.rate is None:
        raise ValueError("signal needs a sampling rate")
    n = int(round(window_ms * signal.rate / 1000.0))
    if n < 2:
        raise ValueError("window must span at least 2 samples")
    if n > len(signal):
        raise ValueError(f"window of {n} samples is longer than the signal ({len(signal)})")
    return n


def _windowed(signal, window_ms, per_window):
    n = window_samples(signal, window_ms)
    valid_win = sliding_window_view(signal.valid, n).all(axis=1)
    starts = np.nonzero(valid_win)[0]
    if starts.size == 0:
        return WindowedMetric(starts, np.empty(0), float("nan"), n)
    values = per_window(signal.xy, n, starts)
    return WindowedMetric(starts, values, float(np.median(values)), n)


def _rms_windows(xy, n, starts):
    xy = np.where(np.isfinite(xy), xy, 0.0)
    d2 = (np.diff(xy, axis=0) ** 2).sum(axis=1)
    csum = np.concatenate([[0.0], np.cumsum(d2)])
    # window [s, s+n) holds n-1 consecutive differences d2[s .. s+n-2]
    return np.sqrt((csum[starts + n - 1] - csum[starts]) / (n - 1))


def _std_windows(xy, n, starts):
    xy = np.where(np.isfinite(xy), xy, 0.0)
    win = sliding_window_view(xy, n, axis=0)[starts]  # (m, 2, n)
    return np.sqrt(win.var(axis=2).sum(axis=1))


def rms_s2s(signal, window_ms=WINDOW_MS):
    """Sample-to-sample RMS in sliding windows (step one sample), with the median."""
    return _windowed(signal, window_ms, _rms_windows)


def std_precision(signal, window_ms=WINDOW_MS):
    """``sqrt(var x + var y)`` (population variance) in sliding windows."""
    return _windowed(signal, window_ms, _std_windows)


# -- accuracy ---------------------------------------------------------------

@dataclass(frozen=True)
class Target:
    x: float
    y: float
    t_on: float
    t_off: float


@dataclass
class AccuracyReport:
    offsets: list
    mean: float
    mean_gaze: list = field(default_factory=list)


def target_means(signal, targets, skip_ms=FIXATION_SKIP_MS):
    """Mean valid position within ``[t_on + skip_ms, t_off)`` for each target."""
    out = []
    for tg in targets:
        sel = (signal.t >= tg.t_on + skip_ms) & (signal.t < tg.t_off) & signal.valid
        if not sel.any():
            raise ValueError(f"no valid samples for target at ({tg.x}, {tg.y})")
        out.append(signal.xy[sel].mean(axis=0))
    return np.array(out)


def accuracy(gaze, targets, skip_ms=FIXATION_SKIP_MS):
    means = target_means(gaze, targets, skip_ms)
    goals = np.array([[tg.x, tg.y] for tg in targets], dtype=float)
    offsets = np.hypot(*(means - goals).T)
    return AccuracyReport([float(o) for o in offsets], float(offsets.mean()),
                          [tuple(map(float, m)) for m in means])


def trial_medians(signal, trials, metric=rms_s2s, window_ms=WINDOW_MS):
    """Median of ``metric`` per trial; ``trials`` are ``(t_start, t_end)`` in ms."""
    out = []
    for t0, t1 in trials:
        sel = (signal.t >= t0) & (signal.t < t1)
        part = Signal(signal.t[sel], signal.xy[sel], signal.valid[sel], signal.rate)
        out.append(metric(part, window_ms).median)
    return out


def aggregate(values, how="mean"):
    values = np.asarray([v for v in values if np.isfinite(v)], dtype=float)
    if values.size == 0:
        return float("nan")
    if how == "mean":
        return float(values.mean())
    if how == "median":
        return float(np.median(values))
    raise ValueError(f"unknown aggregation {how!r}")
