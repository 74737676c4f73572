"""From P-CR vectors to gaze: nine-point calibration, then accuracy and precision.

A simulated observer fixates a 3x3 grid; the eye tracker's P-CR signal is
a second-order function of gaze plus white noise.
"""
import numpy as np

from eyesynth.metrics import Signal, Target, accuracy, apply_calibration, fit_calibration, \
    rms_s2s, std_precision

rate, dwell = 500.0, 1500.0
rs = np.random.default_rng(0)
grid = np.array([(x, y) for y in (-10.0, 0.0, 10.0) for x in (-15.0, 0.0, 15.0)])


def to_pcr(g):
    x, y = g[..., 0], g[..., 1]
    return np.stack([3 + 0.8 * x + 0.004 * x * x, -2 + 0.7 * y + 0.002 * x * y], axis=-1)


per = int(dwell * rate / 1000)
gaze = np.repeat(grid, per, axis=0)
pcr = Signal.from_frames(to_pcr(gaze) + rs.normal(scale=0.02, size=gaze.shape), rate)
targets = [Target(x, y, i * dwell, (i + 1) * dwell) for i, (x, y) in enumerate(grid)]

# calibrate on the per-target mean P-CR after the landing period
skip = int(300 * rate / 1000)
means = np.array([pcr.xy[i * per + skip:(i + 1) * per].mean(axis=0) for i in range(9)])
model = fit_calibration(means, grid)
est = apply_calibration(model, pcr)

acc = accuracy(est, targets)
print(f"accuracy: mean offset {acc.mean:.4f} deg")
print(f"precision: RMS-S2S {rms_s2s(est).median:.4f} deg, STD {std_precision(est).median:.4f} deg")
