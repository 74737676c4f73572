"""Picking the two most confident CRs from per-illuminator heat maps.

Oracle maps (what a perfect network would output) are built from the
labels of Chugh-style samples; the selection then recovers the CR centers.
"""
import math

from eyesynth import make_stream
from eyesynth.pcr import select_best_two_crs, synthesize_oracle_maps

stream = make_stream("chugh", 1, 3)
valid = errors = 0
worst = 0.0
for _ in range(300):
    s = next(stream)
    res = select_best_two_crs(synthesize_oracle_maps(s.labels, s.image.shape))
    if not res.valid:
        continue
    valid += 1
    for c in res.selected:
        lab = s.labels.crs[c.index]
        d = math.hypot(c.center[0] - lab["x"], c.center[1] - lab["y"])
        worst = max(worst, d)
        errors += not lab["present"]
print(f"{valid}/300 frames had two confident CRs; worst center error {worst:.2f} px; "
      f"{errors} picks on dropped CRs")

res = select_best_two_crs(synthesize_oracle_maps(next(stream).labels, (128, 128)))
print("example row:", res.csv_row(0))
