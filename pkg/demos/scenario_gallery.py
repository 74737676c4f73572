"""One stage-1 and one stage-2 sample from each of the seven scenario presets."""
import argparse
from pathlib import Path

import numpy as np
from PIL import Image

from eyesynth import SCENARIOS, make_stream
from eyesynth.render import to_uint8

parser = argparse.ArgumentParser(description=__doc__)
parser.add_argument("--out", type=Path, default=Path("demo_output"))
parser.add_argument("--seed", type=int, default=0)
args = parser.parse_args()
args.out.mkdir(parents=True, exist_ok=True)

for name in SCENARIOS:
    row = []
    for stage in (1, 2):
        s = next(make_stream(name, stage, args.seed))
        row.append(to_uint8(s.image))
        p = s.labels.pupil
        crs = [c for c in s.labels.crs if c["present"]]
        where = f"pupil at ({p['x']:.1f}, {p['y']:.1f})" if p else "no pupil"
        print(f"{name:<10} stage {stage}: {s.image.shape[1]}x{s.image.shape[0]}, "
              f"{where}, {len(crs)} visible CRs")
    Image.fromarray(np.hstack(row)).save(args.out / f"{name}.png")
print("wrote one PNG per preset to", args.out)
