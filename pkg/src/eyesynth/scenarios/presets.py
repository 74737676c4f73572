"""Built-in scenario presets and the two-stage override mechanism.

Presets are plain JSON-compatible trees.  Distribution leaves are dicts with a
``kind`` key (see :mod:`.distributions`); numbers are constants.  Each preset
carries a ``stages`` table whose stage-2 entry is deep-merged over the base
tree by :func:`apply_stage`.
"""
from __future__ import annotations

import copy
import json
from pathlib import Path

from .distributions import Distribution

PRESET_VERSION = 1


def U(lo, hi):
    return {"kind": "uniform", "lo": lo, "hi": hi}


def LU(lo, hi):
    return {"kind": "log_uniform", "lo": lo, "hi": hi}


def INT(lo, hi):
    return {"kind": "integer", "lo": lo, "hi": hi}


def EXP(scale, offset=0.0):
    return {"kind": "exponential", "scale": scale, "offset": offset}


def NORMAL(mean, std, clip=(0.0, 255.0)):
    return {"kind": "normal", "mean": mean, "std": std, "clip": list(clip)}


def WEIBULL(scale, shape, offset=0.0):
    return {"kind": "weibull", "scale": scale, "shape": shape, "offset": offset}


_CR_500 = {
    "family": "cr",
    "canvas": 180,
    "cr": {"radius": U(1, 30), "amplitude": LU(2, 20000), "luminance": 255},
    "background": {
        "dark": EXP(10, 1),
        "grey": 128,
        # distance from the CR center to the split line, in CR radii
        "line_offset": U(0.5, 1.5),
    },
    "noise_sigma": U(0, 30),
    # side length of the square the center is confined to; null = whole image
    "center_span": None,
    "stages": {"2": {"center_span": 1.5}},
}

_PUPIL_500 = {
    "family": "pupil",
    "canvas": 180,
    "pupil": {
        "alpha": U(20, 60),
        "aspect": U(1, 1.3),
        "amplitude": LU(2, 20000),
        "luminance": EXP(10, 1),
    },
    "crs": {
        "count": INT(1, 4),
        "alpha": U(4, 12),
        "aspect": U(1, 1.1),
        "amplitude": LU(2, 20000),
        "luminance": 255,
    },
    "background": {"level": U(64, 179)},
    "noise_sigma": U(0, 30),
    "center_span": None,
    "stages": {"2": {"center_span": 1.5, "crs": {"count": INT(1, 1)}}},
}

_EDS2019 = {
    "family": "full_eye",
    "canvas": 128,
    "sclera": NORMAL(217, 26),
    "iris": {
        "alpha": U(30, 42.5),
        "aspect": U(1, 1.3),
        "luminance": NORMAL(77, 16),
        "edge_width": U(8, 20),
    },
    "collarette": {
        "vertices": INT(13, 24),
        "radius": U(0.3, 0.6),
        "jitter": U(0.05, 0.2),
        "luminance_ratio": U(1.25, 1.6),
        "edge_width": U(1, 4),
        "center_jitter": U(0, 0.1),
        "upsample": 5,
    },
    "pupil": {
        "alpha": U(10, 30),
        "aspect": U(1, 1.3),
        "amplitude": LU(2, 2000),
        "luminance": NORMAL(34, 15),
    },
    "crs": {
        "count": INT(1, 8),
        "alpha": U(0.8, 4),
        "aspect": U(1, 1.4),
        "amplitude": LU(2, 20000),
        "luminance": 255,
    },
    "noise_sigma": U(0, 15),
    "stages": {"2": {}},
}

_CHUGH = {
    "family": "layout",
    "canvas": 128,
    "d": 128,
    "pupil": {
        "alpha": U(6, 22.5),
        "aspect": U(1, 1.3),
        "amplitude": LU(200, 100000),
        "luminance": EXP(10, 1),
    },
    "crs": {
        "alpha": U(1, 2.5),
        "aspect": U(1, 1.1),
        "amplitude": LU(200, 100000),
        "luminance": 255,
        "dropout": 0.16,
    },
    "layout": {
        "shape": "house",
        "width": U(0.1, 0.45),
        "rect_height": U(0.5, 0.6),
        "roof_height": U(0.2, 0.5),
        "rotation": U(-45, 45),
        # anchor = pupil center + uniform offset within this fraction of d
        "anchor_jitter": 0.1,
    },
    "spurious": {
        "count": INT(1, 5),
        "alpha": U(1, 2.5),
        "aspect": U(1, 2.5),
        "amplitude": LU(200, 100000),
        "luminance": 255,
    },
    "background": {"levels": U(63, 178)},
    "noise_sigma": U(0, 30),
    "stages": {
        "2": {
            "crs": {"dropout": 0.10},
            "spurious": {"count": INT(1, 3)},
            "layout": {"rotation": U(-35, 35)},
        }
    },
}


def _derive(base, **changes):
    out = copy.deepcopy(base)
    return merge(out, changes)


def merge(base, overrides):
    """Recursively merge ``overrides`` into ``base`` (in place) and return it.

    Distribution leaves (dicts with ``kind``) are replaced whole.
    """
    for key, value in overrides.items():
        current = base.get(key)
        if (isinstance(value, dict) and "kind" not in value
                and isinstance(current, dict) and "kind" not in current):
            merge(current, value)
        else:
            base[key] = copy.deepcopy(value)
    return base


PRESETS = {
    "cr_500": _CR_500,
    "cr_1000": _derive(_CR_500, background={"grey": U(32, 153)}),
    "pupil_500": _PUPIL_500,
    "pupil_1000": _derive(_PUPIL_500, background={"level": U(32, 153)}),
    "eds2019": _EDS2019,
    "chugh": _CHUGH,
    "eds2020": _derive(
        _CHUGH,
        pupil={"luminance": WEIBULL(25, 2, 18)},
        crs={"dropout": 0.20},
        layout={"shape": "ring", "radius": U(0.15, 0.4), "rotation": U(-0.57, 0.57)},
        stages={"2": {"crs": {"dropout": 0.20}, "spurious": {"count": INT(1, 3)},
                      "layout": {"rotation": U(-0.57, 0.57)}}},
    ),
}
for _name, _cfg in PRESETS.items():
    _cfg["scenario"] = _name
    _cfg["version"] = PRESET_VERSION
for _key in ("width", "rect_height", "roof_height"):
    del PRESETS["eds2020"]["layout"][_key]

SCENARIOS = tuple(PRESETS)


def get_preset(name):
    try:
        return copy.deepcopy(PRESETS[name])
    except KeyError:
        raise KeyError(f"unknown scenario {name!r}; expected one of {', '.join(SCENARIOS)}") from None


def apply_stage(cfg, stage):
    """Return a copy of ``cfg`` with the stage's overrides applied."""
    if stage not in (1, 2):
        raise ValueError(f"unknown stage {stage!r}")
    out = copy.deepcopy(cfg)
    out["stage"] = stage
    if stage == 1:
        return out
    return merge(out, cfg.get("stages", {}).get(str(stage), {}))


def resolve(name, stage=1, overrides=None):
    """Preset ``name`` at ``stage`` with optional user overrides merged last."""
    cfg = apply_stage(get_preset(name), stage)
    if overrides:
        merge(cfg, overrides)
    return cfg


def widened_ranges(cfg, stage=2):
    """List config paths where ``stage`` would widen a stage-1 range."""
    base = apply_stage(cfg, 1)
    staged = apply_stage(cfg, stage)
    problems = []

    def walk(a, b, path):
        if isinstance(b, dict) and "kind" in b:
            lo_a, hi_a = _bounds(a)
            lo_b, hi_b = _bounds(b)
            if lo_b < lo_a or hi_b > hi_a:
                problems.append(path)
        elif isinstance(b, dict):
            for key, value in b.items():
                if key in ("stages", "stage") or not isinstance(a, dict) or key not in a:
                    continue
                walk(a[key], value, f"{path}.{key}" if path else key)
        elif isinstance(b, (int, float)) and isinstance(a, (int, float)):
            # scalar probabilities/spans: stage 2 may only shrink them
            if b > a:
                problems.append(path)
        elif a is None and b is not None and path.endswith("center_span"):
            pass  # constraining an unconstrained center narrows it

    walk(base, staged, "")
    return problems


def _bounds(spec):
    if isinstance(spec, (int, float)):
        return spec, spec
    return Distribution.from_config(spec).bounds()


def save_preset(cfg, path):
    Path(path).write_text(json.dumps(cfg, indent=2, sort_keys=True) + "\n")


def load_preset(path):
    cfg = json.loads(Path(path).read_text())
    if cfg.get("version", PRESET_VERSION) != PRESET_VERSION:
        raise ValueError(f"unsupported preset version {cfg.get('version')!r}")
    return cfg


def export_presets(directory):
    """Write every built-in preset to ``directory/<name>.json``."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = []
    for name in SCENARIOS:
        path = directory / f"{name}.json"
        save_preset(get_preset(name), path)
        paths.append(path)
    return paths


def compile_config(cfg):
    """Copy of ``cfg`` with distribution leaves turned into :class:`Distribution` objects.

    Sampling accepts raw trees too; compiling once avoids re-validating every
    leaf on every draw.
    """
    if isinstance(cfg, dict):
        if "kind" in cfg:
            return Distribution.from_config(cfg)
        return {k: (v if k == "stages" else compile_config(v)) for k, v in cfg.items()}
    return cfg
