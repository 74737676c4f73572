"""Deterministic sample streams and dataset export.

Sample ``i`` of a stream gets its own 64-bit scene seed derived from
``(master_seed, scenario, stage, i)``, so any sample can be produced on its own,
in any order, by any worker, and come out bitwise identical.
"""
from __future__ import annotations

import hashlib
import json
import math
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from .render import from_uint8, plateau_mask, to_uint8
from .scenarios import SCENARIOS, compile_config, render_scene, resolve, sample_scene

FORMAT_VERSION = 1
DEFAULT_MAP_SIGMA = 1.0


def derive_seed(master_seed, scenario, stage, index):
    """Counter-based 64-bit seed for one sample."""
    key = (zlib.crc32(scenario.encode()), int(stage), int(index))
    ss = np.random.SeedSequence(int(master_seed), spawn_key=key)
    lo, hi = ss.generate_state(2, dtype=np.uint32)
    return int(hi) << 32 | int(lo)


@dataclass
class LabelSet:
    pupil: dict = None  # {x, y, alpha, beta, theta}
    crs: list = field(default_factory=list)  # [{index, x, y, present}]
    pupil_mask: np.ndarray = None
    heatmaps: np.ndarray = None  # (1 + n_crs, H, W), pupil first

    @property
    def pupil_center(self):
        return None if self.pupil is None else (self.pupil["x"], self.pupil["y"])

    @property
    def pupil_ellipse(self):
        p = self.pupil
        return None if p is None else (p["alpha"], p["beta"], p["theta"])

    @property
    def cr_centers(self):
        return [(c["index"], c["x"], c["y"], c["present"]) for c in self.crs]


@dataclass
class Sample:
    image: np.ndarray
    labels: LabelSet
    scene_seed: int
    scenario: str
    stage: int
    index: int = None
    scene: object = None

    def record(self, file=None):
        """JSON-ready label line."""
        return {"file": file, "pupil": self.labels.pupil, "crs": self.labels.crs,
                "seed": self.scene_seed}


def gaussian_map(center, width, height, sigma, peak=1.0):
    """Isotropic Gaussian of height ``peak`` at subpixel ``center``, culled at 6 sigma."""
    out = np.zeros((height, width))
    x, y = center
    r = 6.0 * sigma
    c0, c1 = max(int(math.ceil(x - r)), 0), min(int(math.floor(x + r)), width - 1)
    r0, r1 = max(int(math.ceil(y - r)), 0), min(int(math.floor(y + r)), height - 1)
    if c0 <= c1 and r0 <= r1:
        xs = np.arange(c0, c1 + 1, dtype=float)[None, :] - x
        ys = np.arange(r0, r1 + 1, dtype=float)[:, None] - y
        out[r0:r1 + 1, c0:c1 + 1] = peak * np.exp(-(xs * xs + ys * ys) / (2.0 * sigma * sigma))
    return out


def render_target_heatmaps(scene, map_sigma=DEFAULT_MAP_SIGMA, peak=1.0):
    """One map per channel (pupil, then each CR); absent features give zeros."""
    if not map_sigma > 0:
        raise ValueError("map_sigma must be > 0")
    w, h = scene.width, scene.height
    maps = np.zeros((1 + len(scene.crs), h, w))
    if scene.pupil is not None:
        maps[0] = gaussian_map(scene.pupil.center, w, h, map_sigma, peak)
    for k, cr in enumerate(scene.crs, start=1):
        if cr.present:
            maps[k] = gaussian_map((cr.x, cr.y), w, h, map_sigma, peak)
    return maps


def labels_for(scene, heatmaps=False, map_sigma=DEFAULT_MAP_SIGMA, map_peak=1.0):
    pupil = None
    mask = None
    if scene.pupil is not None:
        p = scene.pupil
        pupil = {"x": p.x, "y": p.y, "alpha": p.alpha, "beta": p.beta, "theta": p.theta}
        mask = plateau_mask(p, scene.width, scene.height)
    crs = [{"index": c.index, "x": c.x, "y": c.y, "present": bool(c.present)} for c in scene.crs]
    maps = render_target_heatmaps(scene, map_sigma, map_peak) if heatmaps else None
    return LabelSet(pupil, crs, mask, maps)


def generate_sample(cfg, scene_seed, heatmaps=False, map_sigma=DEFAULT_MAP_SIGMA,
                    map_peak=1.0, index=None):
    """Render one sample from a resolved (optionally compiled) config."""
    rng = np.random.default_rng(scene_seed)
    scene = sample_scene(cfg, rng)
    image = render_scene(scene, rng)
    labels = labels_for(scene, heatmaps, map_sigma, map_peak)
    return Sample(image, labels, scene_seed, cfg["scenario"], cfg.get("stage", 1), index, scene)


class SampleStream:
    """Unbounded, seekable sequence of samples for one scenario and stage."""

    def __init__(self, scenario, stage=1, master_seed=0, overrides=None, heatmaps=False,
                 map_sigma=DEFAULT_MAP_SIGMA, map_peak=1.0, position=0):
        if scenario not in SCENARIOS:
            raise ValueError(f"unknown scenario {scenario!r}")
        self.scenario = scenario
        self.stage = stage
        self.master_seed = int(master_seed)
        self.overrides = overrides
        self.heatmaps = heatmaps
        self.map_sigma = map_sigma
        self.map_peak = map_peak
        self.config = resolve(scenario, stage, overrides)
        self._compiled = compile_config(self.config)
        self.position = position

    def params(self):
        """Picklable constructor arguments (used to rebuild the stream in workers)."""
        return dict(scenario=self.scenario, stage=self.stage, master_seed=self.master_seed,
                    overrides=self.overrides, heatmaps=self.heatmaps,
                    map_sigma=self.map_sigma, map_peak=self.map_peak)

    def seed_at(self, index):
        return derive_seed(self.master_seed, self.scenario, self.stage, index)

    def sample_at(self, index):
        return generate_sample(self._compiled, self.seed_at(index), self.heatmaps,
                               self.map_sigma, self.map_peak, index)

    def seek(self, index):
        self.position = int(index)
        return self

    def __iter__(self):
        return self

    def __next__(self):
        sample = self.sample_at(self.position)
        self.position += 1
        return sample


def make_stream(scenario, stage=1, master_seed=0, **kwargs):
    return SampleStream(scenario, stage, master_seed, **kwargs)


def _render_range(params, start, stop):
    stream = SampleStream(**params)
    return [stream.sample_at(i) for i in range(start, stop)]


def _chunks(start, n, parts):
    size = max(1, math.ceil(n / parts))
    return [(s, min(s + size, start + n)) for s in range(start, start + n, size)]


def render_indices(stream, start, n, workers=1, executor=None):
    """Samples ``start .. start + n - 1`` in index order, optionally in worker processes."""
    if workers <= 1 and executor is None:
        return [stream.sample_at(i) for i in range(start, start + n)]
    params = stream.params()
    ranges = _chunks(start, n, 4 * max(workers, 1))
    own = executor is None
    pool = executor or ProcessPoolExecutor(max_workers=workers)
    try:
        futures = [pool.submit(_render_range, params, a, b) for a, b in ranges]
        out = []
        for fut in futures:
            out.extend(fut.result())
        return out
    finally:
        if own:
            pool.shutdown()


def next_batch(stream, n, workers=1):
    """Next ``n`` samples of ``stream`` in order; advances the stream."""
    if n < 1:
        raise ValueError("batch size must be >= 1")
    batch = render_indices(stream, stream.position, n, workers)
    stream.position += n
    return batch


# -- export -----------------------------------------------------------------

def write_png(path, gray):
    Image.fromarray(to_uint8(gray), mode="L").save(path, format="PNG")


def read_png(path):
    with Image.open(path) as im:
        if im.mode != "L":
            im = im.convert("L")
        return from_uint8(np.asarray(im))


def _manifest_hash(entries, label_lines):
    h = hashlib.sha256()
    for entry, line in zip(entries, label_lines):
        h.update(entry["image_sha256"].encode())
        h.update(line.encode())
    return h.hexdigest()


def _write_manifest(directory, manifest):
    path = Path(directory) / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path


def export_dataset(stream, n, directory, include_heatmaps=False, workers=1, batch=256):
    """Write ``n`` samples from the stream's current position to ``directory``.

    Layout: ``<index>.png`` images, ``labels.jsonl`` (one record per image),
    optional ``<index>.maps`` heatmaps and ``manifest.json``.  The manifest is
    written first with ``complete: false`` and rewritten when done.
    """
    from .pcr import FeatureMapSet, write_maps

    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    caller = stream
    if include_heatmaps and not stream.heatmaps:
        params = stream.params()
        params["heatmaps"] = True
        stream = SampleStream(**params, position=stream.position)
    start = stream.position
    manifest = {
        "format_version": FORMAT_VERSION,
        "scenario": stream.scenario,
        "stage": stream.stage,
        "master_seed": stream.master_seed,
        "start": start,
        "count": 0,
        "requested": n,
        "complete": False,
        "labels_file": "labels.jsonl",
        "config": stream.config,
        "files": [],
        "hash": None,
    }
    _write_manifest(directory, manifest)
    entries, lines = [], []
    pool = ProcessPoolExecutor(max_workers=workers) if workers > 1 else None
    try:
        with open(directory / "labels.jsonl", "w") as labels_out:
            for a in range(start, start + n, batch):
                m = min(batch, start + n - a)
                for sample in render_indices(stream, a, m, workers, executor=pool):
                    name = f"{sample.index:06d}.png"
                    write_png(directory / name, sample.image)
                    pixels = to_uint8(sample.image)
                    entry = {"image": name,
                             "image_sha256": hashlib.sha256(pixels.tobytes()).hexdigest()}
                    if include_heatmaps:
                        maps_name = f"{sample.index:06d}.maps"
                        hm = sample.labels.heatmaps
                        write_maps(FeatureMapSet(hm[0], list(hm[1:])), directory / maps_name)
                        entry["maps"] = maps_name
                    line = json.dumps(sample.record(name), sort_keys=True)
                    labels_out.write(line + "\n")
                    entries.append(entry)
                    lines.append(line)
    except BaseException:
        manifest.update(count=len(entries), files=entries, hash=_manifest_hash(entries, lines))
        _write_manifest(directory, manifest)
        raise
    finally:
        if pool is not None:
            pool.shutdown()
    caller.position = start + n
    manifest.update(count=len(entries), files=entries, complete=True,
                    hash=_manifest_hash(entries, lines))
    _write_manifest(directory, manifest)
    return manifest


def load_manifest(directory):
    return json.loads((Path(directory) / "manifest.json").read_text())


def load_dataset(directory):
    """Yield ``(image, label_record)`` pairs of an exported dataset in order."""
    directory = Path(directory)
    manifest = load_manifest(directory)
    with open(directory / manifest["labels_file"]) as fh:
        for line in fh:
            record = json.loads(line)
            yield read_png(directory / record["file"]), record
