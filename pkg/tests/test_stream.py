import json
import math

import numpy as np
import pytest

from eyesynth import pcr
from eyesynth.stream import (
    derive_seed, export_dataset, gaussian_map, load_dataset, load_manifest, make_stream,
    next_batch, render_target_heatmaps,
)


def same(a, b):
    return (np.array_equal(a.image, b.image) and a.scene_seed == b.scene_seed
            and a.labels.pupil == b.labels.pupil and a.labels.crs == b.labels.crs)


def test_two_streams_identical():
    s1, s2 = make_stream("chugh", 1, 5), make_stream("chugh", 1, 5)
    for _ in range(100):
        assert same(next(s1), next(s2))


def test_scenario_changes_images():
    a = next(make_stream("pupil_500", 1, 5))
    b = next(make_stream("pupil_1000", 1, 5))
    assert a.scene_seed != b.scene_seed
    assert not np.array_equal(a.image, b.image)


def test_stage_changes_seed():
    assert derive_seed(1, "chugh", 1, 0) != derive_seed(1, "chugh", 2, 0)


def test_seed_is_64_bit():
    seeds = [derive_seed(3, "eds2020", 1, i) for i in range(1000)]
    assert len(set(seeds)) == 1000
    assert all(0 <= s < 2 ** 64 for s in seeds)
    assert max(seeds) > 2 ** 62


def test_skip_ahead_equals_sequential():
    s = make_stream("cr_1000", 2, 11)
    s.seek(10 ** 6 - 2)
    next(s)
    seq = next(s)
    direct = make_stream("cr_1000", 2, 11).sample_at(10 ** 6 - 1)
    assert same(seq, direct) and seq.index == 10 ** 6 - 1


def test_batch_laws():
    a = make_stream("eds2020", 1, 2)
    one = next_batch(a, 1) + next_batch(a, 1)
    two = next_batch(make_stream("eds2020", 1, 2), 2)
    assert all(same(x, y) for x, y in zip(one, two))
    batch = next_batch(make_stream("eds2020", 1, 2), 16)
    assert len({s.scene_seed for s in batch}) == 16
    with pytest.raises(ValueError):
        next_batch(a, 0)


def test_unknown_scenario():
    with pytest.raises(ValueError):
        make_stream("eds2021")
    with pytest.raises(ValueError):
        make_stream("chugh", stage=3)


def test_workers_equal_single():
    one = next_batch(make_stream("chugh", 2, 9), 12)
    many = next_batch(make_stream("chugh", 2, 9), 12, workers=3)
    assert [s.index for s in many] == list(range(12))
    assert all(same(x, y) for x, y in zip(one, many))


def test_rerender_from_seed():
    s = make_stream("eds2019", 1, 4).sample_at(3)
    from eyesynth.stream import generate_sample
    from eyesynth.scenarios import resolve
    again = generate_sample(resolve("eds2019", 1), s.scene_seed)
    assert np.array_equal(s.image, again.image)


def test_image_is_quantized():
    img = next(make_stream("pupil_500", 1, 0)).image
    k = img * 255
    assert np.array_equal(k, np.round(k)) and img.min() >= 0 and img.max() <= 1


# -- labels -------------------------------------------------------------------

def test_pupil_mask_matches_analytic_plateau():
    stream = make_stream("pupil_500", 1, 21)
    for _ in range(20):
        s = next(stream)
        p = s.labels.pupil
        h, w = s.image.shape
        yy, xx = np.mgrid[0:h, 0:w].astype(float)
        dx, dy = xx - p["x"], yy - p["y"]
        c, sn = math.cos(p["theta"]), math.sin(p["theta"])
        q = ((dx * c + dy * sn) / p["alpha"]) ** 2 + ((-dx * sn + dy * c) / p["beta"]) ** 2
        assert np.array_equal(s.labels.pupil_mask, q <= 1.0)


def test_heatmaps():
    stream = make_stream("chugh", 1, 8, heatmaps=True, map_sigma=1.5)
    for _ in range(10):
        s = next(stream)
        maps = s.labels.heatmaps
        assert maps.shape == (6, 128, 128)
        for k, c in enumerate(s.labels.crs, start=1):
            if not c["present"]:
                assert maps[k].max() == 0.0


def test_heatmap_peak_and_mass():
    m = gaussian_map((10.5, 20.25), 64, 64, 1.0)
    y, x = np.unravel_index(np.argmax(m), m.shape)
    assert x in (10, 11) and y == 20
    m = gaussian_map((30.3, 31.7), 64, 64, 2.0)
    assert m.sum() == pytest.approx(2 * math.pi * 4.0, rel=0.01)
    with pytest.raises(ValueError):
        render_target_heatmaps(next(make_stream("chugh")).scene, map_sigma=0)


# -- export -------------------------------------------------------------------

def test_export_round_trip(tmp_path):
    stream = make_stream("chugh", 2, 7)
    samples = [stream.sample_at(i) for i in range(10)]
    manifest = export_dataset(stream, 10, tmp_path / "a")
    assert stream.position == 10
    assert manifest["count"] == 10 and manifest["complete"]
    assert manifest["format_version"] == 1
    assert len(list((tmp_path / "a").glob("*.png"))) == 10
    lines = (tmp_path / "a" / "labels.jsonl").read_text().splitlines()
    assert len(lines) == 10
    assert set(json.loads(lines[0])) == {"file", "pupil", "crs", "seed"}
    for (img, rec), s in zip(load_dataset(tmp_path / "a"), samples):
        assert np.array_equal(img, s.image)
        assert rec["pupil"] == s.labels.pupil and rec["crs"] == s.labels.crs
        assert rec["seed"] == s.scene_seed


def test_export_hash_stable(tmp_path):
    a = export_dataset(make_stream("eds2020", 1, 3), 6, tmp_path / "a")
    b = export_dataset(make_stream("eds2020", 1, 3), 6, tmp_path / "b", workers=2)
    c = export_dataset(make_stream("eds2020", 1, 4), 6, tmp_path / "c")
    assert a["hash"] == b["hash"] != c["hash"]


def test_export_heatmaps(tmp_path):
    stream = make_stream("chugh", 1, 1)
    export_dataset(stream, 3, tmp_path, include_heatmaps=True)
    assert stream.position == 3
    manifest = load_manifest(tmp_path)
    maps = pcr.read_maps(tmp_path / manifest["files"][0]["maps"])
    assert maps.k == 5 and maps.shape == (128, 128)


def test_partial_export_marked_incomplete(tmp_path, monkeypatch):
    import eyesynth.stream as st

    calls = {"n": 0}
    real = st.write_png

    def flaky(path, gray):
        calls["n"] += 1
        if calls["n"] == 3:
            raise OSError("disk full")
        real(path, gray)

    monkeypatch.setattr(st, "write_png", flaky)
    with pytest.raises(OSError):
        export_dataset(make_stream("cr_500"), 5, tmp_path)
    m = load_manifest(tmp_path)
    assert not m["complete"] and m["count"] == 2
