import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from eyesynth.pcr import (
    DetectorReport, FeatureMapSet, MapFileError, decide_crop, peak_of_map, read_maps,
    refine_peak, select_best_two_crs, synthesize_oracle_maps, write_maps,
)
from eyesynth.stream import make_stream


def maps_with_peaks(peaks, shape=(16, 16), origin=(0, 0)):
    """One map per peak value, the peak placed at a distinct pixel."""
    cr = []
    for i, v in enumerate(peaks):
        m = np.full(shape, min(peaks) - 1.0)
        m[i % shape[0], (3 * i) % shape[1]] = v
        cr.append(m)
    return FeatureMapSet(np.zeros(shape), cr, origin)


def brute_top2(peaks, min_peak=1.0):
    ranked = sorted(((-v, i) for i, v in enumerate(peaks) if v >= min_peak))
    if len(ranked) < 2:
        return None
    return [i for _, i in ranked[:2]]


# -- crop decision ------------------------------------------------------------

def test_crop_branches():
    d = decide_crop(DetectorReport((200.0, 150.0), 0.95), 0.90, (400, 640))
    assert d.branch == "detector" and d.origin == (136, 86)
    d = decide_crop(DetectorReport((200.0, 150.0), 0.50), 0.90, (400, 640))
    assert d.branch == "center" and d.origin == (256, 136)


def test_crop_clamped():
    d = decide_crop(DetectorReport((10.0, 390.0), 1.0), 0.5, (400, 640))
    assert d.origin == (0, 400 - 128)


def test_crop_errors():
    with pytest.raises(ValueError):
        decide_crop(DetectorReport((0, 0), 0.5), 1.2, (400, 400))
    with pytest.raises(ValueError):
        decide_crop(DetectorReport((0, 0), 0.5), 0.5, (100, 400))
    with pytest.raises(ValueError):
        DetectorReport((0, 0), 1.5)


@given(st.floats(0, 1))
def test_crop_branch_flips_once(conf):
    report = DetectorReport((100.0, 100.0), conf)
    branches = [decide_crop(report, t, (300, 300)).branch for t in np.linspace(0, 1, 101)]
    flips = sum(a != b for a, b in zip(branches, branches[1:]))
    assert flips <= 1 and branches[0] == "detector"


# -- peaks --------------------------------------------------------------------

def test_peak_unique():
    m = np.zeros((50, 60))
    m[25, 40] = 7.0
    assert peak_of_map(m) == (7.0, 40, 25)


def test_peak_ties():
    m = np.zeros((20, 20))
    m.flat[100] = m.flat[200] = 3.0
    assert peak_of_map(m)[1:] == (0, 5)
    assert peak_of_map(np.full((4, 4), 2.0)) == (2.0, 0, 0)


def test_refine_peak_parabola():
    xs = np.arange(20.0)
    m = -((xs[None, :] - 7.3) ** 2) - (xs[:, None] - 11.8) ** 2
    _, x, y = peak_of_map(m)
    assert refine_peak(m, x, y) == pytest.approx((7.3, 11.8))


# -- selection ----------------------------------------------------------------

def test_select_example():
    res = select_best_two_crs(maps_with_peaks([5.2, 0.8, 3.1, 7.0, 2.2]))
    assert res.valid and [c.index for c in res.selected] == [3, 0]
    assert [c.logit for c in res.selected] == [7.0, 5.2]


def test_select_invalid():
    res = select_best_two_crs(maps_with_peaks([0.9, 0.5, 0.3, 0.2, 0.1]))
    assert not res.valid and res.status == "invalid" and res.selected == []


def test_select_boundary_tie():
    res = select_best_two_crs(maps_with_peaks([1.0, 1.0]))
    assert res.valid and [c.index for c in res.selected] == [0, 1]


def test_select_translates_origin():
    m = maps_with_peaks([3.0, 2.0], origin=(100, 50))
    res = select_best_two_crs(m)
    assert res.selected[0].center == (100, 50)
    assert res.selected[1].center == (103, 51)
    assert res.pupil_center == (100, 50)


@settings(max_examples=300, deadline=None)
@given(st.lists(st.sampled_from([-1.0, 0.5, 0.99, 1.0, 1.5, 2.0, 3.0]), min_size=2, max_size=9))
def test_select_matches_brute_force(peaks):
    res = select_best_two_crs(maps_with_peaks(peaks))
    expect = brute_top2(peaks)
    assert res.valid == (expect is not None)
    assert res.valid == (sum(v >= 1 for v in peaks) >= 2)
    if expect:
        assert [c.index for c in res.selected] == expect


@settings(max_examples=100, deadline=None)
@given(st.lists(st.integers(-20, 40), min_size=2, max_size=8), st.integers(-12, 12),
       st.sampled_from([0.125, 0.5, 2.0, 8.0]))
def test_monotone_invariance(peaks, shift, scale):
    # integer logits and dyadic factors keep the transformed values exact
    peaks = [float(p) for p in peaks]

    def picked(ps):
        order = sorted(range(len(ps)), key=lambda i: (-ps[i], i))
        return order[:2]

    base = maps_with_peaks(peaks)
    moved = FeatureMapSet(base.pupil_map, [m + shift for m in base.cr_maps])
    scaled = FeatureMapSet(base.pupil_map, [m * scale for m in base.cr_maps])
    for ms in (moved, scaled):
        r = select_best_two_crs(ms, min_peak=-np.inf)
        assert [c.index for c in r.selected] == picked(peaks)


def test_csv_row():
    res = select_best_two_crs(maps_with_peaks([2.0, 4.0, 0.1]))
    row = res.csv_row("f1")
    assert row[:2] == ["f1", "valid"] and row[4] == 1 and row[8] == 0
    assert len(select_best_two_crs(maps_with_peaks([0.1, 0.2])).csv_row(0)) == 12


# -- oracle maps --------------------------------------------------------------

def test_oracle_maps_valid_and_dropped():
    labels = {"pupil": {"x": 60.0, "y": 61.0},
              "crs": [{"x": 20.0 + 15 * i, "y": 30.0, "present": True} for i in range(5)]}
    res = select_best_two_crs(synthesize_oracle_maps(labels, (128, 128)))
    assert res.valid
    for c in labels["crs"][1:]:
        c["present"] = False
    assert not select_best_two_crs(synthesize_oracle_maps(labels, (128, 128))).valid
    with pytest.raises(ValueError):
        synthesize_oracle_maps(labels, (8, 8), peak_scale=0)


def test_oracle_peaks_near_labels():
    stream = make_stream("chugh", 1, 13)
    for _ in range(50):
        s = next(stream)
        maps = synthesize_oracle_maps(s.labels, s.image.shape)
        for c, m in zip(s.labels.crs, maps.cr_maps):
            if c["present"]:
                _, x, y = peak_of_map(m)
                assert abs(x - c["x"]) <= 1 and abs(y - c["y"]) <= 1
            else:
                assert m.max() == 0


# -- map files ----------------------------------------------------------------

def test_map_round_trip(tmp_path):
    rs = np.random.default_rng(0)
    m = FeatureMapSet(rs.normal(size=(128, 128)).astype(np.float32),
                      [rs.normal(size=(128, 128)).astype(np.float32) for _ in range(6)])
    path = tmp_path / "a.maps"
    write_maps(m, path)
    header = b"LEYESMAPS 1 128 128 7\n"
    assert path.read_bytes().startswith(header)
    assert path.stat().st_size == len(header) + 7 * 128 * 128 * 4
    back = read_maps(path, (5, 6))
    assert np.array_equal(back.pupil_map, m.pupil_map)
    assert all(np.array_equal(a, b) for a, b in zip(back.cr_maps, m.cr_maps))
    assert back.crop_origin == (5, 6)


def test_map_short_file(tmp_path):
    path = tmp_path / "s.maps"
    path.write_bytes(b"LEYESMAPS 1 4 4 6\n" + np.zeros(5 * 16, "<f4").tobytes())
    with pytest.raises(MapFileError, match="short"):
        read_maps(path)


@pytest.mark.parametrize("blob", [
    b"",
    b"NOTMAPS 1 4 4 2\n",
    b"LEYESMAPS 2 4 4 2\n",
    b"LEYESMAPS 1 x 4 2\n",
    b"LEYESMAPS 1 4 4 1\n" + bytes(16 * 4 + 4),
])
def test_map_bad_files(tmp_path, blob):
    path = tmp_path / "bad.maps"
    path.write_bytes(blob)
    with pytest.raises(MapFileError):
        read_maps(path)


def test_map_set_shape_check():
    with pytest.raises(ValueError):
        FeatureMapSet(np.zeros((4, 4)), [np.zeros((4, 5))])
