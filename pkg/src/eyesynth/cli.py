"""Command-line entry point: ``eyesynth <command> ...``.

Exit codes: 0 success, 1 runtime failure, 2 usage error.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import secrets
import sys
import time
from pathlib import Path

import numpy as np

from . import metrics, pcr, vision
from .scenarios import SCENARIOS
from .stream import SampleStream, export_dataset, read_png

log = logging.getLogger("eyesynth")

ANALYZE_HEADER = ("frame_index", "pupil_x", "pupil_y", "cr_x", "cr_y", "valid_flags")
PUPIL_OK, CR_OK = 1, 2


def _write_snapshot(path, command, args, extra=None):
    snap = {"command": command,
            "args": {k: (str(v) if isinstance(v, Path) else v)
                     for k, v in sorted(vars(args).items()) if k != "func"}}
    if extra:
        snap.update(extra)
    Path(path).write_text(json.dumps(snap, indent=2, sort_keys=True, default=str) + "\n")


def _snapshot_path(out):
    out = Path(out)
    return out.with_name(out.name + ".run.json")


def _load_json(path):
    return json.loads(Path(path).read_text()) if path else None


# -- generate ---------------------------------------------------------------

def cmd_generate(args):
    seed = args.seed if args.seed is not None else secrets.randbits(63)
    overrides = _load_json(args.config)
    stream = SampleStream(args.scenario, args.stage, seed, overrides=overrides,
                          heatmaps=args.heatmaps, map_sigma=args.map_sigma,
                          map_peak=args.map_peak)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _write_snapshot(out / "run_config.json", "generate", args,
                    {"resolved_seed": seed, "resolved_config": stream.config})
    t0 = time.perf_counter()
    manifest = export_dataset(stream, args.count, out, include_heatmaps=args.heatmaps,
                              workers=args.threads)
    elapsed = time.perf_counter() - t0
    log.info("generated %d %s samples in %.2fs (%.1f samples/s, %d workers)",
             manifest["count"], args.scenario, elapsed, manifest["count"] / max(elapsed, 1e-9),
             args.threads)
    print(json.dumps({"count": manifest["count"], "hash": manifest["hash"],
                      "seconds": round(elapsed, 4)}))
    return 0


# -- analyze ----------------------------------------------------------------

def list_frames(directory):
    """Frame files sorted by name: PNGs, or ``*.raw`` dumps with ``header.json``."""
    directory = Path(directory)
    pngs = sorted(directory.glob("*.png"))
    raws = sorted(directory.glob("*.raw"))
    return pngs + raws


def read_frame(path):
    path = Path(path)
    if path.suffix == ".raw":
        header = json.loads((path.parent / "header.json").read_text())
        w, h = int(header["width"]), int(header["height"])
        data = np.fromfile(path, dtype=np.uint8)
        if data.size != w * h:
            raise ValueError(f"{path}: expected {w * h} bytes, got {data.size}")
        return data.reshape(h, w) / 255.0
    return read_png(path)


def threshold_config(cfg):
    cfg = dict(cfg or {})
    auto = cfg.get("pupil_threshold") == "auto"
    if auto:
        cfg.pop("pupil_threshold")
    if "roi" in cfg and cfg["roi"] is not None:
        cfg["roi"] = tuple(cfg["roi"])
    return vision.ThresholdConfig(**cfg), auto


def analyze_frame(img, criteria, auto_pupil=False):
    t = vision.plateau_threshold(img) if auto_pupil else None
    pupil = vision.locate_pupil(img, criteria, threshold=t)
    cr = vision.locate_cr(img, criteria)
    return pupil, cr


def cmd_analyze(args):
    criteria, auto = threshold_config(_load_json(args.config))
    frames = list_frames(args.frames_dir)
    out = Path(args.out)
    _write_snapshot(_snapshot_path(out), "analyze", args, {"frames": len(frames)})
    with open(out, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(ANALYZE_HEADER)
        for i, path in enumerate(frames):
            row = [i, "", "", "", "", 0]
            try:
                img = read_frame(path)
                pupil, cr = analyze_frame(img, criteria, auto)
            except Exception as exc:  # corrupt frame: mark invalid, keep going
                log.warning("frame %s unreadable: %s", path.name, exc)
                writer.writerow(row)
                continue
            flags = 0
            if pupil is not None:
                row[1:3] = [repr(float(pupil.center[0])), repr(float(pupil.center[1]))]
                flags |= PUPIL_OK
            if cr is not None:
                row[3:5] = [repr(float(cr.center[0])), repr(float(cr.center[1]))]
                flags |= CR_OK
            row[5] = flags
            writer.writerow(row)
    return 0


# -- pcr --------------------------------------------------------------------

def _unit_interval(text):
    value = float(text)
    if not 0.0 <= value <= 1.0:
        raise argparse.ArgumentTypeError(f"{text} is outside [0, 1]")
    return value


def _load_reports(path):
    reports = {}
    if path:
        for line in Path(path).read_text().splitlines():
            if line.strip():
                rec = json.loads(line)
                reports[str(rec["frame"])] = pcr.DetectorReport((rec["x"], rec["y"]),
                                                                rec["confidence"])
    return reports


def cmd_pcr(args):
    frames = {p.stem: p for p in list_frames(args.frames_dir)}
    maps = {p.stem: p for p in sorted(Path(args.maps_dir).glob("*.maps"))}
    for stem in sorted(set(frames) ^ set(maps)):
        log.warning("skipping %s: no matching %s", stem, "maps" if stem in frames else "frame")
    reports = _load_reports(args.reports)
    out = Path(args.out)
    _write_snapshot(_snapshot_path(out), "pcr", args)
    crops_path = out.with_name(out.name + ".crops.jsonl")
    with open(out, "w", newline="") as fh, open(crops_path, "w") as crops:
        writer = csv.writer(fh)
        writer.writerow(pcr.CSV_HEADER)
        for stem in sorted(set(frames) & set(maps)):
            img = read_frame(frames[stem])
            mapset = pcr.read_maps(maps[stem])
            report = reports.get(stem) or vision.detector_report(img)
            h, w = mapset.shape
            if h != w:
                raise ValueError(f"{stem}: maps must be square, got {w}x{h}")
            decision = pcr.decide_crop(report, args.cth, img.shape, crop_size=w)
            log.info("frame %s: crop %s at %s (confidence %.3f)", stem, decision.branch,
                     decision.origin, report.confidence)
            crops.write(json.dumps({"frame": stem, "branch": decision.branch,
                                    "origin": list(decision.origin),
                                    "confidence": report.confidence}) + "\n")
            mapset.crop_origin = decision.origin
            result = pcr.select_best_two_crs(mapset, subpixel=args.subpixel)
            writer.writerow(result.csv_row(stem))
    return 0


# -- calibrate / metrics ----------------------------------------------------

def _targets(items):
    return [metrics.Target(t["x_deg"], t["y_deg"], t["t_on_ms"], t["t_off_ms"]) for t in items]


def _float(text):
    return float(text) if text not in ("", None) else math.nan


def read_pcr_source(path, rate):
    """P-CR signal from an ``analyze`` or ``pcr`` CSV.

    For ``pcr`` output the CR position is the midpoint of the two selected CRs.
    """
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        return metrics.Signal.from_frames(np.empty((0, 2)), rate)
    if "cr_a_x" in rows[0]:
        pupil = [(_float(r["pupil_x"]), _float(r["pupil_y"])) for r in rows]
        cr = [(0.5 * (_float(r["cr_a_x"]) + _float(r["cr_b_x"])),
               0.5 * (_float(r["cr_a_y"]) + _float(r["cr_b_y"]))) for r in rows]
        valid = [r["status"] == "valid" for r in rows]
    else:
        pupil = [(_float(r["pupil_x"]), _float(r["pupil_y"])) for r in rows]
        cr = [(_float(r["cr_x"]), _float(r["cr_y"])) for r in rows]
        valid = [int(r["valid_flags"]) == PUPIL_OK | CR_OK for r in rows]
    ps = metrics.Signal.from_frames(pupil, rate, valid)
    cs = metrics.Signal.from_frames(cr, rate, valid)
    return metrics.pcr_vector(ps, cs)


def read_gaze_csv(path, rate):
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    xy = [(_float(r["x"]), _float(r["y"])) for r in rows]
    valid = [r.get("valid", "1") not in ("0", "false", "False") for r in rows]
    if rows and "t_ms" in rows[0]:
        return metrics.Signal([float(r["t_ms"]) for r in rows], xy, valid, rate)
    return metrics.Signal.from_frames(xy, rate, valid)


def cmd_calibrate(args):
    session = _load_json(args.session)
    rate = args.rate or session.get("rate_hz", 1000.0)
    skip = session.get("skip_ms", metrics.FIXATION_SKIP_MS)
    signal = read_pcr_source(args.pcr_csv, rate)
    targets = _targets(session.get("calibration_targets") or session["targets"])
    uv = metrics.target_means(signal, targets, skip)
    model = metrics.fit_calibration(uv, [(t.x, t.y) for t in targets])
    out = Path(args.out)
    _write_snapshot(_snapshot_path(out), "calibrate", args)
    payload = model.to_dict()
    payload["n_points"] = len(targets)
    out.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    return 0


def _safe_median(metric, signal, window_ms):
    try:
        return metric(signal, window_ms).median
    except ValueError:
        return math.nan


def _clean(value):
    return None if isinstance(value, float) and math.isnan(value) else value


def cmd_metrics(args):
    session = _load_json(args.session)
    rate = args.rate or session.get("rate_hz", 1000.0)
    skip = session.get("skip_ms", metrics.FIXATION_SKIP_MS)
    window = session.get("window_ms", metrics.WINDOW_MS)
    if args.model:
        model = metrics.CalibrationModel.from_dict(_load_json(args.model))
        gaze = metrics.apply_calibration(model, read_pcr_source(args.gaze_csv, rate))
    else:
        gaze = read_gaze_csv(args.gaze_csv, rate)
    scale = float(session.get("screen", {}).get("deg_per_unit", 1.0))
    gaze = metrics.Signal(gaze.t, gaze.xy * scale, gaze.valid, gaze.rate)
    trials = [(t["t_start_ms"], t["t_end_ms"]) for t in session.get("trials", [])]
    if not trials and len(gaze):
        trials = [(gaze.t[0], gaze.t[-1] + 1.0)]
    per_trial = []
    for t0, t1 in trials:
        sel = (gaze.t >= t0) & (gaze.t < t1)
        part = metrics.Signal(gaze.t[sel], gaze.xy[sel], gaze.valid[sel], gaze.rate)
        per_trial.append({"t_start_ms": t0, "t_end_ms": t1,
                          "rms_s2s": _safe_median(metrics.rms_s2s, part, window),
                          "std": _safe_median(metrics.std_precision, part, window)})
    report = {
        "window_ms": window,
        "aggregate_by": args.aggregate,
        "trials": [{k: _clean(v) for k, v in t.items()} for t in per_trial],
        "rms_s2s": _clean(metrics.aggregate([t["rms_s2s"] for t in per_trial], args.aggregate)),
        "std": _clean(metrics.aggregate([t["std"] for t in per_trial], args.aggregate)),
    }
    if session.get("targets"):
        acc = metrics.accuracy(gaze, _targets(session["targets"]), skip)
        report["accuracy"] = {"per_target": acc.offsets, "mean": acc.mean}
    out = Path(args.out)
    _write_snapshot(_snapshot_path(out), "metrics", args)
    out.write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    return 0


# -- parser -----------------------------------------------------------------

def build_parser():
    parser = argparse.ArgumentParser(prog="eyesynth", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="render and export a synthetic dataset")
    p.add_argument("scenario", choices=SCENARIOS)
    p.add_argument("--stage", type=int, choices=(1, 2), default=1)
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--heatmaps", action="store_true")
    p.add_argument("--map-sigma", type=float, default=1.0)
    p.add_argument("--map-peak", type=float, default=1.0)
    p.add_argument("--threads", type=int, default=1, help="worker processes")
    p.add_argument("--config", type=Path, help="JSON overrides merged over the preset")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("analyze", help="threshold-based pupil/CR centers per frame")
    p.add_argument("frames_dir", type=Path)
    p.add_argument("--config", type=Path)
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("pcr", help="select the two most confident CRs from map files")
    p.add_argument("frames_dir", type=Path)
    p.add_argument("maps_dir", type=Path)
    p.add_argument("--cth", type=_unit_interval, default=0.90)
    p.add_argument("--reports", type=Path, help="JSONL detector reports {frame, x, y, confidence}")
    p.add_argument("--subpixel", action="store_true")
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(func=cmd_pcr)

    p = sub.add_parser("calibrate", help="fit the P-CR to gaze polynomial")
    p.add_argument("pcr_csv", type=Path)
    p.add_argument("session", type=Path)
    p.add_argument("--rate", type=float)
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("metrics", help="RMS-S2S, STD and accuracy report")
    p.add_argument("gaze_csv", type=Path)
    p.add_argument("session", type=Path)
    p.add_argument("--model", type=Path, help="calibration JSON; input is then a P-CR source")
    p.add_argument("--rate", type=float)
    p.add_argument("--aggregate", choices=("mean", "median"), default="mean")
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(func=cmd_metrics)
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if getattr(args, "count", 0) < 0:
            parser.error("--count must be >= 0")
        if getattr(args, "threads", 1) < 1:
            parser.error("--threads must be >= 1")
    except SystemExit as exc:  # usage errors and --help
        return exc.code if isinstance(exc.code, int) else 2
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except Exception as exc:
        log.error("%s failed: %s", args.command, exc)
        return 1


if __name__ == "__main__":
    sys.exit(main())
