"""
pipeline.py — entry point

Acoustic gait triage, one subcommand per stage:
  synth    labelled synthetic scenes + manifest
  extract  manifest -> per-window feature CSV
  train    feature CSV -> model file + CV report
  eval     model + feature CSV -> metrics JSON + confusion block
  filter   manifest + model -> filtered manifest + triage report
  report   feature CSV -> scatter CSV/SVG, energy CSV, markdown summary
  gate     raw recording -> RMS-gated segments (+ decisions with --model)

Usage:
  python pipeline.py synth --out data/synth
  python pipeline.py extract data/synth/manifest.csv --out data/features.csv
  python pipeline.py train data/features.csv --out data/model.json
  python pipeline.py eval data/model.json data/test_features.csv
  python pipeline.py filter data/synth/manifest.csv data/model.json --out data/filtered.csv
  python pipeline.py report data/features.csv --svg

Defaults come from --config FILE, then GAIT_* environment / .env, then
the built-in values (see settings.py). Every --help shows the resolved
value.

Failures print one line to stderr, tab-separated so scripts can split it:
  error<TAB><Kind><TAB><message>
and exit 1.
"""

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

from audio_io import (CANONICAL_RATE, GateConfig, calibrate_threshold, load_wav, rms_gate,
                      write_gate_csv)
from classifier import (BAD, GOOD, LabeledExample, TrainConfig, confusion_text, evaluate,
                        load_model, majority_baseline, save_model, split_train_test,
                        threshold_sweep, train)
from errors import InvalidInput, TriageError
from reporter import (find_window, write_energy_csv, write_scatter_csv, write_scatter_svg,
                      write_summary)
from settings import load_settings
from spectro import SpectroParams
from storage import write_csv_atomic, write_json_atomic
from synth import synth_dataset
from triage import (FEATURE_HEADER, GAIT, TriageParams, count_windows, extract_manifest,
                    read_features_csv, read_manifest, triage_dataset, triage_recording,
                    write_features_csv, write_manifest, write_report)

DATA_DIR = Path(__file__).parent / "data"
REPORT_DIR = Path(__file__).parent / "reports"

SWEEP_THRESHOLDS = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9]


# ---------------------------------------------------------------------------
# Shared helpers
# ---------------------------------------------------------------------------

def _triage_params(args) -> TriageParams:
    spectro = SpectroParams(n_fft=args.n_fft, hop=args.hop, n_mels=args.n_mels,
                            fmin_hz=args.fmin_hz, fmax_hz=args.fmax_hz,
                            db_floor=args.db_floor if args.db_floor > 0 else None)
    spectro.validate(CANONICAL_RATE)
    return TriageParams(window_s=args.window_s, hop_s=args.hop_s, spectro=spectro,
                        min_prominence_ratio=args.min_prominence_ratio,
                        smooth_frames=args.smooth_frames,
                        strict=not getattr(args, "lenient", False), jobs=args.jobs,
                        threshold=getattr(args, "threshold", None))


def _labelled_examples(path: Path) -> list[LabeledExample]:
    rows = read_features_csv(path)
    if not rows:
        raise InvalidInput(f"{path}: no feature rows")
    unlabelled = [win_id for win_id, _, label in rows if label is None]
    if unlabelled:
        raise InvalidInput(f"{path}: {len(unlabelled)} row(s) without a quality label "
                           f"(first: {unlabelled[0]})")
    return [LabeledExample(win_id, feats, label) for win_id, feats, label in rows]


def _write_example_csv(path: Path, examples: list[LabeledExample]) -> Path:
    rows = [[e.id, repr(e.features.avg_peak_prominence), repr(e.features.rms_residual),
             repr(e.features.avg_peak_distance), e.features.n_peaks, e.label]
            for e in examples]
    return write_csv_atomic(path, FEATURE_HEADER, rows)


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def cmd_synth(args) -> None:
    synth_dataset(args.n_good, args.n_bad, args.seed, args.out,
                  duration_s=args.duration_s, jobs=args.jobs)


def cmd_extract(args) -> None:
    params = _triage_params(args)
    entries = read_manifest(args.manifest)
    gait = [e for e in entries if e.class_label == GAIT]
    expected = sum(count_windows(e, params.window_s, params.hop_s) for e in gait)
    print(f"[extract] {len(gait)} Gait entries, {expected} windows expected")
    windows, errors = extract_manifest(entries, args.manifest.parent, params)
    write_features_csv(args.out, windows)
    print(f"[extract] {len(windows)} windows from {len(entries)} entries "
          f"({len(errors)} skipped) -> {args.out}")


def cmd_train(args) -> None:
    examples = _labelled_examples(args.features)
    train_set, test_set = split_train_test(examples, args.test_fraction, args.seed)
    print(f"[train] {len(train_set)} train / {len(test_set)} held-out examples")

    cfg = TrainConfig(n_folds=args.folds, seed=args.seed, ensemble=not args.no_ensemble,
                      time_budget_s=args.budget_s, threshold=args.threshold, jobs=args.jobs)
    model, cv = train(train_set, cfg)
    save_model(model, args.out)
    print(f"[train] model -> {args.out}")

    held_out = evaluate(model, test_set)
    baseline = majority_baseline(train_set, test_set)
    report = {
        "cv": [s.as_dict() for s in cv],
        "held_out": held_out.as_dict(),
        "majority_baseline": baseline.as_dict(),
        "threshold_sweep": threshold_sweep(model, test_set, SWEEP_THRESHOLDS),
        "n_train": len(train_set),
        "n_test": len(test_set),
        "seed": args.seed,
    }
    report_path = args.report or args.out.with_suffix(".report.json")
    write_json_atomic(report_path, report)
    if args.test_out:
        _write_example_csv(args.test_out, test_set)
        print(f"[train] held-out features -> {args.test_out}")

    print(f"[train] held-out macro-F1={held_out.macro['f1']:.3f}  "
          f"{BAD} F1={held_out.f1[BAD]:.3f}  {GOOD} F1={held_out.f1[GOOD]:.3f}  "
          f"(baseline macro-F1={baseline.macro['f1']:.3f})")
    print(f"[train] report -> {report_path}")


def cmd_eval(args) -> None:
    model = load_model(args.model)
    examples = _labelled_examples(args.features)
    metrics = evaluate(model, examples, args.threshold)
    payload = metrics.as_dict()
    payload["threshold"] = model.threshold if args.threshold is None else args.threshold
    if args.sweep:
        payload["threshold_sweep"] = threshold_sweep(model, examples, SWEEP_THRESHOLDS)
    if args.out:
        write_json_atomic(args.out, payload)
        print(f"[eval] metrics -> {args.out}")
    print(confusion_text(metrics))


def cmd_filter(args) -> None:
    params = _triage_params(args)
    model = load_model(args.model)
    entries = read_manifest(args.manifest)
    kept, report = triage_dataset(entries, model, params, base_dir=args.manifest.parent,
                                  features_csv=args.features_out)

    # kept paths are relative to the input manifest; rebase for the output location
    out_dir = args.out.parent.resolve()
    base = args.manifest.parent.resolve()
    rebased = []
    for e in kept:
        p = Path(e.path)
        if not p.is_absolute():
            p = base / p
            try:
                p = p.relative_to(out_dir)
            except ValueError:
                pass
        rebased.append(replace(e, path=p.as_posix()))
    write_manifest(args.out, rebased)

    report_path = args.report or args.out.with_suffix(".report.json")
    write_report(report_path, report)
    print(f"[filter] {len(kept)} windows kept -> {args.out}")
    print(f"[filter] report -> {report_path}")


def cmd_report(args) -> None:
    rows = read_features_csv(args.features)
    out_dir = args.out_dir
    scatter = write_scatter_csv(out_dir / "scatter.csv", rows)
    print(f"[report] scatter -> {scatter}")
    if args.svg:
        svg = write_scatter_svg(out_dir / "scatter.svg", rows)
        if svg:
            print(f"[report] svg -> {svg}")

    if args.window:
        if not args.manifest:
            raise InvalidInput("--window needs --manifest to locate the audio")
        params = _triage_params(args)
        _, clip = find_window(read_manifest(args.manifest), args.manifest.parent,
                              args.window, params)
        safe = args.window.replace("#", "_").replace("/", "_")
        energy = write_energy_csv(out_dir / f"energy_{safe}.csv", clip, params)
        print(f"[report] energy -> {energy}")

    triage_report = None
    if args.triage_report:
        triage_report = json.loads(args.triage_report.read_text(encoding="utf-8"))
    summary = write_summary(rows, str(args.features), triage_report, out_dir)
    print(f"[report] summary -> {summary}")


def cmd_gate(args) -> None:
    clip = load_wav(args.audio)
    if args.rms_threshold is not None:
        rms_threshold = args.rms_threshold
    elif args.background:
        rms_threshold = calibrate_threshold(load_wav(args.background), args.percentile,
                                            args.frame_len)
        print(f"[gate] calibrated threshold {rms_threshold:.5f} "
              f"(p{args.percentile:g} of {args.background})")
    else:
        raise InvalidInput("need --rms-threshold or --background to calibrate one")

    gate = GateConfig(rms_threshold, args.frame_len, args.hang)
    if args.model is None:
        segments = rms_gate(clip, gate)
        write_gate_csv(args.out, clip.source_id, segments)
        print(f"[gate] {len(segments)} open segment(s) -> {args.out}")
        return

    if clip.sample_rate_hz != CANONICAL_RATE:
        raise InvalidInput(f"{args.audio}: {clip.sample_rate_hz} Hz audio, model needs "
                           f"{CANONICAL_RATE} Hz")
    model = load_model(args.model)
    segments, windows = triage_recording(clip, model, _triage_params(args), gate)
    write_gate_csv(args.out, clip.source_id, segments)
    print(f"[gate] {len(segments)} open segment(s) -> {args.out}")
    if windows:
        rows = [[w.window_id, repr(w.entry.start_s), repr(w.entry.end_s), w.label,
                 repr(w.score)] for w in windows]
        decisions = args.out.with_name(args.out.stem + "_decisions.csv")
        write_csv_atomic(decisions, ["id", "start_s", "end_s", "decision", "score"], rows)
        kept = sum(1 for w in windows if w.label == GOOD)
        print(f"[gate] {kept}/{len(windows)} windows GoodGait -> {decisions}")


# ---------------------------------------------------------------------------
# Argument parsing
# ---------------------------------------------------------------------------

def _add_jobs(p, s) -> None:
    p.add_argument("--jobs", type=int, default=s["JOBS"], help="parallel workers")


def _add_feature_flags(p, s) -> None:
    g = p.add_argument_group("windowing / spectrogram / features")
    g.add_argument("--window-s", type=float, default=s["WINDOW_S"])
    g.add_argument("--hop-s", type=float, default=s["HOP_S"])
    g.add_argument("--n-fft", type=int, default=s["N_FFT"])
    g.add_argument("--hop", type=int, default=s["HOP"], help="STFT hop in samples")
    g.add_argument("--n-mels", type=int, default=s["N_MELS"])
    g.add_argument("--fmin-hz", type=float, default=s["FMIN_HZ"])
    g.add_argument("--fmax-hz", type=float, default=s["FMAX_HZ"])
    g.add_argument("--db-floor", type=float, default=s["DB_FLOOR"],
                   help="dB below the frame maximum to clamp at; 0 disables")
    g.add_argument("--min-prominence-ratio", type=float, default=s["MIN_PROMINENCE_RATIO"])
    g.add_argument("--smooth-frames", type=int, default=s["SMOOTH_FRAMES"],
                   help="moving-average width applied to E before peak finding; 0 = off")


def build_parser(settings: dict) -> argparse.ArgumentParser:
    s = settings
    fmt = argparse.ArgumentDefaultsHelpFormatter
    parser = argparse.ArgumentParser(description="Acoustic gait triage pipeline",
                                     formatter_class=fmt)
    parser.add_argument("--config", type=Path, default=None,
                        help="key=value file overriding environment defaults")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="write a labelled synthetic dataset", formatter_class=fmt)
    p.add_argument("--out", type=Path, default=DATA_DIR / "synth")
    p.add_argument("--n-good", type=int, default=200)
    p.add_argument("--n-bad", type=int, default=200)
    p.add_argument("--seed", type=int, default=s["SEED"])
    p.add_argument("--duration-s", type=float, default=3.0)
    _add_jobs(p, s)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("extract", help="manifest -> feature CSV", formatter_class=fmt)
    p.add_argument("manifest", type=Path)
    p.add_argument("--out", type=Path, default=DATA_DIR / "features.csv")
    p.add_argument("--lenient", action="store_true",
                   help="skip unreadable entries instead of aborting")
    _add_feature_flags(p, s)
    _add_jobs(p, s)
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("train", help="feature CSV -> model", formatter_class=fmt)
    p.add_argument("features", type=Path)
    p.add_argument("--out", type=Path, default=DATA_DIR / "model.json")
    p.add_argument("--folds", type=int, default=s["FOLDS"])
    p.add_argument("--seed", type=int, default=s["SEED"])
    p.add_argument("--budget-s", type=float, default=s["BUDGET_S"])
    p.add_argument("--test-fraction", type=float, default=s["TEST_FRACTION"])
    p.add_argument("--no-ensemble", action="store_true",
                   help="keep only the best candidate")
    p.add_argument("--threshold", type=float, default=s["THRESHOLD"])
    p.add_argument("--report", type=Path, default=None,
                   help="CV report JSON (default: <out>.report.json)")
    p.add_argument("--test-out", type=Path, default=None,
                   help="write the held-out split as a feature CSV")
    _add_jobs(p, s)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="model + feature CSV -> metrics", formatter_class=fmt)
    p.add_argument("model", type=Path)
    p.add_argument("features", type=Path)
    p.add_argument("--out", type=Path, default=None, help="metrics JSON")
    p.add_argument("--threshold", type=float, default=None,
                   help="override the model's decision threshold")
    p.add_argument("--sweep", action="store_true", help="add a threshold sweep to the JSON")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("filter", help="drop BadGait windows from a manifest",
                       formatter_class=fmt)
    p.add_argument("manifest", type=Path)
    p.add_argument("model", type=Path)
    p.add_argument("--out", type=Path, default=DATA_DIR / "filtered_manifest.csv")
    p.add_argument("--report", type=Path, default=None,
                   help="triage report JSON (default: <out>.report.json)")
    p.add_argument("--features-out", type=Path, default=None,
                   help="also write the scored windows' features here")
    p.add_argument("--threshold", type=float, default=None)
    p.add_argument("--lenient", action="store_true")
    _add_feature_flags(p, s)
    _add_jobs(p, s)
    p.set_defaults(func=cmd_filter)

    p = sub.add_parser("report", help="scatter / energy / summary artifacts",
                       formatter_class=fmt)
    p.add_argument("features", type=Path)
    p.add_argument("--out-dir", type=Path, default=REPORT_DIR)
    p.add_argument("--svg", action="store_true", help="also write scatter.svg")
    p.add_argument("--manifest", type=Path, default=None)
    p.add_argument("--window", type=str, default=None,
                   help="window id whose energy signal to export")
    p.add_argument("--triage-report", type=Path, default=None,
                   help="triage report JSON to summarise alongside the features")
    _add_feature_flags(p, s)
    _add_jobs(p, s)
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("gate", help="RMS-gate a raw recording", formatter_class=fmt)
    p.add_argument("audio", type=Path)
    p.add_argument("--out", type=Path, default=DATA_DIR / "gate.csv")
    p.add_argument("--rms-threshold", type=float, default=None)
    p.add_argument("--background", type=Path, default=None,
                   help="background recording to calibrate the threshold from")
    p.add_argument("--percentile", type=float, default=95.0)
    p.add_argument("--frame-len", type=int, default=1600)
    p.add_argument("--hang", type=int, default=5, help="hang time in frames")
    p.add_argument("--model", type=Path, default=None,
                   help="also classify each gated window")
    p.add_argument("--threshold", type=float, default=None)
    _add_feature_flags(p, s)
    _add_jobs(p, s)
    p.set_defaults(func=cmd_gate)

    return parser


def main(argv: list[str] | None = None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    # --config has to be known before the parser is built: it feeds the defaults
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config", type=Path, default=None)
    known, _ = pre.parse_known_args(argv)

    try:
        settings = load_settings(known.config)
        args = build_parser(settings).parse_args(argv)
        args.func(args)
    except TriageError as e:
        print(f"error\t{type(e).__name__}\t{e}", file=sys.stderr)
        return 1
    except OSError as e:
        print(f"error\tIOError\t{e}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
