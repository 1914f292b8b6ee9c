"""
triage.py — apply the trained filter to a whole dataset

manifest -> windows -> melspectrogram -> features -> model -> keep/remove

Only Gait windows are scored: the model never saw NonGait audio during
training, so NonGait windows pass through untouched. The filtered
manifest lists every kept window; an entry that fits in a single window
keeps its own id and span, so a window-level manifest comes back
unchanged when nothing is removed, and filtering twice removes nothing
new.

Manifest files are CSV or JSON-lines (chosen by extension), UTF-8, with
the columns in MANIFEST_FIELDS. Relative audio paths resolve against the
manifest's own directory.
"""

import csv
import io
import json
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np
import soundfile as sf
from joblib import Parallel, delayed

import audio_io
from audio_io import CANONICAL_RATE, AudioClip, GateConfig, load_wav, rms_gate
from classifier import (BAD, GOOD, Metrics, TriageModel, metrics_from_labels, model_to_dict,
                        predict_batch)
from errors import InvalidInput, ManifestError, ParseError, TriageError
from features import DEFAULT_MIN_PROMINENCE_RATIO, GaitFeatures, extract_features
from spectro import SpectroParams, melspectrogram_db
from storage import log_failure, write_csv_atomic, write_json_atomic, write_text_atomic

GAIT = "Gait"
NON_GAIT = "NonGait"
CLASS_LABELS = (GAIT, NON_GAIT)
QUALITY_LABELS = (GOOD, BAD)

MANIFEST_FIELDS = ["id", "path", "start_s", "end_s", "class_label", "quality_label"]

MIN_SEGMENT_S = 1.0

# Reported downstream gain after filtering (detector F1 0.58 -> 0.83). The
# detector itself is not part of this toolkit; the value rides along as an
# annotation in effectiveness tables, never as a computed result.
REFERENCE_F1_GAIN = 0.25


@dataclass(frozen=True)
class ManifestEntry:
    id: str
    path: str
    start_s: float
    end_s: float
    class_label: str
    quality_label: str | None = None

    def __post_init__(self):
        if not 0 <= self.start_s < self.end_s:
            raise InvalidInput(f"entry '{self.id}': need 0 <= start_s < end_s "
                               f"(got {self.start_s}, {self.end_s})")
        if self.class_label not in CLASS_LABELS:
            raise InvalidInput(f"entry '{self.id}': class_label must be one of "
                               f"{CLASS_LABELS}, got {self.class_label!r}")
        if self.quality_label not in (None, *QUALITY_LABELS):
            raise InvalidInput(f"entry '{self.id}': quality_label must be empty or one of "
                               f"{QUALITY_LABELS}, got {self.quality_label!r}")


@dataclass
class TriageParams:
    window_s: float = 3.0
    hop_s: float = 1.5
    spectro: SpectroParams = field(default_factory=SpectroParams)
    min_prominence_ratio: float = DEFAULT_MIN_PROMINENCE_RATIO
    smooth_frames: int = 0
    strict: bool = True
    jobs: int = 1
    threshold: float | None = None


@dataclass
class WindowResult:
    window_id: str
    entry: ManifestEntry            # the window as a manifest row
    features: GaitFeatures | None = None
    label: str | None = None        # filter decision, Gait windows only
    score: float | None = None


@dataclass
class TriageReport:
    counts: dict[str, dict[str, int]]
    decisions: list[dict]
    errors: list[dict]
    model: dict
    features_csv: str | None = None
    agreement: dict | None = None

    def as_dict(self) -> dict:
        return asdict(self)


# --- Manifest I/O ------------------------------------------------------------------

def _entry_from_row(row: dict, where: str) -> ManifestEntry:
    try:
        quality = (row.get("quality_label") or "").strip() or None
        return ManifestEntry(id=str(row["id"]).strip(), path=str(row["path"]).strip(),
                             start_s=float(row["start_s"]), end_s=float(row["end_s"]),
                             class_label=str(row["class_label"]).strip(),
                             quality_label=quality)
    except (KeyError, TypeError, ValueError) as e:
        raise ParseError(f"{where}: malformed manifest row ({e})")


def read_manifest(path: Path | str) -> list[ManifestEntry]:
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    if path.suffix in (".jsonl", ".json"):
        rows = []
        for n, line in enumerate(text.splitlines(), 1):
            if line.strip():
                try:
                    rows.append((f"{path}:{n}", json.loads(line)))
                except json.JSONDecodeError as e:
                    raise ParseError(f"{path}:{n}: bad JSON line ({e})")
    else:
        reader = csv.DictReader(io.StringIO(text))
        missing = set(MANIFEST_FIELDS[:5]) - set(reader.fieldnames or [])
        if missing:
            raise ParseError(f"{path}: manifest header lacks {sorted(missing)}")
        rows = [(f"{path}:{n}", row) for n, row in enumerate(reader, 2)]

    entries = [_entry_from_row(row, where) for where, row in rows]
    seen: set[str] = set()
    for e in entries:
        if e.id in seen:
            raise ParseError(f"{path}: duplicate entry id '{e.id}'")
        seen.add(e.id)
    return entries


def write_manifest(path: Path | str, entries: list[ManifestEntry]) -> Path:
    path = Path(path)
    if path.suffix in (".jsonl", ".json"):
        text = "".join(json.dumps(asdict(e), sort_keys=True) + "\n" for e in entries)
        return write_text_atomic(path, text)
    rows = [[e.id, e.path, e.start_s, e.end_s, e.class_label, e.quality_label or ""]
            for e in entries]
    return write_csv_atomic(path, MANIFEST_FIELDS, rows)


def resolve_path(entry: ManifestEntry, base_dir: Path) -> Path:
    p = Path(entry.path)
    return p if p.is_absolute() else base_dir / p


# --- Windowing ----------------------------------------------------------------------

def _window_starts(span: int, window: int, hop: int) -> list[int]:
    if span <= window:
        return [0]
    return [k * hop for k in range((span - window) // hop + 1)]


def window_segment(clip: AudioClip, entry: ManifestEntry, window_s: float = 3.0,
                   hop_s: float = 1.5) -> list[tuple[ManifestEntry, AudioClip]]:
    """
    Fixed-length windows over the entry's span. Segments shorter than a
    window (but at least MIN_SEGMENT_S long) give one window zero-padded at
    the tail. Returns (window entry, window clip) pairs; the window entry's
    id is the window id.
    """
    rate = clip.sample_rate_hz
    start = int(round(entry.start_s * rate))
    end = int(round(entry.end_s * rate))
    window = int(round(window_s * rate))
    hop = int(round(hop_s * rate))
    if window < 1 or hop < 1:
        raise InvalidInput("window_s and hop_s must cover at least one sample")
    if start < 0 or end > len(clip) or end <= start:
        raise InvalidInput(f"entry '{entry.id}': span {entry.start_s}-{entry.end_s}s "
                           f"outside clip of {clip.duration_s:.3f}s")
    span = end - start
    if span < window and span < int(round(MIN_SEGMENT_S * rate)):
        raise InvalidInput(f"entry '{entry.id}': segment of {span / rate:.3f}s is shorter "
                           f"than {MIN_SEGMENT_S}s")

    starts = _window_starts(span, window, hop)
    out = []
    for k, offset in enumerate(starts):
        seg = np.zeros(window)
        take = clip.samples[start + offset:min(end, start + offset + window)]
        seg[:take.size] = take
        if len(starts) == 1:
            win_entry = entry
        else:
            s = start + offset
            win_entry = replace(entry, id=f"{entry.id}#w{k:03d}",
                                start_s=s / rate, end_s=(s + window) / rate)
        out.append((win_entry, AudioClip(seg, rate, win_entry.id)))
    return out


def count_windows(entry: ManifestEntry, window_s: float, hop_s: float,
                  rate: int = CANONICAL_RATE) -> int:
    span = int(round(entry.end_s * rate)) - int(round(entry.start_s * rate))
    return len(_window_starts(span, int(round(window_s * rate)), int(round(hop_s * rate))))


# --- Per-entry processing ---------------------------------------------------------

def load_entry_clip(entry: ManifestEntry, base_dir: Path) -> AudioClip:
    path = resolve_path(entry, base_dir)
    if not path.exists():
        raise ManifestError(entry.id, f"audio file not found: {path}")
    try:
        return load_wav(path, require_rate=CANONICAL_RATE)
    except TriageError as e:
        raise ManifestError(entry.id, str(e))


def window_features(entry: ManifestEntry, base_dir: Path,
                    params: TriageParams) -> list[WindowResult]:
    """Windows of one entry with features. Raises ManifestError naming the entry."""
    clip = load_entry_clip(entry, base_dir)
    try:
        results = []
        for win_entry, win_clip in window_segment(clip, entry, params.window_s, params.hop_s):
            mel = melspectrogram_db(win_clip, params.spectro)
            feats = extract_features(mel, params.min_prominence_ratio, params.smooth_frames)
            results.append(WindowResult(win_entry.id, win_entry, feats))
        return results
    except TriageError as e:
        raise ManifestError(entry.id, str(e))


def _passthrough_windows(entry: ManifestEntry, base_dir: Path,
                         params: TriageParams) -> list[WindowResult]:
    """NonGait: windows are listed but never decoded beyond the header."""
    path = resolve_path(entry, base_dir)
    if not path.exists():
        raise ManifestError(entry.id, f"audio file not found: {path}")
    try:
        info = sf.info(str(path))
    except (RuntimeError, sf.SoundFileError) as e:
        raise ManifestError(entry.id, f"cannot read header: {e}")
    silent = AudioClip(np.zeros(info.frames), int(info.samplerate), entry.id)
    try:
        windows = window_segment(silent, entry, params.window_s, params.hop_s)
    except TriageError as e:
        raise ManifestError(entry.id, str(e))
    return [WindowResult(w.id, w) for w, _ in windows]


def _process_entry(entry: ManifestEntry, base_dir: Path,
                   params: TriageParams) -> tuple[list[WindowResult], dict | None]:
    try:
        if entry.class_label == GAIT:
            return window_features(entry, base_dir, params), None
        return _passthrough_windows(entry, base_dir, params), None
    except ManifestError as e:
        if params.strict:
            raise
        return [], {"entry_id": e.entry_id, "error": str(e)}


def extract_manifest(entries: list[ManifestEntry], base_dir: Path,
                     params: TriageParams) -> tuple[list[WindowResult], list[dict]]:
    """Features for every Gait window, in manifest order."""
    gait = [e for e in entries if e.class_label == GAIT]
    results = Parallel(n_jobs=params.jobs)(
        delayed(_process_entry)(e, base_dir, params) for e in gait)
    windows, errors = [], []
    for wins, err in results:
        windows.extend(wins)
        if err:
            errors.append(err)
            log_failure("extract", err["error"])
    return windows, errors


FEATURE_HEADER = ["id", "prominence", "residual", "distance", "n_peaks", "label"]


def write_features_csv(path: Path | str, windows: list[WindowResult]) -> Path:
    rows = [[w.window_id, repr(w.features.avg_peak_prominence), repr(w.features.rms_residual),
             repr(w.features.avg_peak_distance), w.features.n_peaks,
             w.entry.quality_label or ""]
            for w in windows if w.features is not None]
    return write_csv_atomic(path, FEATURE_HEADER, rows)


def read_features_csv(path: Path | str) -> list[tuple[str, GaitFeatures, str | None]]:
    path = Path(path)
    reader = csv.DictReader(io.StringIO(path.read_text(encoding="utf-8")))
    missing = set(FEATURE_HEADER) - set(reader.fieldnames or [])
    if missing:
        raise ParseError(f"{path}: feature CSV header lacks {sorted(missing)}")
    rows = []
    for n, row in enumerate(reader, 2):
        try:
            feats = GaitFeatures(float(row["prominence"]), float(row["residual"]),
                                 float(row["distance"]), int(row["n_peaks"]))
        except (TypeError, ValueError) as e:
            raise ParseError(f"{path}:{n}: bad feature row ({e})")
        rows.append((row["id"], feats, (row["label"] or "").strip() or None))
    return rows


# --- Dataset triage ------------------------------------------------------------------

def triage_dataset(entries: list[ManifestEntry], model: TriageModel, params: TriageParams,
                   base_dir: Path | str = ".", features_csv: Path | str | None = None,
                   ) -> tuple[list[ManifestEntry], TriageReport]:
    """
    Drop Gait windows the model calls BadGait; keep everything else. With
    features_csv, the scored windows' features are written there too.
    """
    base_dir = Path(base_dir)
    results = Parallel(n_jobs=params.jobs)(
        delayed(_process_entry)(e, base_dir, params) for e in entries)

    windows: list[WindowResult] = []
    errors: list[dict] = []
    for wins, err in results:
        windows.extend(wins)
        if err:
            errors.append(err)
            log_failure("triage", err["error"])

    gait = [w for w in windows if w.entry.class_label == GAIT]
    for w, (label, score) in zip(gait, predict_batch(model, [w.features for w in gait],
                                                     params.threshold)):
        w.label, w.score = label, score

    kept = [w for w in windows if w.entry.class_label == NON_GAIT or w.label == GOOD]
    counts = {}
    for cls in CLASS_LABELS:
        n_in = sum(1 for w in windows if w.entry.class_label == cls)
        n_kept = sum(1 for w in kept if w.entry.class_label == cls)
        counts[cls] = {"in": n_in, "kept": n_kept, "removed": n_in - n_kept}

    decisions = [{"window_id": w.window_id, "class_label": w.entry.class_label,
                  "decision": "kept" if (w.entry.class_label == NON_GAIT or w.label == GOOD)
                  else "removed",
                  "predicted": w.label, "score": w.score}
                 for w in windows]

    agreement = None
    annotated = [w for w in gait if w.entry.quality_label]
    if annotated:
        m = metrics_from_labels([w.entry.quality_label for w in annotated],
                                [w.label for w in annotated])
        agreement = m.as_dict()

    model_doc = model_to_dict(model)
    report = TriageReport(
        counts=counts, decisions=decisions, errors=errors,
        model={"members": [m["candidate"] for m in model_doc["members"]],
               "threshold": model.threshold if params.threshold is None else params.threshold,
               "metadata": {k: v for k, v in model.metadata.items() if k != "cv_report"}},
        agreement=agreement)
    if features_csv is not None:
        report.features_csv = str(write_features_csv(features_csv, gait))

    for cls in CLASS_LABELS:
        c = counts[cls]
        print(f"[triage] {cls:<8} in={c['in']:<6} kept={c['kept']:<6} removed={c['removed']}")
    return [w.entry for w in kept], report


# --- At-source triage ---------------------------------------------------------------

def triage_recording(clip: AudioClip, model: TriageModel | None, params: TriageParams,
                     gate: GateConfig) -> tuple[list[audio_io.GateSegment], list[WindowResult]]:
    """
    Device-side flow: gate the raw recording, window every open span and
    (with a model) decide per window. Spans shorter than MIN_SEGMENT_S are
    ignored.
    """
    segments = rms_gate(clip, gate)
    rate = clip.sample_rate_hz
    windows: list[WindowResult] = []
    for n, seg in enumerate(segments):
        if seg.length < MIN_SEGMENT_S * rate:
            continue
        entry = ManifestEntry(id=f"{clip.source_id}#g{n:03d}", path=clip.source_id,
                              start_s=seg.start_sample / rate, end_s=seg.end_sample / rate,
                              class_label=GAIT)
        for win_entry, win_clip in window_segment(clip, entry, params.window_s, params.hop_s):
            mel = melspectrogram_db(win_clip, params.spectro)
            feats = extract_features(mel, params.min_prominence_ratio, params.smooth_frames)
            windows.append(WindowResult(win_entry.id, win_entry, feats))

    if model is not None and windows:
        for w, (label, score) in zip(windows, predict_batch(model, [w.features for w in windows],
                                                            params.threshold)):
            w.label, w.score = label, score
    return segments, windows


# --- Effectiveness ------------------------------------------------------------------

def filter_effectiveness(before: Metrics, after: Metrics) -> dict:
    """Per-class and macro deltas (after - before) for precision, recall, F1."""
    if tuple(before.classes) != tuple(after.classes):
        raise InvalidInput(f"class sets differ: {before.classes} vs {after.classes}")
    rows = []
    for cls in before.classes:
        for metric in ("precision", "recall", "f1"):
            b = getattr(before, metric)[cls]
            a = getattr(after, metric)[cls]
            rows.append({"scope": cls, "metric": metric, "before": b, "after": a,
                         "delta": a - b})
    for metric in ("precision", "recall", "f1"):
        b, a = before.macro[metric], after.macro[metric]
        rows.append({"scope": "macro", "metric": metric, "before": b, "after": a,
                     "delta": a - b})
    return {"rows": rows,
            "reference": {"downstream_detector_f1_gain": REFERENCE_F1_GAIN,
                          "note": "reported for the downstream detector; not computed here"}}


def write_report(path: Path | str, report: TriageReport) -> Path:
    return write_json_atomic(path, report.as_dict())
