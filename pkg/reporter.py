"""
reporter.py — separability and energy-plot artifacts

Reads a feature CSV (from `pipeline.py extract`) and writes:
  1. scatter CSV     the three features per window, grouped by label
  2. scatter SVG     optional 3-D plot of the same points (matplotlib)
  3. energy CSV      per-frame E(i) of one named window, peaks marked
  4. summary         markdown under reports/summary_YYYY-MM-DD.md

The CSVs are the data; the SVG is a convenience. If plotting fails the
failure is logged and every CSV is still written.

Usage:
  python reporter.py data/features.csv       # scatter CSV + summary
"""

import argparse
from datetime import date
from pathlib import Path

import numpy as np

from errors import EmptyInput, InvalidInput
from features import FEATURE_NAMES, GaitFeatures, features_from_energy
from spectro import energy_signal, melspectrogram_db
from storage import log_failure, write_csv_atomic, write_text_atomic
from triage import (ManifestEntry, TriageParams, load_entry_clip, read_features_csv,
                    window_segment)

REPORT_DIR = Path(__file__).parent / "reports"

UNLABELLED = "unlabelled"

SCATTER_HEADER = ["label", "id", *FEATURE_NAMES]
ENERGY_HEADER = ["frame", "time_s", "energy", "is_peak", "prominence"]

# Label colours for the scatter plot; anything else is grey.
_COLOURS = {"GoodGait": "tab:green", "BadGait": "tab:red"}


FeatureRow = tuple[str, GaitFeatures, str | None]


# ---------------------------------------------------------------------------
# Scatter data
# ---------------------------------------------------------------------------

def group_by_label(rows: list[FeatureRow]) -> dict[str, list[FeatureRow]]:
    """Label -> rows, labels sorted, rows in input order."""
    if not rows:
        raise EmptyInput("no feature rows to report")
    groups: dict[str, list[FeatureRow]] = {}
    for row in rows:
        groups.setdefault(row[2] or UNLABELLED, []).append(row)
    return dict(sorted(groups.items()))


def write_scatter_csv(path: Path | str, rows: list[FeatureRow]) -> Path:
    out = []
    for label, group in group_by_label(rows).items():
        for win_id, feats, _ in group:
            out.append([label, win_id, *(repr(v) for v in feats.as_vector().tolist())])
    return write_csv_atomic(path, SCATTER_HEADER, out)


def write_scatter_svg(path: Path | str, rows: list[FeatureRow]) -> Path | None:
    """3-D scatter, one colour per label. Returns None (and logs) if plotting fails."""
    groups = group_by_label(rows)
    try:
        import matplotlib
        matplotlib.use("Agg")
        import matplotlib.pyplot as plt

        fig = plt.figure(figsize=(7, 6))
        ax = fig.add_subplot(projection="3d")
        for label, group in groups.items():
            pts = np.array([f.as_vector() for _, f, _ in group])
            ax.scatter(pts[:, 0], pts[:, 1], pts[:, 2], s=10, label=label,
                       color=_COLOURS.get(label, "tab:gray"))
        ax.set_xlabel("avg peak prominence")
        ax.set_ylabel("rms residual")
        ax.set_zlabel("avg peak distance (frames)")
        ax.legend()
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        # fixed hash salt + no date metadata keep reruns byte-identical
        matplotlib.rcParams["svg.hashsalt"] = "gait-triage"
        fig.savefig(path, format="svg", metadata={"Date": None})
        plt.close(fig)
        return path
    except Exception as exc:
        log_failure("report", f"SVG scatter failed ({exc}); CSV data still written")
        return None


# ---------------------------------------------------------------------------
# Energy plot data
# ---------------------------------------------------------------------------

def find_window(entries: list[ManifestEntry], base_dir: Path, window_id: str,
                params: TriageParams):
    """
    (window entry, window clip) for a window id from the feature CSV. An
    exact entry id wins: in a filtered manifest a single-window entry keeps
    an id like `x#w003` as its own.
    """
    ids = {e.id for e in entries}
    entry_id = window_id if window_id in ids else window_id.rsplit("#w", 1)[0]
    for entry in entries:
        if entry.id != entry_id:
            continue
        clip = load_entry_clip(entry, base_dir)
        for win_entry, win_clip in window_segment(clip, entry, params.window_s, params.hop_s):
            if win_entry.id == window_id:
                return win_entry, win_clip
    raise InvalidInput(f"window '{window_id}' not found in manifest")


def energy_rows(clip, params: TriageParams) -> list[list]:
    mel = melspectrogram_db(clip, params.spectro)
    E = energy_signal(mel)
    _, found = features_from_energy(E, params.min_prominence_ratio, params.smooth_frames)
    prom = {p.index: p.prominence for p in found}
    return [[i, repr(i * E.frame_period_s), repr(float(v)), int(i in prom),
             repr(prom[i]) if i in prom else ""]
            for i, v in enumerate(E.values)]


def write_energy_csv(path: Path | str, clip, params: TriageParams) -> Path:
    return write_csv_atomic(path, ENERGY_HEADER, energy_rows(clip, params))


# ---------------------------------------------------------------------------
# Markdown summary
# ---------------------------------------------------------------------------

def _means_section(groups: dict[str, list[FeatureRow]]) -> str:
    lines = [
        "## Feature means by label",
        "",
        "| Label | Windows | Prominence | Residual | Distance (frames) | Peaks |",
        "|-------|---------|------------|----------|-------------------|-------|",
    ]
    for label, group in groups.items():
        m = np.mean([f.as_vector() for _, f, _ in group], axis=0)
        peaks = np.mean([f.n_peaks for _, f, _ in group])
        lines.append(f"| {label} | {len(group)} | {m[0]:.2f} | {m[1]:.4g} "
                     f"| {m[2]:.1f} | {peaks:.1f} |")
    lines.append("")
    return "\n".join(lines)


def _triage_section(triage_report: dict) -> str:
    lines = ["## Filter counts", "", "| Class | In | Kept | Removed |",
             "|-------|----|------|---------|"]
    for cls, c in triage_report.get("counts", {}).items():
        lines.append(f"| {cls} | {c['in']} | {c['kept']} | {c['removed']} |")
    lines.append("")
    errors = triage_report.get("errors") or []
    if errors:
        lines.append(f"Skipped entries: {', '.join(e['entry_id'] for e in errors)}")
        lines.append("")
    agreement = triage_report.get("agreement")
    if agreement:
        lines.append(f"Agreement with human labels: macro-F1 "
                     f"{agreement['macro']['f1']:.2f}, accuracy {agreement['accuracy']:.2f}")
        lines.append("")
    return "\n".join(lines)


def generate_summary(rows: list[FeatureRow], source: str,
                     triage_report: dict | None = None) -> str:
    groups = group_by_label(rows)
    parts = [
        f"# Gait Triage Summary — {date.today().isoformat()}",
        "",
        f"*Source: {source} · {len(rows)} windows · {len(groups)} label group(s)*",
        "",
        "---",
        "",
        _means_section(groups),
    ]
    if triage_report:
        parts += ["---", "", _triage_section(triage_report)]
    return "\n".join(parts)


def write_summary(rows: list[FeatureRow], source: str, triage_report: dict | None = None,
                  out_dir: Path | str = REPORT_DIR) -> Path:
    out_path = Path(out_dir) / f"summary_{date.today().isoformat()}.md"
    return write_text_atomic(out_path, generate_summary(rows, source, triage_report))


def main() -> None:
    parser = argparse.ArgumentParser(description="Scatter CSV + markdown summary from a feature CSV")
    parser.add_argument("features", type=Path, help="feature CSV from `pipeline.py extract`")
    args = parser.parse_args()

    rows = read_features_csv(args.features)
    scatter = write_scatter_csv(REPORT_DIR / "scatter.csv", rows)
    summary = write_summary(rows, str(args.features))
    print(f"[report] scatter -> {scatter}")
    print(f"[report] summary -> {summary}")


if __name__ == "__main__":
    main()
