"""
features.py — the three triage parameters

From one window's energy signal E:

  1. avg_peak_prominence   clean gait has tall, isolated footstep peaks
  2. rms_residual          r = sum_i (E(i) - RMS(E))^2, exactly as written:
                           RMS centre (not the mean), sum (not the mean)
  3. avg_peak_distance     footsteps come in rhythm, in frames

Degenerate windows get sentinels so the vector is always complete:
no peaks -> prominence 0, fewer than two peaks -> distance = n_frames.

The peak threshold is relative: ratio * (max(E) - min(E)), so it follows
the window's own dynamic range instead of an absolute level.
"""

import math
from dataclasses import dataclass

import numpy as np

from errors import EmptyInput, InvalidInput
from peaks import Peak, find_peaks, peak_distances, smooth
from spectro import EnergySignal, MelSpectrogram, energy_signal

DEFAULT_MIN_PROMINENCE_RATIO = 0.05

FEATURE_NAMES = ("avg_peak_prominence", "rms_residual", "avg_peak_distance")


@dataclass(frozen=True)
class GaitFeatures:
    avg_peak_prominence: float
    rms_residual: float
    avg_peak_distance: float
    n_peaks: int = 0  # diagnostic only, never fed to the classifier

    def as_vector(self) -> np.ndarray:
        return np.array([self.avg_peak_prominence, self.rms_residual,
                         self.avg_peak_distance], dtype=np.float64)

    def is_finite(self) -> bool:
        return all(math.isfinite(v) for v in
                   (self.avg_peak_prominence, self.rms_residual, self.avg_peak_distance))


def _values(E: EnergySignal | np.ndarray) -> np.ndarray:
    return np.asarray(E.values if isinstance(E, EnergySignal) else E, dtype=np.float64)


def relative_threshold(E: EnergySignal | np.ndarray, ratio: float) -> float:
    if ratio < 0:
        raise InvalidInput(f"min_prominence_ratio must be >= 0, got {ratio}")
    v = _values(E)
    return float(ratio * (v.max() - v.min()))


def avg_peak_prominence(E: EnergySignal | np.ndarray, min_prominence: float) -> float:
    found = find_peaks(_values(E), min_prominence)
    if not found:
        return 0.0
    return float(np.mean([p.prominence for p in found]))


def rms_residual(E: EnergySignal | np.ndarray) -> float:
    v = _values(E)
    if v.size == 0:
        raise EmptyInput("energy signal is empty")
    rms = np.sqrt(np.mean(v ** 2))
    return float(np.sum((v - rms) ** 2))


def avg_peak_distance(E: EnergySignal | np.ndarray, min_prominence: float) -> float:
    v = _values(E)
    gaps = peak_distances(find_peaks(v, min_prominence))
    if not gaps:
        return float(v.size)
    return float(np.mean(gaps))


def features_from_energy(E: EnergySignal | np.ndarray,
                         min_prominence_ratio: float = DEFAULT_MIN_PROMINENCE_RATIO,
                         smooth_frames: int = 0) -> tuple[GaitFeatures, list[Peak]]:
    """
    Features plus the peaks they were measured on (the report plots those).
    Smoothing only feeds peak finding; the residual is always taken on raw E.
    """
    raw = _values(E)
    if raw.size < 2:
        raise EmptyInput(f"need at least 2 frames, got {raw.size}")
    v = smooth(raw, smooth_frames) if smooth_frames > 1 else raw

    min_prom = relative_threshold(v, min_prominence_ratio)
    found = find_peaks(v, min_prom)
    feats = GaitFeatures(
        avg_peak_prominence=avg_peak_prominence(v, min_prom),
        rms_residual=rms_residual(raw),
        avg_peak_distance=avg_peak_distance(v, min_prom),
        n_peaks=len(found),
    )
    return feats, found


def extract_features(mel: MelSpectrogram,
                     min_prominence_ratio: float = DEFAULT_MIN_PROMINENCE_RATIO,
                     smooth_frames: int = 0) -> GaitFeatures:
    feats, _ = features_from_energy(energy_signal(mel), min_prominence_ratio, smooth_frames)
    return feats
