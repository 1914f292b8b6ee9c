"""
peaks.py — local maxima + topographic prominence on 1-D signals

Candidate peaks: strictly higher than both neighbours; a flat top higher
than both flanks counts once, at its middle (left-middle when the plateau
has even length). Endpoints never qualify.

Prominence of a peak at height h: walk left until a value > h or the
signal start, take the minimum on the way; same to the right; prominence
is h minus the higher of the two minima.

scipy.signal implements exactly these rules, so we use it and only add
validation and the Peak record on top.
"""

from dataclasses import dataclass

import numpy as np
from scipy.ndimage import uniform_filter1d
from scipy.signal import find_peaks as _scipy_find_peaks
from scipy.signal import peak_prominences

from errors import InvalidInput


@dataclass(frozen=True)
class Peak:
    index: int
    height: float
    prominence: float


def _as_signal(signal) -> np.ndarray:
    x = np.asarray(signal, dtype=np.float64)
    if x.ndim != 1 or x.size == 0:
        raise InvalidInput("signal must be a non-empty 1-D sequence")
    if not np.all(np.isfinite(x)):
        raise InvalidInput("signal contains NaN or Inf")
    return x


def find_peaks(signal, min_prominence: float = 0.0) -> list[Peak]:
    """Peaks with prominence >= min_prominence, sorted by index."""
    if min_prominence < 0:
        raise InvalidInput(f"min_prominence must be >= 0, got {min_prominence}")
    x = _as_signal(signal)
    idx, props = _scipy_find_peaks(x, prominence=float(min_prominence))
    return [Peak(index=int(i), height=float(x[i]), prominence=float(p))
            for i, p in zip(idx, props["prominences"])]


def prominence(signal, peak_index: int) -> float:
    x = _as_signal(signal)
    candidates, _ = _scipy_find_peaks(x)
    if peak_index not in set(candidates.tolist()):
        raise InvalidInput(f"index {peak_index} is not a peak of the signal")
    proms, _, _ = peak_prominences(x, [peak_index])
    return float(proms[0])


def peak_distances(peaks: list[Peak]) -> list[int]:
    """Gaps between consecutive peaks, in samples/frames."""
    return [b.index - a.index for a, b in zip(peaks, peaks[1:])]


def smooth(signal, width: int) -> np.ndarray:
    """Moving average over `width` points; width <= 1 returns the signal as-is."""
    x = _as_signal(signal)
    if width <= 1:
        return x
    return uniform_filter1d(x, size=width, mode="nearest")
