import time

import numpy as np
import pytest

from errors import InvalidInput
from peaks import Peak, find_peaks, peak_distances, prominence, smooth


def _brute_force(x: list[float]) -> list[tuple[int, float]]:
    """Candidates and prominences straight from the definition."""
    n = len(x)
    out = []
    i = 1
    while i < n - 1:
        if x[i - 1] < x[i]:
            j = i
            while j + 1 < n and x[j + 1] == x[i]:
                j += 1
            if j + 1 < n and x[j + 1] < x[i]:
                peak = (i + j) // 2
                h = x[peak]
                left_min = h
                k = peak
                while k >= 0 and x[k] <= h:
                    left_min = min(left_min, x[k])
                    k -= 1
                right_min = h
                k = peak
                while k < n and x[k] <= h:
                    right_min = min(right_min, x[k])
                    k += 1
                out.append((peak, h - max(left_min, right_min)))
            i = j + 1
        else:
            i += 1
    return out


def test_matches_brute_force_on_random_signals():
    rng = np.random.default_rng(1234)
    start = time.monotonic()
    for _ in range(1000):
        x = rng.integers(0, 21, int(rng.integers(1, 257))).astype(float).tolist()
        got = [(p.index, p.prominence) for p in find_peaks(x)]
        assert got == _brute_force(x)
    assert time.monotonic() - start < 5.0


def test_adding_a_constant_changes_nothing():
    rng = np.random.default_rng(77)
    for _ in range(300):
        x = rng.integers(0, 21, int(rng.integers(3, 129))).astype(float)
        base = [(p.index, p.prominence) for p in find_peaks(x)]
        for c in (-12.0, 3.5, 1000.25):
            assert [(p.index, p.prominence) for p in find_peaks(x + c)] == base


def test_higher_min_prominence_only_removes_peaks():
    rng = np.random.default_rng(78)
    for _ in range(300):
        x = rng.integers(0, 21, int(rng.integers(3, 129))).astype(float)
        previous = None
        for t in (0.0, 1.0, 2.5, 5.0, 10.0, 20.0):
            found = {p.index for p in find_peaks(x, t)}
            if previous is not None:
                assert found <= previous
            previous = found


def test_single_peak():
    assert find_peaks([0, 1, 0]) == [Peak(index=1, height=1.0, prominence=1.0)]


def test_two_peaks():
    found = find_peaks([0, 2, 1, 3, 0])
    assert [(p.index, p.prominence) for p in found] == [(1, 1.0), (3, 3.0)]


def test_monotone_has_no_peaks():
    assert find_peaks([1, 2, 3, 4, 5]) == []
    assert find_peaks([5, 4, 3]) == []


def test_plateau_reports_left_middle():
    assert [p.index for p in find_peaks([0, 2, 2, 0])] == [1]
    assert [p.index for p in find_peaks([0, 2, 2, 2, 0])] == [2]


def test_endpoints_never_qualify():
    assert find_peaks([5, 0, 5]) == []


def test_min_prominence_filters():
    x = [0, 2, 1, 3, 0]
    assert [p.index for p in find_peaks(x, min_prominence=1.5)] == [3]


def test_prominence_of_named_index():
    assert prominence([0, 2, 1, 3, 0], 1) == 1.0
    with pytest.raises(InvalidInput):
        prominence([0, 2, 1, 3, 0], 2)


def test_bad_signals():
    with pytest.raises(InvalidInput):
        find_peaks([])
    with pytest.raises(InvalidInput):
        find_peaks([0.0, np.nan, 0.0])
    with pytest.raises(InvalidInput):
        find_peaks([0.0, 1.0, 0.0], min_prominence=-1)


def test_distances():
    assert peak_distances(find_peaks([0, 1, 0, 0, 1, 0, 1, 0])) == [3, 2]
    assert peak_distances([]) == []


def test_smooth_width_one_is_identity():
    x = np.array([0.0, 3.0, 0.0])
    assert np.array_equal(smooth(x, 1), x)
    assert smooth(x, 3)[1] == pytest.approx(1.0)
