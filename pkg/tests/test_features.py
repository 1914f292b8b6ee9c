import numpy as np
import pytest

from audio_io import AudioClip
from errors import EmptyInput
from features import (GaitFeatures, avg_peak_distance, avg_peak_prominence, extract_features,
                      features_from_energy, relative_threshold, rms_residual)
from spectro import SpectroParams, melspectrogram_db
from synth import SceneSpec, synth_scene


def test_rms_residual_uses_rms_centre_and_sum():
    # RMS of [3, 4] = sqrt(12.5)
    rms = np.sqrt(12.5)
    assert rms_residual(np.array([3.0, 4.0])) == pytest.approx((3 - rms) ** 2 + (4 - rms) ** 2)


def test_rms_residual_of_empty_signal():
    with pytest.raises(EmptyInput):
        rms_residual(np.array([]))


def test_regular_pulse_train():
    E = np.zeros(100)
    E[10::20] = 5.0
    feats, found = features_from_energy(E)
    assert feats.n_peaks == 5
    assert feats.avg_peak_distance == 20.0
    assert feats.avg_peak_prominence == 5.0
    assert [p.index for p in found] == [10, 30, 50, 70, 90]


def test_single_peak_gets_distance_sentinel():
    E = np.zeros(50)
    E[25] = 1.0
    assert avg_peak_distance(E, 0.0) == 50.0
    assert avg_peak_prominence(E, 0.0) == 1.0


def test_flat_signal_sentinels():
    feats, _ = features_from_energy(np.full(40, 2.0))
    assert feats == GaitFeatures(0.0, 0.0, 40.0, 0)


def test_silence_features_follow_the_literal_formula():
    mel = melspectrogram_db(AudioClip(np.zeros(16000), 16000), SpectroParams())
    c = mel.values.sum(axis=1)[0]     # every frame: 64 bins at -100 dB
    feats = extract_features(mel)
    n = mel.n_frames
    assert feats.avg_peak_prominence == 0.0
    assert feats.avg_peak_distance == float(n)
    assert feats.rms_residual == pytest.approx(4 * n * c ** 2)


def test_relative_threshold():
    assert relative_threshold(np.array([-10.0, 0.0, 30.0]), 0.05) == pytest.approx(2.0)


def test_too_few_frames():
    with pytest.raises(EmptyInput):
        features_from_energy(np.array([1.0]))


def test_smoothing_suppresses_single_frame_spikes():
    E = np.zeros(60)
    E[::2] = 1.0
    raw, _ = features_from_energy(E)
    smoothed, _ = features_from_energy(E, smooth_frames=4)
    assert raw.n_peaks > smoothed.n_peaks


def test_smoothing_leaves_the_residual_on_raw_energy():
    E = np.zeros(60)
    E[::2] = 1.0
    raw, _ = features_from_energy(E)
    smoothed, found = features_from_energy(E, smooth_frames=4)
    assert smoothed.rms_residual == raw.rms_residual == rms_residual(E)
    assert smoothed.n_peaks == len(found)


def test_gain_invariance_on_good_scenes():
    params = SpectroParams()
    for seed in range(50):
        clip, _, label = synth_scene(SceneSpec(duration_s=3.0, snr_db=20.0, seed=seed))
        assert label == "GoodGait"
        base = extract_features(melspectrogram_db(clip, params))
        for gain in (0.5, 2.0):
            scaled = AudioClip(clip.samples * gain, clip.sample_rate_hz)
            f = extract_features(melspectrogram_db(scaled, params))
            assert f.avg_peak_prominence == pytest.approx(base.avg_peak_prominence, rel=1e-6)
            assert f.avg_peak_distance == pytest.approx(base.avg_peak_distance, rel=1e-6)


def test_prominence_falls_as_noise_rises():
    params = SpectroParams()
    means = []
    for snr in (20.0, 10.0, 0.0, -10.0):
        proms = []
        for seed in range(50):
            clip, _, _ = synth_scene(SceneSpec(snr_db=snr, seed=seed))
            proms.append(extract_features(melspectrogram_db(clip, params)).avg_peak_prominence)
        means.append(np.mean(proms))
    assert all(a > b for a, b in zip(means, means[1:]))
