import csv

import numpy as np
import pytest

from errors import InvalidParams
from features import features_from_energy
from spectro import SpectroParams, energy_signal, melspectrogram_db
from synth import BAD, GOOD, SceneSpec, pink_noise, scene_label, synth_dataset, synth_scene


def test_labels_follow_the_scene():
    assert scene_label(SceneSpec(snr_db=20.0)) == GOOD
    assert scene_label(SceneSpec(snr_db=10.0)) == GOOD
    assert scene_label(SceneSpec(snr_db=-5.0)) == BAD
    assert scene_label(SceneSpec(snr_db=20.0, distractors=3)) == BAD


@pytest.mark.parametrize("snr, distractors", [(5.0, 0), (20.0, 1), (5.0, 2)])
def test_ambiguous_scenes_are_refused(snr, distractors):
    with pytest.raises(InvalidParams):
        synth_scene(SceneSpec(snr_db=snr, distractors=distractors))


def test_invalid_specs():
    with pytest.raises(InvalidParams):
        synth_scene(SceneSpec(duration_s=0.0))
    with pytest.raises(InvalidParams):
        synth_scene(SceneSpec(cadence_hz=-1.0))


def test_scene_shape_and_range():
    clip, times, label = synth_scene(SceneSpec(duration_s=6.0, cadence_hz=2.0, seed=4))
    assert len(clip) == 6 * 16000
    assert label == GOOD
    assert np.max(np.abs(clip.samples)) <= 0.45 + 1e-12
    assert 10 <= times.size <= 12
    assert np.all(np.diff(times) > 0)


def test_same_seed_same_scene():
    a, ta, _ = synth_scene(SceneSpec(seed=9))
    b, tb, _ = synth_scene(SceneSpec(seed=9))
    assert np.array_equal(a.samples, b.samples)
    assert np.array_equal(ta, tb)


def test_paired_snr_shares_footsteps():
    _, t_clean, _ = synth_scene(SceneSpec(snr_db=20.0, seed=5))
    _, t_noisy, _ = synth_scene(SceneSpec(snr_db=-10.0, seed=5))
    assert np.array_equal(t_clean, t_noisy)


def test_pink_noise_is_unit_rms_and_tilted():
    x = pink_noise(2 ** 16, np.random.default_rng(0))
    assert np.sqrt(np.mean(x ** 2)) == pytest.approx(1.0)
    spectrum = np.abs(np.fft.rfft(x)) ** 2
    low = spectrum[10:100].mean()
    high = spectrum[10000:10090].mean()
    assert low > 10 * high


def test_steps_line_up_with_energy_peaks():
    params = SpectroParams()
    frame_s = params.hop / 16000
    for seed in range(10):
        clip, times, _ = synth_scene(SceneSpec(snr_db=30.0, seed=seed))
        _, found = features_from_energy(energy_signal(melspectrogram_db(clip, params)))
        peak_frames = np.array([p.index for p in found])
        for t0 in times:
            expected = (t0 - params.n_fft / 2 / 16000) / frame_s
            assert np.min(np.abs(peak_frames - expected)) <= 2


def test_dataset_on_disk(tmp_path):
    manifest = synth_dataset(3, 2, seed=1, out_dir=tmp_path / "ds", duration_s=3.0)
    rows = list(csv.DictReader(manifest.open()))
    assert len(rows) == 5
    assert [r["quality_label"] for r in rows].count(GOOD) == 3
    assert all(r["class_label"] == "Gait" for r in rows)
    assert all((manifest.parent / r["path"]).exists() for r in rows)
    assert (manifest.parent / "checksums.csv").exists()


def test_dataset_is_reproducible(tmp_path):
    a = synth_dataset(2, 2, seed=6, out_dir=tmp_path / "a")
    b = synth_dataset(2, 2, seed=6, out_dir=tmp_path / "b", jobs=2)
    assert (a.parent / "checksums.csv").read_bytes() == (b.parent / "checksums.csv").read_bytes()
    assert a.read_bytes() == b.read_bytes()


def test_dataset_needs_both_classes(tmp_path):
    with pytest.raises(InvalidParams):
        synth_dataset(0, 3, seed=0, out_dir=tmp_path)
