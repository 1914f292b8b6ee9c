"""Shared fixtures: synthetic scenes and a small on-disk dataset."""

import os
import sys

_ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
sys.path.insert(0, _ROOT)

import numpy as np
import pytest
import soundfile as sf

from audio_io import CANONICAL_RATE, AudioClip
from classifier import LabeledExample
from features import extract_features
from spectro import SpectroParams, melspectrogram_db
from synth import _draw_specs, synth_dataset, synth_scene


@pytest.fixture(autouse=True)
def _isolated_error_log(tmp_path, monkeypatch):
    monkeypatch.setattr("storage._LOG_DIR", tmp_path / "logs")


def write_wav(path, samples, rate=CANONICAL_RATE, subtype="PCM_16"):
    path.parent.mkdir(parents=True, exist_ok=True)
    sf.write(str(path), np.asarray(samples), rate, subtype=subtype, format="WAV")
    return path


def sine_clip(freq=440.0, seconds=1.0, amp=0.5, rate=CANONICAL_RATE, source_id="sine"):
    t = np.arange(int(seconds * rate)) / rate
    return AudioClip(amp * np.sin(2 * np.pi * freq * t), rate, source_id)


@pytest.fixture(scope="session")
def synthetic_examples():
    """400 labelled feature vectors (200 good / 200 bad), 3 s scenes, seed 7."""
    params = SpectroParams()
    examples = []
    for i, spec in enumerate(_draw_specs(200, 200, 7, 3.0)):
        clip, _, label = synth_scene(spec)
        feats = extract_features(melspectrogram_db(clip, params))
        examples.append(LabeledExample(f"scene_{i:04d}", feats, label))
    return examples


@pytest.fixture(scope="session")
def small_dataset(tmp_path_factory):
    """12 good + 12 bad scenes written to disk; returns the manifest path."""
    out = tmp_path_factory.mktemp("synth")
    return synth_dataset(12, 12, seed=3, out_dir=out, duration_s=3.0)
