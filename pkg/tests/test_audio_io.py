import tracemalloc

import numpy as np
import pytest
import soundfile as sf

from audio_io import (AudioClip, GateConfig, calibrate_threshold, frame_rms, gated_duration,
                      load_wav, rms_gate, write_gate_csv)
from errors import EmptyInput, InvalidInput, InvalidParams, ParseError, UnsupportedFormat

from conftest import sine_clip, write_wav


# --- load_wav -------------------------------------------------------------------

def test_pcm16_value_scaling(tmp_path):
    path = write_wav(tmp_path / "a.wav", np.array([16384, -16384, 0], dtype=np.int16))
    clip = load_wav(path)
    assert clip.samples.tolist() == [0.5, -0.5, 0.0]
    assert clip.sample_rate_hz == 16000
    assert clip.source_id == "a"


def test_stereo_is_averaged(tmp_path):
    left = np.full(100, 0.5)
    right = np.full(100, -0.25)
    path = write_wav(tmp_path / "st.wav", np.stack([left, right], axis=1), subtype="FLOAT")
    clip = load_wav(path)
    assert np.allclose(clip.samples, 0.125)


def test_float_is_clipped(tmp_path):
    path = write_wav(tmp_path / "hot.wav", np.array([1.5, -2.0, 0.25]), subtype="FLOAT")
    assert load_wav(path).samples.tolist() == [1.0, -1.0, 0.25]


def test_truncated_header_is_parse_error(tmp_path):
    path = tmp_path / "bad.wav"
    path.write_bytes(b"RIFF\x10\x00\x00\x00WAVEfmt ")
    with pytest.raises(ParseError):
        load_wav(path)


def test_not_a_wav_is_parse_error(tmp_path):
    path = tmp_path / "text.wav"
    path.write_text("definitely not audio")
    with pytest.raises(ParseError):
        load_wav(path)


def test_adpcm_is_unsupported(tmp_path):
    path = tmp_path / "adpcm.wav"
    try:
        sf.write(str(path), np.zeros(2048), 16000, subtype="IMA_ADPCM", format="WAV")
    except Exception:
        pytest.skip("libsndfile build cannot write IMA ADPCM")
    with pytest.raises(UnsupportedFormat):
        load_wav(path)


def test_empty_data_chunk(tmp_path):
    path = write_wav(tmp_path / "empty.wav", np.zeros(0, dtype=np.int16))
    with pytest.raises(EmptyInput):
        load_wav(path)


def test_required_rate_mismatch(tmp_path):
    path = write_wav(tmp_path / "44k.wav", np.zeros(4410, dtype=np.int16), rate=44100)
    assert load_wav(path).sample_rate_hz == 44100
    with pytest.raises(InvalidInput, match="44100"):
        load_wav(path, require_rate=16000)


def test_clip_rejects_out_of_range_and_nan():
    with pytest.raises(InvalidInput):
        AudioClip(np.array([0.0, 1.5]), 16000)
    with pytest.raises(InvalidInput):
        AudioClip(np.array([0.0, np.nan]), 16000)
    with pytest.raises(InvalidInput):
        AudioClip(np.zeros((2, 2)), 16000)


def test_clip_samples_are_read_only():
    clip = sine_clip()
    with pytest.raises(ValueError):
        clip.samples[0] = 0.1


# --- frame_rms / gate -------------------------------------------------------------

def test_frame_rms_of_full_scale_sine():
    clip = sine_clip(freq=400.0, seconds=1.0, amp=1.0)
    rms = frame_rms(clip, 1600, 1600)
    assert rms.size == 10
    assert np.allclose(rms, 1 / np.sqrt(2), rtol=1e-3)


def test_frame_rms_short_clip():
    with pytest.raises(EmptyInput):
        frame_rms(AudioClip(np.zeros(100), 16000), 1600, 1600)


def test_frame_rms_with_overlapping_frames():
    rng = np.random.default_rng(4)
    x = rng.uniform(-1, 1, 5000)
    rms = frame_rms(AudioClip(x, 16000), 400, 7)
    want = [np.sqrt(np.mean(x[s:s + 400] ** 2)) for s in range(0, 5000 - 400 + 1, 7)]
    assert rms.size == len(want)
    assert np.allclose(rms, want, rtol=1e-12)


def test_frame_rms_memory_does_not_grow_with_overlap():
    clip = AudioClip(np.full(32000, 0.25), 16000)
    tracemalloc.start()
    try:
        rms = frame_rms(clip, 1600, 1)
        _, peak = tracemalloc.get_traced_memory()
    finally:
        tracemalloc.stop()
    assert rms.size == 32000 - 1600 + 1
    assert np.all(rms == 0.25)
    assert peak < 50e6


def test_frame_rms_ignores_sign():
    rng = np.random.default_rng(8)
    x = rng.uniform(-1, 1, 16000)
    assert np.array_equal(frame_rms(AudioClip(x, 16000), 1600, 800),
                          frame_rms(AudioClip(-x, 16000), 1600, 800))


def test_silence_never_opens_the_gate():
    clip = AudioClip(np.zeros(16000 * 2), 16000)
    assert rms_gate(clip, GateConfig(rms_threshold=0.01)) == []


def test_zero_threshold_opens_everything():
    clip = AudioClip(np.zeros(16000 * 2 + 300), 16000)
    segments = rms_gate(clip, GateConfig(rms_threshold=0.0))
    assert len(segments) == 1
    assert (segments[0].start_sample, segments[0].end_sample) == (0, len(clip))


def test_burst_with_hang_time():
    rate = 16000
    x = np.zeros(rate * 4)
    x[rate:rate + 3200] = 0.5          # frames 10-11 loud
    clip = AudioClip(x, rate)
    segments = rms_gate(clip, GateConfig(rms_threshold=0.1, frame_len=1600, hang_time=5))
    assert len(segments) == 1
    assert segments[0].start_sample == 16000
    # last loud frame 11 + 5 hang frames -> frame 16 inclusive
    assert segments[0].end_sample == 17 * 1600


def test_nearby_bursts_merge():
    rate = 16000
    x = np.zeros(rate * 4)
    x[1600 * 5:1600 * 6] = 0.5
    x[1600 * 9:1600 * 10] = 0.5
    clip = AudioClip(x, rate)
    merged = rms_gate(clip, GateConfig(rms_threshold=0.1, hang_time=5))
    assert len(merged) == 1
    apart = rms_gate(clip, GateConfig(rms_threshold=0.1, hang_time=1))
    assert len(apart) == 2


def test_gate_rejects_bad_config():
    with pytest.raises(InvalidParams):
        GateConfig(rms_threshold=-0.1)
    with pytest.raises(InvalidParams):
        GateConfig(rms_threshold=0.1, frame_len=0)


def test_gated_duration_is_monotone_in_threshold():
    rng = np.random.default_rng(11)
    thresholds = np.linspace(0.0, 0.5, 26)
    for _ in range(20):
        env = rng.uniform(0.0, 0.9, 40).repeat(1600)
        clip = AudioClip(env * rng.uniform(-1, 1, env.size), 16000)
        hang = int(rng.integers(0, 6))
        durations = [gated_duration(rms_gate(clip, GateConfig(t, hang_time=hang)))
                     for t in thresholds]
        assert all(a >= b for a, b in zip(durations, durations[1:]))


def test_regating_the_gated_audio_keeps_all_of_it():
    rng = np.random.default_rng(21)
    for _ in range(50):
        env = (rng.uniform(0, 1, 40) < 0.3) * rng.uniform(0.2, 0.9, 40)
        x = env.repeat(1600) * rng.uniform(-1, 1, 40 * 1600)
        x = x[:x.size - int(rng.integers(0, 1600))]    # ragged tail
        cfg = GateConfig(rms_threshold=0.05, hang_time=int(rng.integers(0, 6)))
        segments = rms_gate(AudioClip(x, 16000), cfg)
        if not segments:
            continue
        kept = np.concatenate([x[s.start_sample:s.end_sample] for s in segments])
        if kept.size < cfg.frame_len:
            continue
        again = rms_gate(AudioClip(kept, 16000), cfg)
        assert gated_duration(again) == kept.size


# --- calibration ------------------------------------------------------------------

def test_calibration_on_constant_rms_noise():
    rng = np.random.default_rng(0)
    x = 0.1 * np.sign(rng.standard_normal(16000 * 5))
    clip = AudioClip(x, 16000)
    assert calibrate_threshold(clip, 95) == pytest.approx(0.1, rel=1e-9)


def test_calibration_percentile_100_is_max():
    rate = 16000
    x = np.zeros(rate * 2)
    x[:1600] = 0.3
    clip = AudioClip(x, rate)
    assert calibrate_threshold(clip, 100) == pytest.approx(0.3)


def test_calibration_matches_sorted_order_statistics():
    levels = np.array([0.1] * 90 + [0.9] * 10)
    np.random.default_rng(6).shuffle(levels)
    clip = AudioClip(levels.repeat(1600), 16000)
    s = np.sort(frame_rms(clip, 1600, 1600))
    pos = 0.95 * (s.size - 1)
    lo = int(np.floor(pos))
    want = s[lo] + (pos - lo) * (s[lo + 1] - s[lo])
    got = calibrate_threshold(clip, 95)
    assert got == pytest.approx(want, rel=1e-12)
    assert 0.1 - 1e-12 <= got <= 0.9 + 1e-12


def test_calibration_needs_ten_frames():
    with pytest.raises(EmptyInput):
        calibrate_threshold(AudioClip(np.zeros(1600 * 9), 16000))


def test_calibration_percentile_range():
    clip = AudioClip(np.zeros(16000 * 2), 16000)
    with pytest.raises(InvalidParams):
        calibrate_threshold(clip, 0)
    with pytest.raises(InvalidParams):
        calibrate_threshold(clip, 101)


def test_gate_csv(tmp_path):
    rate = 16000
    x = np.zeros(rate * 2)
    x[:1600] = 0.5
    segments = rms_gate(AudioClip(x, rate), GateConfig(0.1, hang_time=0))
    path = write_gate_csv(tmp_path / "gate.csv", "room1", segments)
    assert path.read_text().splitlines() == ["source_id,start_sample,end_sample",
                                             "room1,0,1600"]
