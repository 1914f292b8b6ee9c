"""
synth.py — labelled synthetic gait scenes

Stands in for real carehome recordings so every property of the pipeline
can be checked on a laptop. A scene is:

  footsteps    band-limited (100-2000 Hz) noise bursts, exponential decay,
               at a jittered cadence
  background   pink noise, scaled so footstep power / noise power = snr_db
  distractors  door-shut bursts (broadband, long decay) and speech-band
               tone clusters, placed uniformly at random

Labels follow the scene, not a listener:
  GoodGait  snr_db >= +10 and no distractors
  BadGait   snr_db <= 0 or 3+ distractors
Anything in between is refused so the two classes never blur.

Random draws happen in a fixed order (steps, noise, distractors) and none
depends on snr_db, so two specs that differ only in SNR are the same scene
at a different noise level.
"""

import hashlib
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
import soundfile as sf
from joblib import Parallel, delayed
from scipy.signal import butter, sosfilt

from audio_io import CANONICAL_RATE, AudioClip
from errors import InvalidParams
from storage import write_csv_atomic

GOOD = "GoodGait"
BAD = "BadGait"

GOOD_MIN_SNR_DB = 10.0
BAD_MAX_SNR_DB = 0.0
BAD_MIN_DISTRACTORS = 3

STEP_BAND_HZ = (100.0, 2000.0)
STEP_AMPLITUDE = 0.3
# Mixture peak is capped here, so a 2x gain still fits in [-1, 1].
PEAK_LIMIT = 0.45

MANIFEST_HEADER = ["id", "path", "start_s", "end_s", "class_label", "quality_label"]


@dataclass(frozen=True)
class SceneSpec:
    duration_s: float = 6.0
    cadence_hz: float = 2.0
    step_jitter_frac: float = 0.05
    step_decay_ms: float = 30.0
    snr_db: float = 20.0
    distractors: int = 0
    seed: int = 0
    sample_rate_hz: int = CANONICAL_RATE


def scene_label(spec: SceneSpec) -> str:
    if spec.snr_db >= GOOD_MIN_SNR_DB and spec.distractors == 0:
        return GOOD
    if spec.snr_db <= BAD_MAX_SNR_DB or spec.distractors >= BAD_MIN_DISTRACTORS:
        return BAD
    raise InvalidParams(
        f"ambiguous scene (snr_db={spec.snr_db}, distractors={spec.distractors}): "
        f"GoodGait needs snr >= {GOOD_MIN_SNR_DB:g} dB and no distractors, "
        f"BadGait needs snr <= {BAD_MAX_SNR_DB:g} dB or >= {BAD_MIN_DISTRACTORS} distractors")


def _validate(spec: SceneSpec) -> None:
    if spec.duration_s <= 0:
        raise InvalidParams(f"duration_s must be > 0, got {spec.duration_s}")
    if spec.cadence_hz <= 0:
        raise InvalidParams(f"cadence_hz must be > 0, got {spec.cadence_hz}")
    if not 0 <= spec.step_jitter_frac < 0.5:
        raise InvalidParams(f"step_jitter_frac must be in [0, 0.5), got {spec.step_jitter_frac}")
    if spec.step_decay_ms <= 0:
        raise InvalidParams(f"step_decay_ms must be > 0, got {spec.step_decay_ms}")
    if spec.distractors < 0:
        raise InvalidParams(f"distractors must be >= 0, got {spec.distractors}")
    if spec.sample_rate_hz <= 2 * STEP_BAND_HZ[1]:
        raise InvalidParams(f"sample rate {spec.sample_rate_hz} too low for the footstep band")


# --- Sound sources -------------------------------------------------------------

def pink_noise(n: int, rng: np.random.Generator) -> np.ndarray:
    """Unit-RMS 1/f noise, shaped in the frequency domain."""
    spectrum = np.fft.rfft(rng.standard_normal(n))
    f = np.arange(spectrum.size, dtype=np.float64)
    f[0] = 1.0
    spectrum /= np.sqrt(f)
    spectrum[0] = 0.0
    x = np.fft.irfft(spectrum, n)
    return x / np.sqrt(np.mean(x ** 2))


def _burst(length: int, decay_s: float, sos, rng: np.random.Generator,
           rate: int) -> np.ndarray:
    t = np.arange(length) / rate
    x = sosfilt(sos, rng.standard_normal(length)) * np.exp(-t / decay_s)
    return x / np.max(np.abs(x))


def step_times(spec: SceneSpec, rng: np.random.Generator) -> np.ndarray:
    """Onsets at (k + 0.5) / cadence, jittered, kept a quarter period from either edge."""
    period = 1.0 / spec.cadence_hz
    n = int(np.floor(spec.duration_s * spec.cadence_hz))
    base = (np.arange(n) + 0.5) * period
    jitter = rng.uniform(-spec.step_jitter_frac, spec.step_jitter_frac, n) * period
    times = base + jitter
    return times[(times >= 0.25 * period) & (times <= spec.duration_s - 0.25 * period)]


def _add(track: np.ndarray, event: np.ndarray, start: int) -> None:
    end = min(track.size, start + event.size)
    if end > start:
        track[start:end] += event[:end - start]


def _distractor(kind: int, rng: np.random.Generator, rate: int,
                broadband_sos) -> np.ndarray:
    if kind == 0:
        # door shut: loud broadband thump with a long tail
        length = int(rate * rng.uniform(0.3, 0.6))
        return rng.uniform(1.0, 2.0) * STEP_AMPLITUDE * _burst(
            length, rng.uniform(0.08, 0.15), broadband_sos, rng, rate)
    # speech-band tone cluster: a few harmonics of a 120-250 Hz fundamental
    length = int(rate * rng.uniform(0.4, 1.2))
    t = np.arange(length) / rate
    f0 = rng.uniform(120.0, 250.0)
    tone = sum(np.sin(2 * np.pi * f0 * h * t + rng.uniform(0, 2 * np.pi)) / h
               for h in range(1, 6))
    envelope = np.sin(np.pi * np.arange(length) / length)
    return rng.uniform(0.3, 0.7) * STEP_AMPLITUDE * tone * envelope / np.max(np.abs(tone))


def synth_scene(spec: SceneSpec) -> tuple[AudioClip, np.ndarray, str]:
    """(clip, ground-truth step onsets in seconds, quality label)."""
    _validate(spec)
    label = scene_label(spec)
    rate = spec.sample_rate_hz
    n = int(round(spec.duration_s * rate))
    rng = np.random.default_rng(spec.seed)

    step_sos = butter(4, STEP_BAND_HZ, btype="bandpass", fs=rate, output="sos")
    wide_sos = butter(2, [50.0, min(6000.0, 0.45 * rate)], btype="bandpass",
                      fs=rate, output="sos")

    times = step_times(spec, rng)
    steps = np.zeros(n)
    decay_s = spec.step_decay_ms / 1000.0
    for t0 in times:
        amp = STEP_AMPLITUDE * rng.uniform(0.8, 1.0)
        _add(steps, amp * _burst(int(8 * decay_s * rate), decay_s, step_sos, rng, rate),
             int(round(t0 * rate)))

    noise = pink_noise(n, rng)

    distract = np.zeros(n)
    for _ in range(spec.distractors):
        kind = int(rng.integers(0, 2))
        event = _distractor(kind, rng, rate, wide_sos)
        _add(distract, event, int(rng.integers(0, max(1, n - event.size // 2))))

    step_power = np.mean(steps ** 2)
    if step_power > 0:
        noise *= np.sqrt(step_power / 10 ** (spec.snr_db / 10))
    else:
        noise *= 1e-3

    mix = steps + noise + distract
    peak = np.max(np.abs(mix))
    if peak > PEAK_LIMIT:
        mix *= PEAK_LIMIT / peak

    clip = AudioClip(samples=mix, sample_rate_hz=rate, source_id=f"scene_{spec.seed}")
    return clip, times, label


# --- Datasets ---------------------------------------------------------------------

def _draw_specs(n_good: int, n_bad: int, seed: int,
                duration_s: float) -> list[SceneSpec]:
    """
    Stratified draws. Cadence spans 1.5-2.5 Hz for both classes; good scenes
    take SNR evenly across [10, 30] dB, bad scenes across [-15, 0] dB with
    0-5 distractors on top.
    """
    rng = np.random.default_rng(seed)
    specs: list[SceneSpec] = []

    def strata(count: int, lo: float, hi: float) -> np.ndarray:
        edges = np.linspace(lo, hi, count + 1)
        return rng.permutation(rng.uniform(edges[:-1], edges[1:]))

    good_snr, good_cad = strata(n_good, 10.0, 30.0), strata(n_good, 1.5, 2.5)
    bad_snr, bad_cad = strata(n_bad, -15.0, 0.0), strata(n_bad, 1.5, 2.5)

    for i in range(n_good):
        specs.append(SceneSpec(duration_s=duration_s, cadence_hz=float(good_cad[i]),
                               snr_db=float(good_snr[i]), distractors=0,
                               step_decay_ms=float(rng.uniform(20.0, 40.0))))
    for i in range(n_bad):
        specs.append(SceneSpec(duration_s=duration_s, cadence_hz=float(bad_cad[i]),
                               snr_db=float(bad_snr[i]),
                               distractors=int(rng.integers(0, 6)),
                               step_decay_ms=float(rng.uniform(20.0, 40.0))))

    # per-scene seeds derived from the dataset seed
    children = np.random.SeedSequence(seed).spawn(len(specs))
    return [replace(s, seed=int(c.generate_state(1)[0])) for s, c in zip(specs, children)]


def _render(spec: SceneSpec, path: Path) -> tuple[str, str]:
    clip, _, label = synth_scene(spec)
    path.parent.mkdir(parents=True, exist_ok=True)
    sf.write(str(path), clip.samples, clip.sample_rate_hz, subtype="PCM_16", format="WAV")
    return label, hashlib.sha256(path.read_bytes()).hexdigest()


def synth_dataset(n_good: int, n_bad: int, seed: int, out_dir: Path | str,
                  duration_s: float = 3.0, jobs: int = 1) -> Path:
    """Write n_good + n_bad WAVs and manifest.csv under out_dir; returns the manifest path."""
    if n_good < 1 or n_bad < 1:
        raise InvalidParams(f"need at least one scene per class (got {n_good}, {n_bad})")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)  # OSError propagates: unwritable dir

    specs = _draw_specs(n_good, n_bad, seed, duration_s)
    names = [f"scene_{i:04d}.wav" for i in range(len(specs))]
    print(f"[synth] rendering {len(specs)} scenes ({n_good} good / {n_bad} bad) -> {out_dir}")

    results = Parallel(n_jobs=jobs)(
        delayed(_render)(spec, out_dir / "audio" / name) for spec, name in zip(specs, names))

    rows = []
    for i, (name, (label, _)) in enumerate(zip(names, results)):
        rows.append([f"scene_{i:04d}", f"audio/{name}", 0.0, duration_s, "Gait", label])
    manifest = write_csv_atomic(out_dir / "manifest.csv", MANIFEST_HEADER, rows)

    checksums = [[f"audio/{name}", digest] for name, (_, digest) in zip(names, results)]
    write_csv_atomic(out_dir / "checksums.csv", ["path", "sha256"], checksums)
    print(f"[synth] manifest written -> {manifest}")
    return manifest


# --- Standalone test ---
if __name__ == "__main__":
    for snr in (20, 10, 0, -10):
        clip, times, label = synth_scene(SceneSpec(snr_db=snr, seed=1))
        rms = np.sqrt(np.mean(clip.samples ** 2))
        print(f"  snr={snr:+d} dB  steps={len(times)}  label={label}  rms={rms:.4f}")
