"""
audio_io.py — WAV loading, frame RMS, and the RMS activity gate

The gate is what a recording device runs before anything else: chop the
stream into 100 ms frames, compare each frame's RMS against a per-site
threshold, and only hand the loud stretches downstream. Each site gets
its own threshold because each room sounds different, so
calibrate_threshold derives one from a background recording instead of
tuning it by ear.

No resampling anywhere. Clips keep their native rate and say so; callers
that need 16 kHz ask load_wav to enforce it.
"""

from dataclasses import dataclass
from pathlib import Path

import numpy as np
import soundfile as sf

from errors import EmptyInput, InvalidInput, InvalidParams, ParseError, UnsupportedFormat
from storage import write_csv_atomic

CANONICAL_RATE = 16000

# Linear PCM / float subtypes libsndfile reports for WAV files we accept.
# Anything else inside a WAV container (ADPCM, GSM, mu-law...) is refused.
_PCM_SUBTYPES = {"PCM_U8", "PCM_S8", "PCM_16", "PCM_24", "PCM_32", "FLOAT"}
_WAV_FORMATS = {"WAV", "WAVEX"}

# Gate defaults: 100 ms frames at 16 kHz, 500 ms hang (one footstep gap at ~2 Hz).
DEFAULT_GATE_FRAME = 1600
DEFAULT_HANG_FRAMES = 5
DEFAULT_CALIBRATION_PERCENTILE = 95.0

_RMS_BLOCK_SAMPLES = 1 << 20


@dataclass(frozen=True)
class AudioClip:
    samples: np.ndarray
    sample_rate_hz: int
    source_id: str = ""

    def __post_init__(self):
        if self.sample_rate_hz <= 0:
            raise InvalidInput(f"sample rate must be positive, got {self.sample_rate_hz}")
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 1:
            raise InvalidInput("AudioClip samples must be mono (1-D)")
        if not np.all(np.isfinite(samples)):
            raise InvalidInput(f"non-finite samples in clip '{self.source_id}'")
        if samples.size and np.max(np.abs(samples)) > 1.0:
            raise InvalidInput(f"samples outside [-1, 1] in clip '{self.source_id}'")
        samples.setflags(write=False)
        object.__setattr__(self, "samples", samples)

    def __len__(self) -> int:
        return int(self.samples.size)

    @property
    def duration_s(self) -> float:
        return len(self) / self.sample_rate_hz


@dataclass(frozen=True)
class GateConfig:
    rms_threshold: float
    frame_len: int = DEFAULT_GATE_FRAME
    hang_time: int = DEFAULT_HANG_FRAMES

    def __post_init__(self):
        if self.rms_threshold < 0:
            raise InvalidParams(f"rms_threshold must be >= 0, got {self.rms_threshold}")
        if self.frame_len < 1:
            raise InvalidParams(f"frame_len must be >= 1, got {self.frame_len}")
        if self.hang_time < 0:
            raise InvalidParams(f"hang_time must be >= 0, got {self.hang_time}")


@dataclass(frozen=True)
class GateSegment:
    start_sample: int
    end_sample: int  # exclusive

    @property
    def length(self) -> int:
        return self.end_sample - self.start_sample


# --- Loading ----------------------------------------------------------------

def load_wav(path: Path | str, require_rate: int | None = None) -> AudioClip:
    """
    Read a RIFF WAV file into a mono clip with samples in [-1, 1].

    Channels are averaged. Integer PCM is scaled by libsndfile (16384 on
    16-bit -> 0.5); float files are clipped to [-1, 1]. When require_rate
    is given and the file's rate differs, raises InvalidInput instead of
    resampling.
    """
    path = Path(path)
    try:
        info = sf.info(str(path))
    except (RuntimeError, sf.SoundFileError) as e:
        raise ParseError(f"{path}: cannot parse WAV header ({e})")

    if info.format not in _WAV_FORMATS:
        raise UnsupportedFormat(f"{path}: container {info.format} is not WAV")
    if info.subtype not in _PCM_SUBTYPES:
        raise UnsupportedFormat(f"{path}: encoding {info.subtype} is not linear PCM / float32")
    if require_rate is not None and info.samplerate != require_rate:
        raise InvalidInput(f"{path}: sample rate {info.samplerate} Hz, expected {require_rate} Hz")

    try:
        data, rate = sf.read(str(path), dtype="float64", always_2d=True)
    except (RuntimeError, sf.SoundFileError) as e:
        raise ParseError(f"{path}: cannot decode samples ({e})")

    if data.shape[0] == 0:
        raise EmptyInput(f"{path}: no audio frames")

    mono = data.mean(axis=1)
    if not np.all(np.isfinite(mono)):
        raise ParseError(f"{path}: non-finite samples")
    mono = np.clip(mono, -1.0, 1.0)
    return AudioClip(samples=mono, sample_rate_hz=int(rate), source_id=path.stem)


# --- Frame RMS + gate --------------------------------------------------------

def frame_rms(clip: AudioClip, frame_len: int, hop: int) -> np.ndarray:
    """RMS per frame; frame k covers [k*hop, k*hop + frame_len). Partial tail dropped."""
    if frame_len < 1 or hop < 1:
        raise InvalidParams(f"frame_len and hop must be >= 1 (got {frame_len}, {hop})")
    if len(clip) < frame_len:
        raise EmptyInput(f"clip '{clip.source_id}' has {len(clip)} samples, "
                         f"shorter than one frame ({frame_len})")
    frames = np.lib.stride_tricks.sliding_window_view(clip.samples, frame_len)[::hop]
    out = np.empty(frames.shape[0])
    # square one block of frames at a time: overlapping frames share samples
    step = max(1, _RMS_BLOCK_SAMPLES // frame_len)
    for k in range(0, frames.shape[0], step):
        block = frames[k:k + step]
        out[k:k + block.shape[0]] = np.sqrt(np.mean(block ** 2, axis=1))
    return out


def _runs(mask: np.ndarray) -> list[tuple[int, int]]:
    """(first, last) frame index of each run of True values."""
    padded = np.concatenate(([False], mask, [False])).astype(np.int8)
    edges = np.diff(padded)
    starts = np.flatnonzero(edges == 1)
    ends = np.flatnonzero(edges == -1) - 1
    return list(zip(starts.tolist(), ends.tolist()))


def rms_gate(clip: AudioClip, cfg: GateConfig) -> list[GateSegment]:
    """
    Sample spans where the gate is open.

    A run of frames at or above the threshold opens the gate; it stays
    open hang_time frames after the last loud frame. Overlapping or
    touching spans merge. A run that reaches the final full frame keeps
    the gate open to the end of the clip.
    """
    hop = cfg.frame_len
    rms = frame_rms(clip, cfg.frame_len, hop)
    n_frames = rms.size
    n = len(clip)

    spans: list[list[int]] = []
    for first, last in _runs(rms >= cfg.rms_threshold):
        last_open = min(n_frames - 1, last + cfg.hang_time)
        start = first * hop
        end = n if last_open == n_frames - 1 else last_open * hop + cfg.frame_len
        end = min(end, n)
        if spans and start <= spans[-1][1]:
            spans[-1][1] = max(spans[-1][1], end)
        else:
            spans.append([start, end])

    return [GateSegment(s, e) for s, e in spans]


def gated_duration(segments: list[GateSegment]) -> int:
    """Total samples covered by the gate."""
    return sum(seg.length for seg in segments)


def calibrate_threshold(clip: AudioClip,
                        percentile: float = DEFAULT_CALIBRATION_PERCENTILE,
                        frame_len: int = DEFAULT_GATE_FRAME) -> float:
    """
    Site threshold from a background recording: the given percentile of
    its frame-RMS distribution (linear interpolation between order
    statistics). Needs at least 10 frames.
    """
    if not 0 < percentile <= 100:
        raise InvalidParams(f"percentile must be in (0, 100], got {percentile}")
    if len(clip) < 10 * frame_len:
        raise EmptyInput(f"calibration clip '{clip.source_id}' needs >= 10 frames "
                         f"of {frame_len} samples, has {len(clip)} samples")
    rms = frame_rms(clip, frame_len, frame_len)
    return float(np.percentile(rms, percentile, method="linear"))


def write_gate_csv(path: Path | str, source_id: str,
                   segments: list[GateSegment]) -> Path:
    rows = [[source_id, s.start_sample, s.end_sample] for s in segments]
    return write_csv_atomic(path, ["source_id", "start_sample", "end_sample"], rows)


# --- Standalone test ---
if __name__ == "__main__":
    rate = CANONICAL_RATE
    x = np.zeros(rate * 4)
    x[rate:2 * rate] = 0.5 * np.sin(2 * np.pi * 440 * np.arange(rate) / rate)
    clip = AudioClip(x, rate, "demo")
    for seg in rms_gate(clip, GateConfig(rms_threshold=0.1)):
        print(f"  open {seg.start_sample / rate:.2f}s -> {seg.end_sample / rate:.2f}s")
