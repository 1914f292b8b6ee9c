"""
spectro.py — mel spectrograms and the per-frame energy signal

One analysis window of audio becomes a (frames x mel bins) matrix of dB
values, and that matrix collapses to E(i): the sum of the dB values in
frame i. Every triage feature is computed on E.

dB reference is absolute (10*log10 of mel power, floor 1e-10), so a quiet
clip really is lower than a loud one. The floor clamp is per clip: nothing
sits more than db_floor below the clip's own peak.

STFT, filterbank and dB conversion come from librosa. center=False so the
frame count is floor((len - n_fft) / hop) + 1 and nothing is padded.
"""

import warnings
from dataclasses import dataclass, field
from pathlib import Path

import librosa
import numpy as np

from audio_io import AudioClip
from errors import EmptyInput, InvalidParams, ParseError
from storage import write_text_atomic

AMIN = 1e-10


@dataclass(frozen=True)
class SpectroParams:
    n_fft: int = 1024          # 64 ms at 16 kHz
    hop: int = 256             # 16 ms per frame
    n_mels: int = 64
    fmin_hz: float = 40.0
    fmax_hz: float = 8000.0    # Nyquist at 16 kHz; gait has nothing above it
    db_floor: float | None = 80.0

    def validate(self, sample_rate_hz: int) -> None:
        if self.n_fft < 2 or self.hop < 1:
            raise InvalidParams(f"n_fft must be >= 2 and hop >= 1 (got {self.n_fft}, {self.hop})")
        if self.n_mels < 1:
            raise InvalidParams(f"n_mels must be >= 1, got {self.n_mels}")
        if not 0 <= self.fmin_hz < self.fmax_hz <= sample_rate_hz / 2:
            raise InvalidParams(
                f"need 0 <= fmin < fmax <= {sample_rate_hz / 2:g} Hz "
                f"(got fmin={self.fmin_hz}, fmax={self.fmax_hz})")
        if self.db_floor is not None and self.db_floor <= 0:
            raise InvalidParams(f"db_floor must be positive, got {self.db_floor}")

    def as_dict(self) -> dict:
        return {"n_fft": self.n_fft, "hop": self.hop, "n_mels": self.n_mels,
                "fmin_hz": self.fmin_hz, "fmax_hz": self.fmax_hz,
                "db_floor": self.db_floor}


@dataclass(frozen=True)
class MelSpectrogram:
    values: np.ndarray               # [frame][mel bin], dB
    params: SpectroParams
    sample_rate_hz: int = 16000
    source_id: str = ""

    @property
    def n_frames(self) -> int:
        return int(self.values.shape[0])

    @property
    def frame_period_s(self) -> float:
        return self.params.hop / self.sample_rate_hz


@dataclass(frozen=True)
class EnergySignal:
    values: np.ndarray
    frame_period_s: float
    source_id: str = field(default="")

    def __len__(self) -> int:
        return int(self.values.size)


# --- Mel scale -----------------------------------------------------------------

def hz_to_mel(f_hz):
    """mel(f) = 2595 * log10(1 + f / 700)."""
    return librosa.hz_to_mel(f_hz, htk=True)


def mel_center_frequencies(params: SpectroParams) -> np.ndarray:
    """Center frequency (Hz) of each filter, equally spaced on the mel scale."""
    edges = librosa.mel_frequencies(n_mels=params.n_mels + 2, fmin=params.fmin_hz,
                                    fmax=params.fmax_hz, htk=True)
    return edges[1:-1]


def mel_filterbank(params: SpectroParams, sample_rate_hz: int) -> np.ndarray:
    """Triangular filters, peak-normalised (no area normalisation): [n_mels x n_fft/2+1]."""
    params.validate(sample_rate_hz)
    with warnings.catch_warnings():
        # librosa warns on empty rows; we raise instead
        warnings.simplefilter("ignore", UserWarning)
        fb = librosa.filters.mel(sr=sample_rate_hz, n_fft=params.n_fft,
                                 n_mels=params.n_mels, fmin=params.fmin_hz,
                                 fmax=params.fmax_hz, htk=True, norm=None,
                                 dtype=np.float64)
    empty = np.flatnonzero(fb.max(axis=1) <= 0)
    if empty.size:
        raise InvalidParams(
            f"n_mels={params.n_mels} too large for n_fft={params.n_fft}: "
            f"{empty.size} empty filter(s), first at row {empty[0]}")
    return fb


# --- Spectrograms ----------------------------------------------------------------

def stft_power(clip: AudioClip, params: SpectroParams) -> np.ndarray:
    """|STFT|^2 with a periodic Hann window, [frame][bin], bins 0..n_fft/2."""
    if len(clip) < params.n_fft:
        raise EmptyInput(f"clip '{clip.source_id}' has {len(clip)} samples, "
                         f"needs at least n_fft={params.n_fft}")
    spec = librosa.stft(np.asarray(clip.samples, dtype=np.float64), n_fft=params.n_fft,
                        hop_length=params.hop, window="hann", center=False)
    return (np.abs(spec) ** 2).T


def melspectrogram_db(clip: AudioClip, params: SpectroParams) -> MelSpectrogram:
    params.validate(clip.sample_rate_hz)
    power = stft_power(clip, params)
    fb = mel_filterbank(params, clip.sample_rate_hz)
    mel_power = power @ fb.T
    values = librosa.power_to_db(mel_power, ref=1.0, amin=AMIN, top_db=params.db_floor)
    return MelSpectrogram(values=values, params=params,
                          sample_rate_hz=clip.sample_rate_hz, source_id=clip.source_id)


def energy_signal(mel: MelSpectrogram) -> EnergySignal:
    """E(i) = sum over mel bins of frame i, in dB."""
    return EnergySignal(values=mel.values.sum(axis=1),
                        frame_period_s=mel.frame_period_s,
                        source_id=mel.source_id)


# --- Serialisation ----------------------------------------------------------------

_HEADER_KEYS = ("sample_rate_hz", "n_fft", "hop", "n_mels", "fmin_hz", "fmax_hz", "db_floor")


def save_mel_csv(mel: MelSpectrogram, path: Path | str) -> Path:
    """Header line '# key=value ...' then one row per frame, row-major."""
    meta = {"sample_rate_hz": mel.sample_rate_hz, **mel.params.as_dict()}
    header = "# " + " ".join(f"{k}={meta[k]}" for k in _HEADER_KEYS)
    rows = [",".join(repr(float(v)) for v in row) for row in mel.values]
    return write_text_atomic(path, "\n".join([header, *rows]) + "\n")


def load_mel_csv(path: Path | str) -> MelSpectrogram:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines or not lines[0].startswith("# "):
        raise ParseError(f"{path}: missing melspectrogram header")
    try:
        meta = dict(tok.split("=", 1) for tok in lines[0][2:].split())
        db_floor = None if meta["db_floor"] == "None" else float(meta["db_floor"])
        params = SpectroParams(n_fft=int(meta["n_fft"]), hop=int(meta["hop"]),
                               n_mels=int(meta["n_mels"]), fmin_hz=float(meta["fmin_hz"]),
                               fmax_hz=float(meta["fmax_hz"]), db_floor=db_floor)
        values = np.array([[float(v) for v in line.split(",")] for line in lines[1:]])
        rate = int(meta["sample_rate_hz"])
    except (KeyError, ValueError) as e:
        raise ParseError(f"{path}: malformed melspectrogram CSV ({e})")
    if values.ndim != 2 or values.shape[1] != params.n_mels:
        raise ParseError(f"{path}: expected {params.n_mels} columns per frame")
    return MelSpectrogram(values=values, params=params, sample_rate_hz=rate,
                          source_id=Path(path).stem)
