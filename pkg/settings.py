"""
settings.py — configuration layer

Resolution order, highest first:
  1. command-line flags           (applied by pipeline.py)
  2. --config FILE                key=value, read with dotenv_values
  3. environment / .env           GAIT_<NAME>, loaded with load_dotenv
  4. DEFAULTS below

Config files use the bare key (WINDOW_S=3.0); the environment uses the
prefixed form (GAIT_WINDOW_S=3.0) so it can't collide with anything else.
"""

import os
from pathlib import Path

from dotenv import dotenv_values, load_dotenv

from errors import InvalidParams

load_dotenv(Path(__file__).parent / ".env")

_ENV_PREFIX = "GAIT_"

# name -> (type, default)
DEFAULTS: dict[str, tuple[type, object]] = {
    "WINDOW_S":             (float, 3.0),
    "HOP_S":                (float, 1.5),
    "N_FFT":                (int,   1024),
    "HOP":                  (int,   256),
    "N_MELS":               (int,   64),
    "FMIN_HZ":              (float, 40.0),
    "FMAX_HZ":              (float, 8000.0),
    "DB_FLOOR":             (float, 80.0),
    "MIN_PROMINENCE_RATIO": (float, 0.05),
    "SMOOTH_FRAMES":        (int,   0),
    "FOLDS":                (int,   10),
    "SEED":                 (int,   0),
    "BUDGET_S":             (float, 300.0),
    "THRESHOLD":            (float, 0.5),
    "JOBS":                 (int,   os.cpu_count() or 1),
    "TEST_FRACTION":        (float, 0.2),
}


def _coerce(name: str, kind: type, raw: str) -> object:
    try:
        return kind(raw)
    except (TypeError, ValueError):
        raise InvalidParams(f"config value {name}={raw!r} is not a valid {kind.__name__}")


def load_settings(config_path: Path | str | None = None) -> dict[str, object]:
    """Return every known setting, resolved from file > environment > default."""
    file_values: dict[str, str | None] = {}
    if config_path is not None:
        path = Path(config_path)
        if not path.exists():
            raise InvalidParams(f"config file not found: {path}")
        file_values = dotenv_values(path)

    resolved: dict[str, object] = {}
    for name, (kind, default) in DEFAULTS.items():
        raw = file_values.get(name)
        if raw is None:
            raw = os.getenv(_ENV_PREFIX + name)
        resolved[name] = default if raw is None else _coerce(name, kind, raw)
    return resolved
