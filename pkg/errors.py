"""
errors.py — error taxonomy

Library modules raise these; pipeline.py is the only place that catches
them and turns them into a one-line error + exit code.
"""


class TriageError(Exception):
    """Base for every error the toolkit raises on purpose."""


class ParseError(TriageError):
    """Malformed WAV header, corrupt model file, unreadable CSV row."""


class UnsupportedFormat(TriageError):
    """Readable container, but an encoding we refuse (e.g. ADPCM)."""


class EmptyInput(TriageError):
    """Not enough samples / frames / rows to compute anything."""


class InvalidParams(TriageError):
    """Configuration values that can never work."""


class InvalidInput(TriageError):
    """Data that breaks an operation's precondition."""


class BudgetError(TriageError):
    """Training time budget ran out before any candidate finished."""


class ManifestError(TriageError):
    """A manifest entry could not be processed. Names the entry."""

    def __init__(self, entry_id: str, message: str):
        super().__init__(f"entry '{entry_id}': {message}")
        self.entry_id = entry_id
        self.detail = message

    def __reduce__(self):
        # joblib workers pickle exceptions back to the parent
        return type(self), (self.entry_id, self.detail)
