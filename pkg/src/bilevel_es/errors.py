"""Exception hierarchy. CLI exit codes: 1 config, 2 runtime, 3 IO."""


class BilevelEsError(Exception):
    """Base class for all package errors."""


class ConfigError(BilevelEsError):
    """Invalid configuration value, file, or CLI argument."""


class InvariantError(BilevelEsError):
    """Shape/length mismatch or broken internal invariant."""


class EvaluationError(BilevelEsError):
    """A fitness evaluation returned a non-finite value or failed.

    `index` identifies the offending individual (or lookahead repetition).
    """

    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index


class StateError(BilevelEsError):
    """Operation called in an invalid state (e.g. empty replay buffer)."""


class NumericalError(BilevelEsError):
    """Unrecoverable numerical failure (e.g. non-PD kernel after max jitter)."""


class CheckpointError(BilevelEsError):
    """Checkpoint is corrupt, truncated, or incompatible."""
