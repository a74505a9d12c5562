"""Shared exception types."""


class ContractViolation(ValueError):
    """An operation was called with arguments that break its contract."""


class ConfigurationError(ValueError):
    """A config file, scenario spec, or run setup is invalid."""


class TrainingError(RuntimeError):
    """Optimization diverged or otherwise failed; message carries diagnostics."""


class CheckpointError(ValueError):
    """A checkpoint file failed validation; message names the offending field."""
