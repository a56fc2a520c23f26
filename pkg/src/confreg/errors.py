"""Exception hierarchy shared across the package."""


class ConfregError(Exception):
    """Base class for all package errors."""


class ConfigurationError(ConfregError):
    """Invalid configuration: bad layouts, schedules, or missing auxiliaries."""


class InputError(ConfregError):
    """Malformed call arguments: dimension mismatches, out-of-range indices."""


class NumericError(ConfregError):
    """Non-finite inputs or numerically degenerate intermediate values."""


class DataError(ConfregError):
    """Bad dataset contents or files: parse failures, label range, missing ids."""


class MetricError(ConfregError):
    """Metric computed over an empty or invalid selection."""


class UsageError(ConfregError):
    """Command-level misuse: unknown method, bad fractions, incompatible runs.

    Mapped to exit code 2 by the CLI.
    """


class StageError(ConfregError):
    """A pipeline stage failed; carries the stage name for diagnostics.

    Mapped to exit code 1 by the CLI.
    """

    def __init__(self, stage: str, message: str):
        super().__init__(f"stage '{stage}' failed: {message}")
        self.stage = stage
