"""Exception hierarchy. Each family carries a short category used by the CLI."""


class PhqFusionError(Exception):
    category = "internal"
    exit_code = 1


class DimensionError(PhqFusionError, ValueError):
    category = "dimension"
    exit_code = 6


class NumericError(PhqFusionError, ValueError):
    category = "numeric"
    exit_code = 6


class ConfigError(PhqFusionError, ValueError):
    category = "config"
    exit_code = 2


class DataError(PhqFusionError, ValueError):
    category = "data"
    exit_code = 3


class ProviderError(PhqFusionError, RuntimeError):
    category = "provider"
    exit_code = 4


class ProviderNetworkError(ProviderError):
    """Raised after all retry attempts failed; ``attempts`` holds the log."""

    def __init__(self, message, attempts=()):
        super().__init__(message)
        self.attempts = list(attempts)


class ProviderParseError(ProviderError):
    pass


class ProviderEmptyResponseError(ProviderError):
    pass


class ModelError(PhqFusionError, ValueError):
    category = "model"
    exit_code = 5


class StageError(PhqFusionError):
    """Wraps a failure inside one pipeline stage."""

    category = "stage"
    exit_code = 7

    def __init__(self, stage, cause):
        super().__init__(f"stage {stage} failed: {cause}")
        self.stage = stage
        self.cause = cause
