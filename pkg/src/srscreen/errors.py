"""Exception types shared across the pipeline."""


class SrScreenError(Exception):
    """Base class for all pipeline errors."""


class InputError(SrScreenError):
    """Bad user-supplied input (files, configs, CLI arguments)."""


class ConfigError(SrScreenError):
    """Invalid configuration value (non-monotone cutpoints, size <= overlap, ...)."""


class NotFoundError(SrScreenError):
    """Referenced entity (article id, run id) does not exist."""


class BackendUnavailableError(SrScreenError):
    """Model backend exhausted its retries; carries the last cause."""

    def __init__(self, message, cause=None):
        super().__init__(message)
        self.cause = cause
