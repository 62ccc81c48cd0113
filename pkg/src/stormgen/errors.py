"""Exception types shared across the package."""


class StormgenError(Exception):
    """Base class for all package-specific errors."""


class IngestionError(StormgenError):
    """Raised when a grid or field file fails validation on load."""


class FitError(StormgenError):
    """Raised when an estimator fails to converge.

    Carries the best parameters seen so far and optimizer diagnostics so a
    caller can inspect or salvage a partial fit.
    """

    def __init__(self, message, best_params=None, diagnostics=None):
        super().__init__(message)
        self.best_params = best_params
        self.diagnostics = diagnostics or {}


class FactorizationError(StormgenError):
    """Raised when a covariance matrix cannot be factorized after jitter escalation."""


class PipelineError(StormgenError):
    """Raised for user-correctable pipeline problems (missing inputs, bad config)."""
