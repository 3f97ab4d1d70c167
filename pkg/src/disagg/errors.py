"""Exception types shared across the toolkit."""


class DisaggError(Exception):
    """Base class for all toolkit errors."""


class ValidationError(DisaggError, ValueError):
    """Invalid data, parameters, or file contents."""


class UnstableModelError(ValidationError):
    """A device model (or fitted polynomial) is not strictly stable."""

    def __init__(self, spectral_radius: float, context: str = "model"):
        self.spectral_radius = spectral_radius
        super().__init__(
            f"unstable {context}: spectral radius {spectral_radius:.6g} >= 1"
        )


class RankDeficientDataError(ValidationError):
    """Regression data does not excite enough modes for the requested order."""


class DegenerateFitError(ValidationError):
    """The step-response template is identically zero over the fit window."""
