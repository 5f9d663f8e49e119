"""Exception types shared across the package."""


class ConfigurationError(ValueError):
    """Invalid parameters or mismatched inputs."""


class NoBracket(ValueError):
    """A root search interval does not contain a sign change."""


class NonIntegrableRegime(ValueError):
    """Operation needs the integrable exponent range."""


class NotApplicable(ValueError):
    """A check's hypotheses are not met by its inputs."""


class NewtonDiverged(RuntimeError):
    """Newton iteration failed inside one implicit step."""


class SolverFailure(RuntimeError):
    """Time integration could not continue."""

    def __init__(self, message, t=None):
        super().__init__(message if t is None else f"{message} (t={t!r})")
        self.t = t


class NotDecaying(ValueError):
    """Snapshot maxima are not decreasing over the fit window."""


class Blowup(RuntimeError):
    """A shooting trajectory grew without bound."""


class NoSignChange(ValueError):
    """Shot classification does not flip across the search interval."""
