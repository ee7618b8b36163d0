class BasisMismatch(ValueError):
    """Fields from different eigenbases were combined."""


class HypothesisError(ValueError):
    """An experiment's standing assumptions do not hold for its parameters."""


class ProvenanceMismatch(ValueError):
    """Trajectories driven by different noise realisations were compared."""


class NewtonDivergence(RuntimeError):
    """The implicit step did not reach its residual tolerance."""

    def __init__(self, message: str, step: int | None = None, residual: float | None = None):
        super().__init__(message)
        self.step = step
        self.residual = residual


class ConfigError(ValueError):
    pass
