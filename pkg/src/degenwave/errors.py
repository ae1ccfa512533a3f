"""Exception hierarchy shared by all degenwave modules."""


class DegenwaveError(Exception):
    """Base class; the CLI converts any subclass into a JSON error record."""

    kind = "error"

    def to_dict(self):
        return {"error": self.kind, "message": str(self)}


class DomainError(DegenwaveError, ValueError):
    kind = "domain"


class WeightError(DegenwaveError, ValueError):
    kind = "invalid-weight"


class ClassificationError(DegenwaveError, ValueError):
    kind = "classification-failure"


class InvalidExponentError(DegenwaveError, ValueError):
    kind = "invalid-exponent"


class MeshError(DegenwaveError, ValueError):
    kind = "mesh"


class StabilityError(DegenwaveError):
    kind = "stability"


class SolverError(DegenwaveError):
    """Linear or iterative solve failed; carries the last residual(s)."""

    kind = "solver"

    def __init__(self, message, residuals=None):
        super().__init__(message)
        self.residuals = list(residuals) if residuals is not None else []

    def to_dict(self):
        out = super().to_dict()
        out["residuals"] = [float(r) for r in self.residuals]
        return out


class ConfigError(DegenwaveError, ValueError):
    """Configuration problems; ``violations`` lists every problem found."""

    kind = "config"

    def __init__(self, violations):
        if isinstance(violations, str):
            violations = [violations]
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))

    def to_dict(self):
        out = super().to_dict()
        out["violations"] = self.violations
        return out
