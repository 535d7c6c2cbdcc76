"""Exception types shared across the package."""


class PreconditionError(ValueError):
    """An argument violates a documented precondition."""


class ResourceLimitError(PreconditionError):
    """A size/level parameter exceeds the memory guard."""


class MeshAssemblyError(RuntimeError):
    """FEM assembly hit a degenerate element; carries the face index."""

    def __init__(self, message, face_index=None):
        super().__init__(message)
        self.face_index = face_index


class ConvergenceError(RuntimeError):
    """An iterative solve failed to reach its tolerance; carries the residual."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class StagnationError(RuntimeError):
    """Line search could not decrease the objective; carries the last record."""

    def __init__(self, message, record=None):
        super().__init__(message)
        self.record = record


class DegenerateElementsError(RuntimeError):
    """Elements too degenerate to treat as immersed; lists the offenders."""

    def __init__(self, message, elements=()):
        super().__init__(message)
        self.elements = list(elements)


class NumericError(RuntimeError):
    """A numerical routine (quadrature, root finder, eigensolver) failed."""


class InvariantViolationError(RuntimeError):
    """Internal data no longer satisfies a structural invariant."""


class InconsistentComplexError(ValueError):
    """Boundary data fails d d = 0; carries the offending degree pair."""

    def __init__(self, message, degrees=None):
        super().__init__(message)
        self.degrees = degrees


class ClosureViolationError(ValueError):
    """Boundary maps a trivial-action generator into the nontrivial block."""


class ConfigError(ValueError):
    """Experiment configuration is malformed; carries field diagnostics."""

    def __init__(self, message, diagnostics=()):
        super().__init__(message)
        self.diagnostics = list(diagnostics)
