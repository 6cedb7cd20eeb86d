"""Exception types shared across the pipeline."""


class ValidationError(ValueError):
    """Bad configuration, geometry, or input data."""


class GazeParseError(ValidationError):
    """Malformed gaze record; carries the offending line number."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class EmptyInputError(ValidationError):
    """Input stream produced zero valid gaze samples."""


class SolverError(RuntimeError):
    """Convex solve failed; carries the final residuals when available."""

    def __init__(self, message: str, primal_residual: float | None = None,
                 dual_residual: float | None = None):
        self.primal_residual = primal_residual
        self.dual_residual = dual_residual
        if primal_residual is not None:
            message += (f" (primal residual {primal_residual:.3e},"
                        f" dual residual {dual_residual:.3e})")
        super().__init__(message)
