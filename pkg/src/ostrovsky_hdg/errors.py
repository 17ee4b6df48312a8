"""Shared exception types.

The CLI maps these onto process exit codes, so solver code should raise
the most specific type that applies rather than bare ValueError.
"""


class ConfigurationError(ValueError):
    """Invalid user-facing configuration (bad mesh sizes, keys, regimes...)."""


class UsageError(RuntimeError):
    """API misuse: out-of-order calls, mismatched shapes, stale objects."""


class SolverError(RuntimeError):
    """Base for numerical failures during a solve."""


class SingularMatrixError(SolverError):
    def __init__(self, pivot_index, message=None):
        self.pivot_index = pivot_index
        super().__init__(message or f"zero pivot at elimination step {pivot_index}")


class SingularBlockError(SolverError):
    def __init__(self, block_index, message=None):
        self.block_index = block_index
        super().__init__(message or f"singular pivot block at block row {block_index}")


class CondensationError(SolverError):
    def __init__(self, element_index, message=None):
        self.element_index = element_index
        super().__init__(message or f"singular local system on element {element_index}")


class NewtonError(SolverError):
    """Newton iteration failed to reach tolerance."""

    def __init__(self, iterations, residual, message=None):
        self.iterations = iterations
        self.residual = residual
        super().__init__(
            message
            or f"Newton did not converge in {iterations} iterations "
            f"(last residual {residual:.3e})"
        )


class StepFailure(SolverError):
    """A time step could not be completed."""

    def __init__(self, step_index, time, cause):
        self.step_index = step_index
        self.time = time
        self.cause = cause
        super().__init__(f"step {step_index} at t={time:.6g} failed: {cause}")


class IterationDivergence(SolverError):
    """Fixed-point iteration diverged; carries the residual history."""

    def __init__(self, residual_history, message=None):
        self.residual_history = list(residual_history)
        super().__init__(
            message
            or f"iteration diverged after {len(self.residual_history)} steps "
            f"(last residual {self.residual_history[-1]:.3e})"
        )
