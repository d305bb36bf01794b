"""Exception hierarchy shared across the toolkit.

Every error raised on purpose derives from SpecmatchError so callers (and the
CLI) can distinguish our failures from genuine bugs. Configuration and input
problems derive from InputError, numerical breakdowns from NumericalError;
the CLI maps these to exit codes 1 and 2 respectively.
"""


class SpecmatchError(Exception):
    """Base class for all toolkit errors."""


class InputError(SpecmatchError):
    """Bad input data or configuration (CLI exit code 1)."""


class NumericalError(SpecmatchError):
    """Numerical failure during computation (CLI exit code 2)."""


# -- mesh loading / validation ------------------------------------------------

class ParseError(InputError):
    """Malformed mesh file or malformed mesh data."""


class NonManifoldError(InputError):
    """An edge is shared by more than two faces."""


class DegenerateFaceError(InputError):
    """A face has repeated vertices or (near-)zero area."""


class DisconnectedMeshError(InputError):
    """The mesh graph has unreachable vertices."""


# -- spectral -----------------------------------------------------------------

class ConvergenceError(NumericalError):
    """The iterative eigensolver failed to converge to tolerance."""


class FirstEigenvalueError(InputError):
    """The zero eigenvalue has multiplicity > 1 (disconnected mesh)."""


# -- basis / features / maps --------------------------------------------------

class GainUnderflowError(NumericalError):
    """A basis gain is too small for its reciprocal to be representable."""


class DimensionMismatchError(InputError):
    """Operands have incompatible shapes or truncation orders."""


class DeadChannelError(InputError):
    """A feature column has zero variance and carries no information."""


class SingularSystemError(NumericalError):
    """A linear system in the functional-map solver is numerically singular."""


class InvalidRangeError(InputError):
    """A truncation schedule (k_init, k_end, step) is out of range."""


class NonFiniteLossError(NumericalError):
    """The training loss or one of its gradients is NaN or infinite."""

    def __init__(self, message, iteration=None):
        super().__init__(message)
        self.iteration = iteration


class PipelineError(SpecmatchError):
    """A pipeline stage failed; wraps the original error with a stage tag."""

    def __init__(self, stage, original):
        super().__init__(f"stage '{stage}' failed: {original}")
        self.stage = stage
        self.original = original
