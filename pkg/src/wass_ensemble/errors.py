"""Exception hierarchy.

Every failure mode the library can signal has its own class; the class
name doubles as the stable error identifier the CLI prints to stderr.
"""


class WassEnsembleError(Exception):
    """Base class for all library errors."""

    @property
    def name(self) -> str:
        return type(self).__name__


# histogram / weight validation
class NegativeMass(WassEnsembleError):
    """A histogram contains a negative entry."""


class NaNEntry(WassEnsembleError):
    """A histogram contains a NaN or infinite entry."""


class NormalizationMismatch(WassEnsembleError):
    """Histogram is flagged normalized but its mass does not sum to 1."""


class ZeroTotalMass(WassEnsembleError):
    """Cannot normalize a histogram whose total mass is zero."""


class InvalidWeights(WassEnsembleError):
    """Ensemble weights must be positive and sum to 1."""


class SupportMismatch(WassEnsembleError):
    """Operands are defined on different supports."""


# ground metric construction
class MissingPoints(WassEnsembleError):
    """The support carries no embedding points."""


class DimensionMismatch(WassEnsembleError):
    """Embedding points have inconsistent dimensions."""


class UnderflowAllZeroRow(WassEnsembleError):
    """A kernel row underflowed to all zeros at 64-bit precision."""


class AsymmetricAdjacency(WassEnsembleError):
    """Graph adjacency matrix is not symmetric."""


class EmptyPosteriors(WassEnsembleError):
    """No posterior vectors supplied for the diagonal kernel."""


class EmptyColumn(WassEnsembleError):
    """A table column has no nonzero entry to normalize."""


class NonPositiveScore(WassEnsembleError):
    """Performance scores must be strictly positive."""


# solvers
class MissingKernels(WassEnsembleError):
    """The operation requires per-model kernels but none were supplied."""


class NotNormalizedInput(WassEnsembleError):
    """The balanced solver requires normalized input histograms."""


class DivisionUnderflow(WassEnsembleError):
    """A scaling denominator collapsed to zero (or NaN) after clamping."""


class ExponentOverflow(WassEnsembleError):
    """The (lambda+eps)/eps power overflowed; eps is too small for lambda."""


class ZeroColumn(WassEnsembleError):
    """A coupling column carries no mass, so attribution is undefined."""


class MissingCouplings(WassEnsembleError):
    """The result was computed without materialized couplings."""


# diagnostics / evaluation
class NotNormalized(WassEnsembleError):
    """The operation requires a normalized histogram."""


class EmptyDataset(WassEnsembleError):
    """No samples to evaluate."""


# file ingestion
class InputFormatError(WassEnsembleError):
    """An input file could not be parsed."""
