"""Exception types raised across the toolkit."""


class ODKError(Exception):
    """Base class for all toolkit errors."""


class DimensionMismatch(ODKError):
    pass


class NonHermitianChoi(ODKError):
    pass


class NegativeChoi(ODKError):
    pass


class NotTracePreserving(ODKError):
    pass


class ZeroInput(ODKError):
    pass


class TraceNotAnnihilated(ODKError):
    pass


class NotHermiticityPreserving(ODKError):
    pass


class SingularSteadyState(ODKError):
    pass


class NonPSDSpectralData(ODKError):
    pass


class DetailedBalanceViolated(ODKError):
    pass


class NegativeRate(ODKError):
    pass


class NotAProbabilityVector(ODKError):
    pass


class NonStochasticJumpMatrix(ODKError):
    pass


class SeriesNotConverged(ODKError):
    pass


class InvalidSource(ODKError):
    pass


class SingularIntermediate(ODKError):
    pass


class StepSizeTooCoarse(ODKError):
    pass


class SingularMap(ODKError):
    def __init__(self, msg, t_star=None, kernel_dim=None):
        super().__init__(msg)
        self.t_star = t_star
        self.kernel_dim = kernel_dim


class InvalidRates(ODKError):
    pass


class NonPrimeDimension(ODKError):
    pass


class CPViolated(ODKError):
    def __init__(self, msg, t_first=None, min_eig=None):
        super().__init__(msg)
        self.t_first = t_first
        self.min_eig = min_eig


class VolterraNotConverged(ODKError):
    pass


class SingularA(ODKError):
    pass


class NonPSDDecoherence(ODKError):
    pass


class ZeroDenominator(ODKError):
    pass


class BadWeights(ODKError):
    pass


class PairInvalid(ODKError):
    pass


class SeriesDiverged(ODKError):
    pass


class ResolventSingular(ODKError):
    pass


class NotConverged(ODKError):
    pass


class TraceDrift(ODKError):
    pass


class SupportViolation(ODKError):
    pass


class NonDifferentiable(ODKError):
    pass


class SingularState(ODKError):
    pass


class DimensionTooLarge(ODKError):
    pass


class SingularPropagator(ODKError):
    pass


class ZeroProbabilityConditioning(ODKError):
    pass


class ScenarioError(ODKError):
    """Malformed scenario or input file; carries the offending field path."""

    def __init__(self, msg, path=""):
        super().__init__(f"{path}: {msg}" if path else msg)
        self.path = path
