"""Exception hierarchy shared by all modules.

Every error carries an ``exit_code`` so the CLI can map failures onto its
contract: 3 for mathematical degeneracies, 4 for numerical failures.
"""


class DDEError(Exception):
    exit_code = 4


class MathematicalDegeneracy(DDEError):
    exit_code = 3


class NumericalFailure(DDEError):
    exit_code = 4


class DegenerateLambda(MathematicalDegeneracy):
    """mu = 0: the formal half-power machinery does not apply."""


class DegenerateShift(MathematicalDegeneracy):
    """Shift a is congruent to 0 or a half period of the lattice."""


class LatticePoint(MathematicalDegeneracy):
    pass


class PolePoint(MathematicalDegeneracy):
    pass


class AsymptoticDivergence(NumericalFailure):
    pass


class OutOfRegion(NumericalFailure):
    pass


class NearPole(NumericalFailure):
    pass


class StepFailure(NumericalFailure):
    pass


class NewtonStall(NumericalFailure):
    pass


class NonIntegerN(NumericalFailure):
    pass


class AnalyticCenter(DDEError):
    """Raised (and usually caught) when the coefficient is regular at a point."""


class ContourCrossesPole(NumericalFailure):
    pass


class OutsideSigma(NumericalFailure):
    pass


class RayHitsPole(MathematicalDegeneracy):
    pass


class NonconvergentTail(NumericalFailure):
    pass


class TailBoundExceeded(NumericalFailure):
    pass


class KernelGrowth(NumericalFailure):
    pass


class NoContraction(NumericalFailure):
    pass


class ConfigError(DDEError):
    exit_code = 2
