"""Exception types shared across the package.

Kept in one module so that market/flow/solver/extract/reduction can raise each
other's failure modes without circular imports.
"""


class MarketValidationError(ValueError):
    """An instance violates the market model invariants."""


class AgentLikesNothing(MarketValidationError):
    def __init__(self, agent: int):
        self.agent = agent
        super().__init__(f"agent {agent} has zero utility for every good")


class GoodLikedByNobody(MarketValidationError):
    def __init__(self, good: int):
        self.good = good
        super().__init__(f"good {good} has zero utility for every agent")


class GoodUnowned(MarketValidationError):
    def __init__(self, good: int):
        self.good = good
        super().__init__(f"good {good} has zero total endowment")


class NotIrreducible(MarketValidationError):
    """The interest/ownership digraph is not strongly connected."""


class OddN(ValueError):
    """Chain instances are only defined for even n >= 4."""


class BadU(ValueError):
    """Chain instances need an integer utility parameter U >= 2."""


class TooSmallN(ValueError):
    """Block instances need n >= 9 so that a prime below n^(1/3) exists."""


class GivingUp(RuntimeError):
    """Random-instance resampling budget exhausted."""


class NoSurplus(RuntimeError):
    """Set selection was called although every agent is already cleared."""


class InvalidFactor(ValueError):
    """A price-update factor outside (1, x_max] was requested."""


class InvariantViolation(AssertionError):
    """A run-long solver invariant failed; indicates a bug, not bad input."""


class RankDeficient(RuntimeError):
    """The canonical terminal system is singular (premature termination)."""


class CertificationFailed(RuntimeError):
    """Candidate equilibrium prices failed the independent certificate."""

    def __init__(self, message: str, report=None):
        super().__init__(message)
        self.report = report


class InconsistentLift(RuntimeError):
    """Special prices do not agree across owners of one original good."""


class NoEquilibriumFound(RuntimeError):
    """Support enumeration found no feasible support (model violation)."""
