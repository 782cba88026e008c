"""Exception hierarchy for the stmpc package."""


class StmpcError(Exception):
    """Base class for all package errors."""


class NonConvergent(StmpcError):
    """An iterative matrix equation solver did not reach its tolerance."""


class Unstable(StmpcError):
    """Synthesized closed loop is not Schur stable."""


class DimensionMismatch(StmpcError, ValueError):
    pass


class NegativeScale(StmpcError, ValueError):
    pass


class NonPSD(StmpcError, ValueError):
    pass


class OutOfRange(StmpcError, ValueError):
    pass


class EmptyPolytope(StmpcError):
    pass


class DegenerateZonotope(StmpcError):
    pass


class TooManyGenerators(StmpcError):
    pass


class NoConvergence(StmpcError):
    """A set recursion hit its iteration cap before converging."""


class EmptyTightening(StmpcError):
    """A tightened constraint set came out empty.

    Attributes
    ----------
    which : str
        Name of the set that failed, e.g. ``"Cbar"``.
    facet : int
        Row index of the binding facet of the original constraint set.
    """

    def __init__(self, which, facet, margin):
        self.which = which
        self.facet = facet
        self.margin = margin
        super().__init__(
            f"tightened set {which} is empty: facet {facet} offset becomes {margin:.6g}"
        )


class NoFiniteDetermination(StmpcError):
    pass


class QPInfeasible(StmpcError):
    pass


class QPMaxIterations(StmpcError):
    pass


class InfeasibleEvenRelaxed(StmpcError):
    pass


class MissingHistory(StmpcError):
    pass


class ConfigError(StmpcError, ValueError):
    """Invalid experiment configuration; ``path`` names the offending field."""

    def __init__(self, path, message):
        self.path = path
        super().__init__(f"{path}: {message}")
