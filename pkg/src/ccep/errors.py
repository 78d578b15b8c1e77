"""Exception hierarchy shared by all modules.

Every error carries a ``kind`` attribute (the class name by default) so the
Monte Carlo engine can tally failures and the CLI can map them to exit codes.
"""

from __future__ import annotations


class CcepError(Exception):
    """Base class for all package errors."""

    @property
    def kind(self) -> str:
        return type(self).__name__

    @property
    def kinds(self) -> list[str]:
        """This error's class name followed by its package base classes."""
        return [c.__name__ for c in type(self).__mro__
                if issubclass(c, CcepError) and c is not CcepError]


# -- numerical / identification ---------------------------------------------


class RankDeficient(CcepError):
    """A matrix that must have full column rank does not.

    Parameters
    ----------
    matrix : str
        Name of the offending matrix (e.g. ``"Psi_hat"``, ``"sum Xdd'Xdd"``).
    condition : float
        Condition number (largest over smallest singular value).
    rank, expected : int
        Numerical rank found and rank required.
    """

    def __init__(self, matrix: str, condition: float = float("nan"),
                 rank: int | None = None, expected: int | None = None,
                 detail: str = ""):
        self.matrix = matrix
        self.condition = condition
        self.rank = rank
        self.expected = expected
        msg = f"RankDeficient: {matrix} is numerically rank-deficient"
        if rank is not None and expected is not None:
            msg += f" (rank {rank} < {expected})"
        msg += f"; condition number = {condition:.3g}"
        if detail:
            msg += f"; {detail}"
        super().__init__(msg)


class TooFewPeriods(CcepError):
    """The number of periods is too small for the requested partialling."""


class TooManyProxies(TooFewPeriods):
    """The proxy matrix has at least as many columns as there are periods."""


class DimensionMismatch(CcepError):
    """Array shapes do not line up."""


# -- data ---------------------------------------------------------------------


class PanelError(CcepError):
    """Invalid or malformed panel data."""


class UnbalancedPanel(PanelError):
    pass


class MissingValue(PanelError):
    pass


class DuplicateObservation(PanelError):
    pass


class SchemaMismatch(PanelError):
    pass


# -- configuration --------------------------------------------------------------


class InvalidConfig(CcepError):
    """A configuration document or object is inconsistent."""
