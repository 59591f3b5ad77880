"""Exception hierarchy shared by the library and the CLI."""


class RankMedianError(Exception):
    """Base class for all library errors."""


class InvalidInput(RankMedianError, ValueError):
    """Malformed permutation or argument."""


class DimensionMismatch(InvalidInput):
    pass


class NotTransitiveError(InvalidInput):
    """Pairwise matrix fails the (strict) stochastic transitivity requirement."""


class SchemaError(RankMedianError):
    """Feature vectors or datasets that do not conform to a schema."""


class OracleScaleExceeded(RankMedianError):
    """Exact enumeration was requested above the supported item count."""


class BudgetExceeded(RankMedianError):
    """A materialization would exceed its configured cell budget."""
