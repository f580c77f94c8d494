"""Exception types shared across the package."""

from __future__ import annotations


class ImpToolsError(Exception):
    """Base class for all package errors."""


class ModelError(ImpToolsError, ValueError):
    """A model violates a structural invariant (stochasticity, closure, reachability)."""


class NonErgodic(ModelError):
    """The reachable transition graph is not a single aperiodic recurrent class."""


class UnknownSymbol(ImpToolsError, KeyError):
    pass


class UnknownLabel(ImpToolsError, KeyError):
    pass


class NotMemoryless(ImpToolsError, ValueError):
    pass


class ZeroMassPart(ImpToolsError, ValueError):
    pass


class DominationPresent(ImpToolsError):
    """Compatible-partition enumeration requested for a switch with domination."""


class StructureMismatch(ImpToolsError, ValueError):
    pass


class SearchSpaceTooLarge(ImpToolsError):
    pass


class RejectionBudgetExceeded(ImpToolsError):
    pass
