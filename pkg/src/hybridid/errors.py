"""Exception types raised by the identification pipeline."""


class IdentificationError(RuntimeError):
    """Base class for failures of the identification algorithms."""


class NoConsensusError(IdentificationError):
    """No set of rows is consistent with a single subsystem at the
    current noise threshold ("no consensus subsystem")."""


class ModeBudgetError(IdentificationError):
    """The mode budget was exhausted while unexplained rows remain."""


class InseparableTransitionError(IdentificationError):
    """A transition's positive and negative examples coincide in the
    predicate dictionary's features ("transition not expressible")."""
