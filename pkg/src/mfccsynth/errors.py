"""Exception hierarchy shared by all modules."""


class VocoderError(Exception):
    """Base class for all errors raised by this package."""


class ContractError(VocoderError):
    """An argument violates an operation's preconditions (bad shapes, ranges)."""


class FormatError(VocoderError):
    """A file does not conform to one of the binary container formats."""


class InvariantError(VocoderError):
    """An internal invariant was violated; indicates a bug upstream."""
