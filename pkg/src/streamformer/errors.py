"""Exception types shared across the package.

Contract violations (bad shapes, bad ids, malformed text) raise ContractError
subclasses; blown enumeration budgets raise ResourceError.  The command line
maps ContractError to exit code 2 and ResourceError to exit code 3.
"""


class ContractError(ValueError):
    """An argument or state violates a documented precondition."""


class DimensionError(ContractError):
    """Array shapes disagree with an operation's contract."""


class VocabularyError(ContractError):
    """A token id falls outside the vocabulary or the id layout is broken."""


class ParseError(ContractError):
    """Malformed formula or trace text.  Carries the offending position."""

    def __init__(self, message, position):
        super().__init__(f"{message} (at position {position})")
        self.position = position


class InvalidTraceError(ContractError):
    """A trace step constraint is unsatisfiable or structurally unusable."""


class ResourceError(RuntimeError):
    """An enumeration bound was exceeded; the result is not computable here."""
