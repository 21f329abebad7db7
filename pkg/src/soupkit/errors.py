"""Exception hierarchy shared by all soupkit modules."""


class SoupkitError(Exception):
    pass


class FormatError(SoupkitError, ValueError):
    """Malformed checkpoint container, TSV file or gazetteer file."""


class LengthError(FormatError):
    """Payload shorter (or longer) than the declared layout."""


class ValidityError(SoupkitError, ValueError):
    """Structurally valid data holding forbidden values (NaN, Inf, bad shapes)."""


class CompatibilityError(SoupkitError, ValueError):
    """Architectures or dimensions that cannot be combined."""


class DomainError(SoupkitError, ValueError):
    """Argument outside the mathematical domain of an operation."""
