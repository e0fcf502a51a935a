"""Exception types raised across the toolkit."""


class FlarebenchError(Exception):
    """Base class for every error raised by flarebench."""


class InvalidPairError(FlarebenchError, ValueError):
    """Raster and bitmap are not co-registered."""


class EmptyRoiError(FlarebenchError, ValueError):
    """The bitmap marks no active-region pixel."""


class ContractViolation(FlarebenchError, ValueError):
    """An operation was called outside its precondition."""


class BoundsError(FlarebenchError, IndexError):
    """A window does not fit inside its table."""


class WindowTooSmallError(FlarebenchError, ValueError):
    """Raster is smaller than the selection kernel; pad it first."""


class ParameterError(FlarebenchError, ValueError):
    """A numeric parameter is out of its allowed domain."""


class MisuseError(FlarebenchError, ValueError):
    """An operation was applied to the wrong kind of record."""


class UndefinedScoreError(FlarebenchError, ArithmeticError):
    """A skill score is undefined for a degenerate evaluation set."""


class DuplicateIdError(FlarebenchError, ValueError):
    """Two manifest rows share an id."""


class ParseError(FlarebenchError, ValueError):
    """A text field could not be parsed.

    ``row`` and ``field`` locate the problem when it comes from a file.
    """

    def __init__(self, message, *, row=None, field=None):
        self.row = row
        self.field = field
        where = []
        if row is not None:
            where.append(f"row {row}")
        if field is not None:
            where.append(f"field {field!r}")
        if where:
            message = f"{', '.join(where)}: {message}"
        super().__init__(message)


class BundleFormatError(ParseError):
    """A patch bundle on disk is malformed."""


class LengthMismatchError(BundleFormatError):
    """A payload's byte length disagrees with its declared dimensions."""


class InvalidCodeError(BundleFormatError):
    """A bitmap payload holds a code outside {0, 1, 2, 33, 34}."""
