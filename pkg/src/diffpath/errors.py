"""Typed error hierarchy.

Format errors are deliberately fine-grained so loaders can reject each
class of malformed input distinctly (bad magic vs. truncation vs. a
header that lies about shapes).
"""


class DiffpathError(Exception):
    """Base class for every error raised by this package."""


class ShapeError(DiffpathError, ValueError):
    """Operand shapes disagree with an operation's contract."""


class FormatError(DiffpathError, ValueError):
    """Base class for malformed file content."""


class BadMagicError(FormatError):
    """File does not start with the expected magic bytes."""


class UnsupportedVersionError(FormatError):
    """Container version is not one this reader understands."""


class TruncatedFileError(FormatError):
    """File ends before the declared payload does."""


class HeaderError(FormatError):
    """Header is unparseable or internally inconsistent."""


class ShapeChainError(FormatError):
    """Declared architecture does not chain shapes input -> logits."""


class CountMismatchError(FormatError):
    """Paired files declare different record counts."""


class TraceError(DiffpathError, LookupError):
    """A forward-trace record needed by an operation is absent or wrong-kinded."""


class LayerNotFoundError(DiffpathError, KeyError):
    """Requested layer does not exist or is not eligible for the operation."""
