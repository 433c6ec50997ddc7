"""Exception types shared across the toolchain."""


class EmnistForgeError(Exception):
    """Base class for all toolchain errors."""


class FormatError(EmnistForgeError):
    """A binary container or source image violates its declared structure."""


class DecodeError(EmnistForgeError):
    """An image stream could not be decoded; the file is skipped and ledgered."""


class LayoutError(EmnistForgeError):
    """A corpus directory does not match any layout manifest pattern."""


class BlankGlyphError(EmnistForgeError):
    """A glyph carries no usable character content (blank or constant image)."""


class QuotaError(EmnistForgeError):
    """A dataset quota asks for more glyphs than a class pool holds."""


class PartitionError(EmnistForgeError):
    """A train/validation/test partition request is structurally impossible."""


class NumericError(EmnistForgeError):
    """Non-finite values reached a numeric routine."""


class BenchMismatchError(EmnistForgeError):
    """A model and a dataset disagree on dimensions or class counts."""
