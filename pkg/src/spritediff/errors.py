"""Exception types shared across the package."""


class SpriteDiffError(Exception):
    """Base class for all package errors."""


class ValidationError(SpriteDiffError):
    """An argument or field is outside its documented range/shape."""


class NoClassNounError(SpriteDiffError):
    """Prompt contains no known class noun to anchor the identifier."""


class EmptyMaskError(SpriteDiffError):
    """Object mask has no foreground pixels."""


class PromptTooLongError(SpriteDiffError):
    """Tokenized prompt exceeds the encoder's maximum length."""


class ChecksumError(SpriteDiffError):
    """Checkpoint payload does not match its recorded checksums."""


class NumericalError(SpriteDiffError):
    """Non-finite values encountered inside a forward pass."""


class ContractViolationError(SpriteDiffError):
    """A structural contract was broken (frozen weights moved, etc.)."""


class ProbeQualityError(SpriteDiffError):
    """Attribute probe failed its held-out accuracy floor."""


class GradientCheckError(SpriteDiffError):
    """Finite-difference verification exceeded tolerance."""
