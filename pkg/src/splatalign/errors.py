"""Exception hierarchy shared by all modules."""


class SplatAlignError(Exception):
    """Base class for every error raised by this package."""


class RotationNearPi(SplatAlignError):
    """Rotation log requested too close to the 180 degree singularity."""


class SpecInvalid(SplatAlignError):
    """Synthetic benchmark spec has an out-of-range field."""


class FormatError(SplatAlignError):
    """Malformed binary scene file. Carries the byte offset of the problem."""

    def __init__(self, message: str, offset: int | None = None):
        if offset is not None:
            message = f"{message} (byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class DimensionMismatch(SplatAlignError):
    """Declared feature dimension disagrees with the stored properties."""


class ShapeMismatch(SplatAlignError):
    """Two images that must share a shape do not."""


class EmptyActiveSet(SplatAlignError):
    """A gradient was requested over an empty set of images."""


class EmptyMetaImage(SplatAlignError):
    """Alignment requested for a bundle with no images."""


class NonFiniteGradient(SplatAlignError):
    """The objective produced a NaN or infinite gradient."""

    def __init__(self, message: str, iteration: int | None = None):
        if iteration is not None:
            message = f"{message} (iteration {iteration})"
        super().__init__(message)
        self.iteration = iteration


class DecoderShapeMismatch(SplatAlignError):
    """Feature decoder dimensions do not match the scene or the targets."""


class NoTargets(SplatAlignError):
    """Feature distillation requested with no posed target images."""


class LengthMismatch(SplatAlignError):
    """Paired rotation lists have different lengths."""


class ParseError(SplatAlignError):
    """Text parse failure. Carries a 1-based line number."""

    def __init__(self, message: str, line: int | None = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class UnsupportedCameraModel(SplatAlignError):
    """COLMAP camera model other than PINHOLE / SIMPLE_PINHOLE."""

    def __init__(self, model: str, line: int | None = None):
        msg = f"unsupported camera model {model!r}"
        if line is not None:
            msg = f"line {line}: {msg}"
        super().__init__(msg)
        self.model = model
        self.line = line


class UnknownCameraId(SplatAlignError):
    """images.txt record references a camera id absent from cameras.txt."""


class BadMagic(SplatAlignError):
    """Feature-map file does not start with the FMAP magic."""


class VersionUnsupported(SplatAlignError):
    """Feature-map file has an unknown format version."""


class TruncatedPayload(SplatAlignError):
    """Feature-map payload is shorter than the header promises."""

    def __init__(self, expected: int, actual: int):
        super().__init__(f"expected {expected} payload bytes, found {actual}")
        self.expected = expected
        self.actual = actual
