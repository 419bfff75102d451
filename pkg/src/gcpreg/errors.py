"""Exception hierarchy shared by all gcpreg modules."""


class RegistrationError(Exception):
    """Base class for every error raised by gcpreg."""


class OutOfBounds(RegistrationError):
    pass


class SizeMismatch(RegistrationError):
    pass


class TooSmall(RegistrationError):
    pass


class ZeroVariance(RegistrationError):
    """A window is flat, so the correlation coefficient is undefined."""

    def __init__(self, which):
        super().__init__(f"zero variance in {which} window")
        self.which = which


class DegenerateHistogram(RegistrationError):
    pass


class GcpOutOfBounds(RegistrationError):
    def __init__(self, gcp_id):
        super().__init__(f"GCP {gcp_id!r}: target or search window leaves the image")
        self.gcp_id = gcp_id


class EmptyGcpList(RegistrationError):
    pass


class FitError(RegistrationError):
    """Base class for warp fitting failures (CLI exit code 2)."""


class InsufficientPoints(FitError):
    def __init__(self, needed, got):
        super().__init__(f"insufficient points: need {needed}, got {got}")
        self.needed = needed
        self.got = got


class DegenerateGeometry(FitError):
    pass


class NonInvertibleSpec(RegistrationError):
    pass


class DisplacementBoundExceeded(RegistrationError):
    pass


class CanvasTooSmall(RegistrationError):
    pass


class FormatError(RegistrationError):
    """Base class for file parsing problems (CLI exit code 1)."""


class MalformedHeader(FormatError):
    pass


class TruncatedData(FormatError):
    pass


class UnsupportedMaxValue(FormatError):
    pass


class MalformedLine(FormatError):
    def __init__(self, lineno, reason):
        super().__init__(f"line {lineno}: {reason}")
        self.lineno = lineno
        self.reason = reason
