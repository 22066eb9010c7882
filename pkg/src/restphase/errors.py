"""Exception hierarchy shared by all stages."""


class RestPhaseError(Exception):
    """Base class for every error raised by restphase."""


class InvalidSeries(RestPhaseError, ValueError):
    pass


class TrajectoryOutOfBounds(RestPhaseError, ValueError):
    pass


class DimensionMismatch(RestPhaseError, ValueError):
    pass


class PointOutOfBounds(RestPhaseError, ValueError):
    pass


class FlatTemplate(RestPhaseError, ValueError):
    pass


class LengthMismatch(RestPhaseError, ValueError):
    pass


class RoiLargerThanImage(RestPhaseError, ValueError):
    pass


class RoiOutOfBounds(RestPhaseError, ValueError):
    pass


class BadVariant(RestPhaseError, ValueError):
    pass


class EmptyInput(RestPhaseError, ValueError):
    pass


class InvalidWindow(RestPhaseError, ValueError):
    pass


class DegenerateLabels(RestPhaseError, ValueError):
    pass


class PairingMismatch(RestPhaseError, ValueError):
    pass
