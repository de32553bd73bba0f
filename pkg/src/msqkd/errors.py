"""Exception types shared across the package."""


class MsqkdError(Exception):
    """Base class for errors raised by this package."""


class InvalidParameterError(MsqkdError, ValueError):
    pass


class NoAcceptedRoundsError(MsqkdError):
    """Raised when the normalization of the accepted-round state is zero."""


class DegenerateTermError(MsqkdError, ValueError):
    pass


class InsufficientDataError(MsqkdError):
    pass


class DegenerateSampleError(MsqkdError):
    pass
