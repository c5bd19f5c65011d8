"""Exception hierarchy shared by all subsystems."""


class SiteTrackerError(Exception):
    """Base class for every error raised by this package."""


class DegenerateConfiguration(SiteTrackerError, ValueError):
    """Point correspondences do not determine a homography."""


class TooFewPoints(SiteTrackerError, ValueError):
    pass


class PointAtInfinity(SiteTrackerError, ArithmeticError):
    """A projected point has a vanishing homogeneous coordinate."""


class DegenerateGeometry(SiteTrackerError, ValueError):
    """Samples are equidistant from the access point; the fit is rank deficient."""


class OutOfBand(SiteTrackerError, ValueError):
    """A fitted path-loss exponent fell outside the plausible band.

    The rejected fit is kept on the exception so callers can log it.
    """

    def __init__(self, message, ref_power=None, exponent=None):
        super().__init__(message)
        self.ref_power = ref_power
        self.exponent = exponent


class EmptyGrid(SiteTrackerError, ValueError):
    pass


class DegenerateCalibration(SiteTrackerError, ValueError):
    pass


class NonPsdCovariance(SiteTrackerError, ArithmeticError):
    """Cholesky factorization failed even after the maximum jitter."""


class SingularInnovation(SiteTrackerError, ArithmeticError):
    pass


class CoincidentCenters(SiteTrackerError, ValueError):
    pass


class UnknownTarget(SiteTrackerError, KeyError):
    pass


class AllWeightsZero(SiteTrackerError, RuntimeWarning):
    """Every particle assigned vanishing likelihood to a scan."""


class InvalidConfig(SiteTrackerError, ValueError):
    pass


class NoOverlap(SiteTrackerError, ValueError):
    """Truth and estimates share no scan."""


class EmptySamples(SiteTrackerError, ValueError):
    pass


class DimensionMismatch(SiteTrackerError, ValueError):
    pass
