"""Exception types raised across the toolkit."""


class KSError(ValueError):
    """Base class for all toolkit errors."""


class PhysicalDomainError(KSError):
    """The requested state lies outside the physical domain of a formula."""


class ZeroQuaternion(PhysicalDomainError):
    pass


class ZeroPosition(PhysicalDomainError):
    pass


class CollisionSingular(PhysicalDomainError):
    pass


class OuterCollision(PhysicalDomainError):
    pass


class HyperbolicOuter(PhysicalDomainError):
    pass


class EccentricityOutOfRange(PhysicalDomainError):
    pass


class DegenerateElement(PhysicalDomainError):
    pass


class ChartDegenerate(PhysicalDomainError):
    pass


class RatioTooLarge(PhysicalDomainError):
    pass


class AlphaTooLarge(PhysicalDomainError):
    pass


class NonPhysicalPoint(PhysicalDomainError):
    pass


class SingularCoordinates(PhysicalDomainError):
    pass


class DegenerateRadicand(PhysicalDomainError):
    pass


class CoincidentMomenta(PhysicalDomainError):
    pass


class NotClosed(KSError):
    """An orbit failed to close within the allotted integration time."""


class StepFailure(KSError):
    """The integrator could not meet its tolerance or a monitor blew up."""


class TooShort(KSError):
    pass


class ConfigInvalid(KSError):
    pass
