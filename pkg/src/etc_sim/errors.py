"""Exception hierarchy shared by every etc_sim module."""


class EtcSimError(Exception):
    """Base class for all library errors."""


class NonFiniteDerivative(EtcSimError):
    pass


class NonFinite(EtcSimError):
    """A state or derivative left the finite reals (divergence)."""


class NoSignChange(EtcSimError):
    pass


class SingularLyapunov(EtcSimError):
    pass


class Indeterminate(EtcSimError):
    """An iterative eigenvalue procedure failed to converge."""


class RhoViolated(EtcSimError):
    """Sampled Lipschitz quotient of phi exceeds the declared rho."""


class NonPositiveConstant(EtcSimError, ValueError):
    pass


class PolicyMismatch(EtcSimError, TypeError):
    pass


class NotHurwitz(EtcSimError):
    pass


class LyapunovResidualTooLarge(EtcSimError):
    pass


class CertificateDegenerate(EtcSimError):
    pass


class BudgetExceeded(EtcSimError):
    pass


class ZenoSuspect(EtcSimError):
    pass


class EmptyLog(EtcSimError):
    pass


class NeverSettles(EtcSimError):
    pass


class InsufficientSamples(EtcSimError):
    pass


class ValidationError(EtcSimError, ValueError):
    pass


class ParseError(EtcSimError, ValueError):
    """Scenario document error anchored to a 1-based line number."""

    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line
        self.message = message


class ZeroKappaWarning(UserWarning):
    pass
