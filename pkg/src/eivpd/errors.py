"""Exception types raised across the package."""


class EivError(Exception):
    """Base class for all package errors."""


class DesignError(EivError, ValueError):
    """Invalid simulation design (bad covariance, unsupported law, ...)."""


class InsufficientData(EivError, ValueError):
    pass


class DenominatorUnderflow(EivError, ArithmeticError):
    """The empirical characteristic function is too close to zero.

    Carries the offending magnitude ``denom_mag`` and, when known, the
    frequency ``u`` at which it occurred.
    """

    def __init__(self, denom_mag, u=None):
        self.denom_mag = float(denom_mag)
        self.u = None if u is None else float(u)
        at = "" if u is None else f" at u={self.u:g}"
        super().__init__(f"ECF denominator |s0|={self.denom_mag:.3g} below floor{at}")


class GridDegenerate(EivError, ArithmeticError):
    """More than half of the quadrature nodes were masked."""

    def __init__(self, n_masked, n_nodes):
        self.n_masked = n_masked
        self.n_nodes = n_nodes
        super().__init__(f"{n_masked} of {n_nodes} quadrature nodes masked")


class OptimizationFailed(EivError, RuntimeError):
    pass


class SingularDesign(EivError, ArithmeticError):
    pass


class Underidentified(EivError, ValueError):
    pass


class InvalidScaling(EivError, ValueError):
    pass


class ConfigError(EivError, ValueError):
    """Malformed config or CSV input; ``line`` is 1-based when known."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
