"""
Exception types for the SNA laboratory
SNA实验室异常类型

cli.run maps ConfigError to exit code 1 and NumericFailure to exit code 2.
"""


class SNAError(Exception):
    """Base class for all laboratory errors"""


class ConfigError(SNAError, ValueError):
    """Invalid parameters, flags or configuration files"""


class NumericFailure(SNAError, ArithmeticError):
    """A computation could not produce a meaningful number"""


class DiophantineViolation(NumericFailure):
    """The rotation vector violates d(tau_n, theta*) >= c n^-d at some n"""

    def __init__(self, n: int, distance: float, bound: float):
        self.n = n
        self.distance = distance
        self.bound = bound
        super().__init__(
            f"Diophantine condition violated at n={n}: "
            f"d(tau_n, theta*)={distance!r} < c*n^-d={bound!r}"
        )


class PinchedOrbitError(NumericFailure):
    """A base point lies on the orbit of the pinching point"""

    def __init__(self, message: str, index: int = -1):
        self.index = index
        super().__init__(message)
