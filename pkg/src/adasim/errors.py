"""
Exception hierarchy shared by all adasim modules
"""
from typing import Optional


class AdasimError(Exception):
    """Base class for every error raised by adasim"""


class ValidationError(AdasimError, ValueError):
    """A precondition or data invariant does not hold"""


class DimensionError(ValidationError):
    """Vector or matrix shapes are inconsistent"""


class FormatError(ValidationError):
    """A file could not be parsed"""

    def __init__(self, message: str, path: Optional[str] = None, line: Optional[int] = None):
        self.path = path
        self.line = line
        location = ""
        if path is not None:
            location = f"{path}:{line}: " if line is not None else f"{path}: "
        super().__init__(f"{location}{message}")


class ChecksumError(FormatError):
    """Stored checksum does not match the file contents"""


class NumericalError(AdasimError, ArithmeticError):
    """A numerical procedure failed or produced non-finite values"""


class NotPositiveDefiniteError(NumericalError):
    """The joint system H is not positive definite"""

    def __init__(self, eig_min: float, delta_w: float, w13: float, w24: float):
        self.eig_min = eig_min
        self.delta_w = delta_w
        self.w13 = w13
        self.w24 = w24
        super().__init__(
            f"H is not positive definite (eig_min={eig_min:.6g}, delta_W={delta_w:.6g}, "
            f"w13={w13:.6g}, w24={w24:.6g}); raise w13 and w24 above delta_W"
        )


class DivergenceError(NumericalError):
    """Alternating optimization produced non-finite iterates"""

    def __init__(self, iteration: int):
        self.iteration = iteration
        super().__init__(f"alternating optimization diverged at iteration {iteration}")
