"""
Error types
Every failure raised by the numerical core derives from RomError
"""

from typing import Optional, Tuple


class RomError(Exception):
    """Base class for all space-time ROM errors"""


class ConfigurationError(RomError):
    """Invalid run configuration or problem specification"""


class SingularCoefficientError(RomError):
    """Reaction/source coefficient 1/r is undefined at a grid node"""

    def __init__(self, mu: Tuple[float, float], node: Tuple[float, float]):
        self.mu = mu
        self.node = node
        super().__init__(
            f"Reaction coefficient is singular: mu={mu} coincides with node {node}"
        )


class DimensionMismatchError(RomError):
    """Operand shapes do not agree"""


class FactorizationError(RomError):
    """Sparse factorization of the step matrix I - dt*A failed"""

    def __init__(self, step: int, reason: str):
        self.step = step
        super().__init__(f"Step matrix factorization failed at step {step}: {reason}")


class OracleScaleError(RomError):
    """A dense verification path or the stability estimate was asked for a problem above its cap"""

    def __init__(self, size: int, cap: int, what: str = "Dense oracle"):
        self.size = size
        self.cap = cap
        self.what = what
        super().__init__(
            f"{what} refused: {size} space-time unknowns exceeds cap {cap}"
        )


class BasisRankError(RomError):
    """Requested basis size exceeds what the snapshots can support"""

    def __init__(self, message: str, bound: int):
        self.bound = bound
        super().__init__(f"{message} (bound: {bound})")


class DegenerateModeError(RomError):
    """A retained spatial mode has a vanishing singular value"""


class IllPosedReductionError(RomError):
    """Reduced system matrix is singular or numerically close to it"""

    def __init__(self, condition: float):
        self.condition = condition
        super().__init__(f"Reduced system is ill-posed (condition estimate {condition:.3e})")


class UndefinedRelativeErrorError(RomError):
    """Reference trajectory has zero norm"""


class StageError(RomError):
    """A pipeline stage failed; names the stage and the parameter involved"""

    def __init__(self, stage: str, message: str, mu: Optional[Tuple[float, float]] = None):
        self.stage = stage
        self.mu = mu
        where = f" at mu={mu}" if mu is not None else ""
        super().__init__(f"{stage} failed{where}: {message}")
