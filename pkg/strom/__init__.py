"""
Space-time reduced order models for parameterized linear parabolic problems
"""

from .basis import SpaceTimeBasis, build_basis, build_snapshots
from .errors import RomError, StageError
from .fom import Trajectory, solve_fom
from .model import ProblemKind, ProblemSpec, assemble_system
from .rom import Flavor, assemble, solve_reduced

__all__ = [
    "Flavor",
    "ProblemKind",
    "ProblemSpec",
    "RomError",
    "SpaceTimeBasis",
    "StageError",
    "Trajectory",
    "assemble",
    "assemble_system",
    "build_basis",
    "build_snapshots",
    "solve_fom",
    "solve_reduced",
]
