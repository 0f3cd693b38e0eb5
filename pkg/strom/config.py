"""
Run Configuration
JSON run files describing one experiment: problem, training set, test set and
reduced dimensions
"""

import json
import logging
from pathlib import Path
from typing import Dict, List, Literal, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from .errors import ConfigurationError
from .model import Mu, ProblemKind, ProblemSpec
from .rom import Flavor
from .basis import SvdMethod

logger = logging.getLogger(__name__)

REFERENCE_TRAIN_MUS: Dict[ProblemKind, List[Mu]] = {
    ProblemKind.DIFFUSION: [(-0.9, -0.9), (-0.9, -0.5), (-0.5, -0.9), (-0.5, -0.5)],
    ProblemKind.CONV_DIFF: [(0.03, 0.33), (0.03, 0.35), (0.05, 0.33), (0.05, 0.35)],
    ProblemKind.CONV_DIFF_SOURCE: [(0.195, 0.018), (0.195, 0.022), (0.205, 0.018), (0.205, 0.022)],
}

REFERENCE_TARGET_MU: Dict[ProblemKind, Mu] = {
    ProblemKind.DIFFUSION: (-0.7, -0.7),
    ProblemKind.CONV_DIFF: (0.04, 0.34),
    ProblemKind.CONV_DIFF_SOURCE: (0.2, 0.02),
}


class AxisGrid(BaseModel):
    lo: float
    hi: float
    n: int = Field(..., ge=1)

    @model_validator(mode="after")
    def _ordered(self):
        if self.hi < self.lo:
            raise ValueError(f"grid axis [{self.lo}, {self.hi}] is empty")
        return self

    def values(self) -> List[float]:
        if self.n == 1:
            return [self.lo]
        return [float(v) for v in np.linspace(self.lo, self.hi, self.n)]


class TestGrid(BaseModel):
    """Tensor grid of test parameters; mu1 varies slowest"""

    __test__ = False

    mu1: AxisGrid
    mu2: AxisGrid

    def points(self) -> List[Mu]:
        return [(a, b) for a in self.mu1.values() for b in self.mu2.values()]


class VerifyGrid(BaseModel):
    """Tiny-scale grid swept by the oracle suite"""

    kinds: List[ProblemKind] = Field(default_factory=lambda: list(ProblemKind))
    meshes: List[int] = Field(default_factory=lambda: [4, 6])
    steps: List[int] = Field(default_factory=lambda: [3, 5])
    n_s_values: List[int] = Field(default_factory=lambda: [1, 2, 3])
    n_t_values: List[int] = Field(default_factory=lambda: [1, 2])
    n_train: int = Field(2, ge=1, le=4)

    @property
    def is_empty(self) -> bool:
        return not (self.kinds and self.meshes and self.steps and self.n_s_values and self.n_t_values)


class RunConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    problem: ProblemSpec
    train_mus: List[Tuple[float, float]] = Field(..., min_length=1)
    target_mu: Optional[Tuple[float, float]] = None
    test_mus: Optional[List[Tuple[float, float]]] = None
    test_grid: Optional[TestGrid] = None

    n_s: int = Field(5, ge=1)
    n_t: int = Field(3, ge=1)
    n_s_range: Optional[List[int]] = None
    n_t_range: Optional[List[int]] = None
    flavor: Literal["galerkin", "pg", "both"] = "both"

    seed: int = 0
    output_dir: str = "results"
    svd_method: SvdMethod = "auto"
    timing_repeats: int = Field(7, ge=3)
    oracle_cap: int = Field(5000, ge=1)

    bound_dt: float = Field(1e-2, gt=0.0)
    bound_nt_list: List[int] = Field(default_factory=lambda: [1, 2, 5, 10, 20, 50, 100, 200])
    stability_cap: int = Field(250_000, ge=1)

    complexity_sizes: List[int] = Field(default_factory=lambda: [400, 900, 1600, 2500])
    complexity_nt: int = Field(20, ge=1)
    complexity_n_s: int = Field(4, ge=1)
    complexity_n_t: int = Field(2, ge=1)

    verify: VerifyGrid = Field(default_factory=VerifyGrid)

    @model_validator(mode="after")
    def _check_dims(self):
        for ranged in (self.n_s_range, self.n_t_range):
            if ranged is not None and (not ranged or min(ranged) < 1):
                raise ValueError("reduced dimension ranges must be non-empty and positive")
        if self.max_n_t > len(self.train_mus):
            raise ValueError(
                f"n_t={self.max_n_t} exceeds the number of training parameters ({len(self.train_mus)})"
            )
        if any(n < 1 for n in self.bound_nt_list):
            raise ValueError("bound_nt_list entries must be positive")
        return self

    @property
    def max_n_s(self) -> int:
        return max(self.n_s_range or [self.n_s])

    @property
    def max_n_t(self) -> int:
        return max(self.n_t_range or [self.n_t])

    def flavors(self) -> List[Flavor]:
        if self.flavor == "both":
            return [Flavor.GALERKIN, Flavor.PETROV_GALERKIN]
        return [Flavor(self.flavor)]

    def reduced_dims(self) -> List[Tuple[int, int]]:
        return [(n_s, n_t) for n_s in (self.n_s_range or [self.n_s]) for n_t in (self.n_t_range or [self.n_t])]

    def target(self) -> Mu:
        if self.target_mu is not None:
            return self.target_mu
        return REFERENCE_TARGET_MU[self.problem.kind]

    def test_parameters(self) -> List[Mu]:
        if self.test_mus is not None:
            return list(self.test_mus)
        if self.test_grid is not None:
            return self.test_grid.points()
        return [self.target()]

    def require_uniform_steps(self) -> None:
        if not self.problem.is_uniform:
            raise ConfigurationError("non-uniform time steps are not supported by the command-line workflows")


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        raw = path.read_text()
    except OSError as exc:
        raise ConfigurationError(f"cannot read config {path}: {exc}") from exc
    try:
        config = RunConfig.model_validate_json(raw)
    except (ValidationError, json.JSONDecodeError) as exc:
        raise ConfigurationError(f"invalid config {path}: {exc}") from exc
    logger.debug(f"Loaded {config.problem.kind.value} config from {path}")
    return config
