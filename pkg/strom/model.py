"""
Benchmark Problems
Finite-difference operators, sources and initial states for the three
parameterized 2D linear PDEs on the unit square with homogeneous Dirichlet
boundaries
"""

import logging
import math
from dataclasses import dataclass
from enum import Enum
from typing import Dict, Optional, Tuple

import numpy as np
import scipy.sparse as sp
from pydantic import BaseModel, ConfigDict, Field, model_validator

from .errors import ConfigurationError, SingularCoefficientError

logger = logging.getLogger(__name__)

Mu = Tuple[float, float]
MuDomain = Tuple[Tuple[float, float], Tuple[float, float]]

SINGULAR_DISTANCE = 1e-12


class ProblemKind(str, Enum):
    DIFFUSION = "Diffusion2D"
    CONV_DIFF = "ConvDiff2D"
    CONV_DIFF_SOURCE = "ConvDiffSource2D"


DEFAULT_MU_DOMAIN: Dict[ProblemKind, MuDomain] = {
    ProblemKind.DIFFUSION: ((-1.7, -0.2), (-1.7, -0.2)),
    ProblemKind.CONV_DIFF: ((0.01, 0.07), (0.31, 0.37)),
    ProblemKind.CONV_DIFF_SOURCE: ((0.195, 0.205), (0.018, 0.022)),
}

DEFAULT_T_FINAL: Dict[ProblemKind, float] = {
    ProblemKind.DIFFUSION: 2.0,
    ProblemKind.CONV_DIFF: 1.0,
    ProblemKind.CONV_DIFF_SOURCE: 2.0,
}


class Grid2D(BaseModel):
    """Uniform mesh of the unit square; boundary nodes are eliminated.

    ``nx``/``ny`` count meshes, so each axis carries ``nx - 1`` unknowns.
    Interior node (ix, iy) has index ``iy * (nx - 1) + ix`` and sits at
    ``((ix + 1) * hx, (iy + 1) * hy)``.
    """

    model_config = ConfigDict(frozen=True)

    nx: int = Field(..., ge=3)
    ny: int = Field(..., ge=3)

    @property
    def mx(self) -> int:
        return self.nx - 1

    @property
    def my(self) -> int:
        return self.ny - 1

    @property
    def hx(self) -> float:
        return 1.0 / self.nx

    @property
    def hy(self) -> float:
        return 1.0 / self.ny

    @property
    def n_s(self) -> int:
        return self.mx * self.my

    def index(self, ix: int, iy: int) -> int:
        if not (0 <= ix < self.mx and 0 <= iy < self.my):
            raise IndexError(f"node ({ix}, {iy}) outside {self.mx}x{self.my} interior")
        return iy * self.mx + ix

    def unravel(self, idx: int) -> Tuple[int, int]:
        if not 0 <= idx < self.n_s:
            raise IndexError(f"index {idx} outside [0, {self.n_s})")
        iy, ix = divmod(idx, self.mx)
        return ix, iy

    def coordinates(self) -> Tuple[np.ndarray, np.ndarray]:
        """Node coordinates (x, y) as flat arrays in index order"""
        x = np.arange(1, self.mx + 1) * self.hx
        y = np.arange(1, self.my + 1) * self.hy
        xx, yy = np.meshgrid(x, y)  # rows follow y, so ravel keeps ix fastest
        return xx.ravel(), yy.ravel()


class ProblemSpec(BaseModel):
    """One benchmark problem at a fixed discretization"""

    model_config = ConfigDict(frozen=True, extra="forbid", use_enum_values=False)

    kind: ProblemKind
    nx: int = Field(70, ge=3, description="Mesh count in x")
    ny: int = Field(70, ge=3, description="Mesh count in y")
    t_final: float = Field(..., gt=0.0)
    nt: int = Field(50, ge=1, description="Number of time steps")
    mu: MuDomain = Field(..., description="Parameter domain ((lo1, hi1), (lo2, hi2))")
    steps: Optional[Tuple[float, ...]] = Field(
        None, description="Non-uniform step sizes; uniform T/nt when omitted"
    )

    @model_validator(mode="before")
    @classmethod
    def _fill_kind_defaults(cls, data):
        if isinstance(data, dict) and "kind" in data:
            data = dict(data)
            try:
                kind = ProblemKind(data["kind"])
            except ValueError as exc:
                raise ValueError(f"unknown problem kind {data['kind']!r}") from exc
            data.setdefault("t_final", DEFAULT_T_FINAL[kind])
            if data.get("mu") is None:
                data["mu"] = DEFAULT_MU_DOMAIN[kind]
        return data

    @model_validator(mode="after")
    def _check_consistency(self):
        for lo, hi in self.mu:
            if not lo <= hi:
                raise ValueError(f"parameter range ({lo}, {hi}) is empty")
        if self.steps is not None:
            if len(self.steps) != self.nt:
                raise ValueError(f"steps has {len(self.steps)} entries, expected nt={self.nt}")
            if any(s <= 0 for s in self.steps):
                raise ValueError("steps must be positive")
            if not math.isclose(sum(self.steps), self.t_final, rel_tol=1e-12):
                raise ValueError("steps must sum to t_final")
        return self

    @property
    def grid(self) -> Grid2D:
        return Grid2D(nx=self.nx, ny=self.ny)

    @property
    def n_s(self) -> int:
        return self.grid.n_s

    @property
    def is_uniform(self) -> bool:
        return self.steps is None

    @property
    def dt(self) -> float:
        """Uniform step size; only meaningful when ``is_uniform``"""
        return self.t_final / self.nt

    def time_steps(self) -> np.ndarray:
        if self.steps is None:
            return np.full(self.nt, self.dt)
        return np.asarray(self.steps, dtype=float)

    def times(self) -> np.ndarray:
        """Right endpoints t_k, k = 1..nt, where f^(k) is evaluated"""
        if self.steps is None:
            return np.arange(1, self.nt + 1) * self.dt
        return np.cumsum(self.steps)

    def contains(self, mu: Mu) -> bool:
        return all(lo <= m <= hi for m, (lo, hi) in zip(mu, self.mu))


@dataclass(frozen=True)
class SpatialSystem:
    """A(mu) in CSR form; the input map B(mu) is the identity throughout"""

    kind: ProblemKind
    a_matrix: sp.csr_matrix
    mu: Mu
    band_width: int
    input_map: str = "identity"
    # theta_q(mu) with A(mu) = sum_q theta_q A_q over affine_parts(spec); None when A is not affine
    affine_weights: Optional[Tuple[float, ...]] = None

    @property
    def n_s(self) -> int:
        return self.a_matrix.shape[0]

    def step_matrix(self, dt: float) -> sp.csc_matrix:
        """I - dt*A in CSC form, ready for sparse LU"""
        return (sp.identity(self.n_s, format="csc") - dt * self.a_matrix).tocsc()


def _check_mu(mu) -> Mu:
    if len(mu) != 2:
        raise ConfigurationError(f"mu must be a pair, got {mu!r}")
    mu = (float(mu[0]), float(mu[1]))
    if not all(math.isfinite(m) for m in mu):
        raise ConfigurationError(f"mu must be finite, got {mu}")
    return mu


def _second_difference(m: int, h: float) -> sp.csr_matrix:
    return sp.diags([1.0, -2.0, 1.0], [-1, 0, 1], shape=(m, m), format="csr") / h**2


def _backward_difference(m: int, h: float) -> sp.csr_matrix:
    # row 0 sees the eliminated boundary value, which is zero
    return sp.diags([-1.0, 1.0], [-1, 0], shape=(m, m), format="csr") / h


def laplacian(grid: Grid2D) -> sp.csr_matrix:
    ix, iy = sp.identity(grid.mx, format="csr"), sp.identity(grid.my, format="csr")
    return (
        sp.kron(iy, _second_difference(grid.mx, grid.hx))
        + sp.kron(_second_difference(grid.my, grid.hy), ix)
    ).tocsr()


def backward_differences(grid: Grid2D) -> Tuple[sp.csr_matrix, sp.csr_matrix]:
    """First-order upwind operators (Dx-, Dy-)"""
    ix, iy = sp.identity(grid.mx, format="csr"), sp.identity(grid.my, format="csr")
    dx = sp.kron(iy, _backward_difference(grid.mx, grid.hx), format="csr")
    dy = sp.kron(_backward_difference(grid.my, grid.hy), ix, format="csr")
    return dx, dy


def reaction_coefficient(grid: Grid2D, mu: Mu) -> np.ndarray:
    """c(x, y; mu) = 1 / |(x, y) - mu| at every interior node"""
    x, y = grid.coordinates()
    dist = np.hypot(x - mu[0], y - mu[1])
    k = int(np.argmin(dist))
    if dist[k] < SINGULAR_DISTANCE:
        raise SingularCoefficientError(mu, (float(x[k]), float(y[k])))
    return 1.0 / dist


def _band_width(a: sp.spmatrix) -> int:
    coo = a.tocoo()
    if coo.nnz == 0:
        return 0
    return int(np.max(np.abs(coo.row - coo.col)))


def affine_parts(spec: ProblemSpec) -> Optional[Tuple[sp.csr_matrix, ...]]:
    """mu-independent (convection, Laplacian) pair of the convection kinds; None for Diffusion2D"""
    if spec.kind is ProblemKind.DIFFUSION:
        return None
    grid = spec.grid
    dx, dy = backward_differences(grid)
    convection = dx + dy if spec.kind is ProblemKind.CONV_DIFF else 0.1 * dx + dy
    return sp.csr_matrix(convection), laplacian(grid)


def affine_weights(kind: ProblemKind, mu: Mu) -> Tuple[float, ...]:
    if kind is ProblemKind.DIFFUSION:
        raise ConfigurationError("Diffusion2D is not affine in mu")
    return -mu[0], mu[1]


def assemble_system(spec: ProblemSpec, mu) -> SpatialSystem:
    """Assemble A(mu) for the problem kind"""
    mu = _check_mu(mu)
    grid = spec.grid
    if not spec.contains(mu):
        logger.debug(f"mu={mu} lies outside the {spec.kind.value} parameter domain {spec.mu}")

    weights = None
    parts = affine_parts(spec)
    if parts is None:
        a = laplacian(grid) - sp.diags(reaction_coefficient(grid, mu), format="csr")
    else:
        weights = affine_weights(spec.kind, mu)
        convection, lap = parts
        a = weights[0] * convection + weights[1] * lap

    a = sp.csr_matrix(a)
    a.sum_duplicates()
    a.sort_indices()
    return SpatialSystem(kind=spec.kind, a_matrix=a, mu=mu, band_width=_band_width(a),
                         affine_weights=weights)


def _gaussian_source(x: np.ndarray, y: np.ndarray, t) -> np.ndarray:
    shift = 0.2 * np.sin(2.0 * np.pi * np.asarray(t))
    return 1e5 * np.exp(-(((x - 0.5 + shift) / 0.1) ** 2 + (y / 0.05) ** 2))


def source_vector(spec: ProblemSpec, mu, t: float) -> np.ndarray:
    """f(t; mu) sampled at the interior nodes"""
    return source_matrix(spec, mu, np.array([t]))[:, 0]


def source_matrix(spec: ProblemSpec, mu, times: np.ndarray) -> np.ndarray:
    """Columns f(t_k; mu) for every entry of ``times``, shape (N_s, len(times))"""
    mu = _check_mu(mu)
    grid = spec.grid
    times = np.asarray(times, dtype=float)

    if spec.kind is ProblemKind.DIFFUSION:
        c = reaction_coefficient(grid, mu)
        return np.outer(c, np.sin(2.0 * np.pi * times))
    if spec.kind is ProblemKind.CONV_DIFF:
        return np.zeros((grid.n_s, times.size))
    x, y = grid.coordinates()
    return _gaussian_source(x[:, None], y[:, None], times[None, :])


def source_depends_on_mu(kind: ProblemKind) -> bool:
    return kind is ProblemKind.DIFFUSION


def source_factors(spec: ProblemSpec, mu, times: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """(spatial, temporal) with source_matrix = spatial @ temporal.

    Diffusion2D is rank one; the other kinds return their full matrix against
    the identity and ignore ``mu``.
    """
    times = np.asarray(times, dtype=float)
    if spec.kind is ProblemKind.DIFFUSION:
        c = reaction_coefficient(spec.grid, _check_mu(mu))
        return c[:, None], np.sin(2.0 * np.pi * times)[None, :]
    if spec.kind is ProblemKind.CONV_DIFF:
        return np.zeros((spec.n_s, 0)), np.zeros((0, times.size))
    x, y = spec.grid.coordinates()
    return _gaussian_source(x[:, None], y[:, None], times[None, :]), np.eye(times.size)


def initial_state(spec: ProblemSpec, mu) -> np.ndarray:
    """u(x, y, 0; mu) at the interior nodes"""
    _check_mu(mu)
    grid = spec.grid
    if spec.kind is not ProblemKind.CONV_DIFF:
        return np.zeros(grid.n_s)
    x, y = grid.coordinates()
    bump = 100.0 * np.sin(2.0 * np.pi * x) ** 3 * np.sin(2.0 * np.pi * y) ** 3
    return np.where((x <= 0.5) & (y <= 0.5), bump, 0.0)
