"""
Space-Time Reduced Operators
Galerkin and least-squares Petrov-Galerkin reduced systems assembled from the
D_k^j block structure, without ever forming Phi_st or A^st
"""

import logging
import warnings
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Tuple

import numpy as np
from scipy import linalg
from scipy.linalg import lapack

from .basis import SpaceTimeBasis, d_tensor, dense_space_time_basis
from .errors import DimensionMismatchError, IllPosedReductionError
from .fom import Trajectory, space_time_dense
from .model import (
    Mu,
    ProblemSpec,
    SpatialSystem,
    affine_parts,
    initial_state,
    source_depends_on_mu,
    source_factors,
    source_matrix,
)

logger = logging.getLogger(__name__)

CONDITION_LIMIT = 1e14


class Flavor(str, Enum):
    GALERKIN = "galerkin"
    PETROV_GALERKIN = "pg"


@dataclass(frozen=True)
class ReducedSystem:
    """Dense reduced system; vectors are j-major blocks of n_s entries"""

    flavor: Flavor
    a_hat: np.ndarray
    f_hat: np.ndarray
    u0_hat: np.ndarray
    n_s: int
    n_t: int
    mu: Mu
    u0: np.ndarray
    time_steps: np.ndarray

    def block(self, j_row: int, j_col: int) -> np.ndarray:
        """Block (j', j), 1-based"""
        n = self.n_s
        return self.a_hat[(j_row - 1) * n:j_row * n, (j_col - 1) * n:j_col * n]


@dataclass(frozen=True)
class RomSolution:
    flavor: Flavor
    x_hat: np.ndarray
    mu: Mu
    u0: np.ndarray
    time_steps: np.ndarray
    condition: float

    def reconstruct(self, basis: SpaceTimeBasis) -> Trajectory:
        return reconstruct(basis, self.x_hat, u0=self.u0, time_steps=self.time_steps, mu=self.mu)


def _check_dims(system: SpatialSystem, basis: SpaceTimeBasis, spec: ProblemSpec) -> None:
    if basis.space_dim != system.n_s or system.n_s != spec.n_s:
        raise DimensionMismatchError(
            f"basis has {basis.space_dim} spatial rows, system {system.n_s}, spec {spec.n_s}"
        )
    if basis.n_steps != spec.nt:
        raise DimensionMismatchError(f"basis spans {basis.n_steps} steps, spec has {spec.nt}")


def _problem_data(system: SpatialSystem, spec: ProblemSpec, mu) -> Tuple[Mu, np.ndarray, np.ndarray, np.ndarray]:
    mu = system.mu if mu is None else (float(mu[0]), float(mu[1]))
    dts = spec.time_steps()
    forcing = source_matrix(spec, mu, spec.times()) * dts[None, :]
    return mu, dts, forcing, initial_state(spec, mu)


def _scatter_identity(diagonal: np.ndarray, n_s: int, n_t: int) -> np.ndarray:
    """Block tensor G[j', i, j, q] = diagonal[i, j', j] if q == i else 0"""
    out = np.zeros((n_t, n_s, n_t, n_s))
    idx = np.arange(n_s)
    out[:, idx, :, idx] = diagonal
    return out


@dataclass(frozen=True)
class StaticSource:
    """Projections of a source that does not depend on mu"""

    weighted: np.ndarray                       # F diag(dt), (N_s, N_t)
    projected: np.ndarray                      # Phi_s^T F diag(dt)
    part_projections: Optional[Tuple[np.ndarray, ...]]  # (A_q Phi_s)^T F diag(dt)


@dataclass(frozen=True)
class OfflineProjection:
    """Everything in the reduced operators that does not depend on mu, for one basis and time grid.

    The block tensors are indexed [j', i, j, q] like the reshaped a_hat.
    """

    n_s: int
    n_t: int
    d: np.ndarray
    dts: np.ndarray
    times: np.ndarray
    galerkin_identity: np.ndarray
    galerkin_weight: np.ndarray
    pg_identity: np.ndarray
    pg_blocks: Tuple[Tuple[float, np.ndarray, np.ndarray], ...]  # (dt, on-diagonal, k-1/k cross)
    static_source: Optional[StaticSource]

    def matches(self, basis: SpaceTimeBasis) -> bool:
        return (self.n_s, self.n_t, self.dts.size) == (basis.n_s, basis.n_t, basis.n_steps)


def _static_source(basis: SpaceTimeBasis, spec: ProblemSpec, dts: np.ndarray,
                   times: np.ndarray) -> Optional[StaticSource]:
    if source_depends_on_mu(spec.kind):
        return None
    spatial, temporal = source_factors(spec, None, times)
    weighted = spatial @ (temporal * dts[None, :])
    phi = basis.phi_s
    parts = affine_parts(spec)
    part_projections = None
    if parts is not None:
        part_projections = tuple((part @ phi).T @ weighted for part in parts)
    return StaticSource(weighted=weighted, projected=phi.T @ weighted, part_projections=part_projections)


def precompute(basis: SpaceTimeBasis, spec: ProblemSpec) -> OfflineProjection:
    """One-off contractions of D and of the mu-independent source; reused for every mu"""
    if basis.n_steps != spec.nt:
        raise DimensionMismatchError(f"basis spans {basis.n_steps} steps, spec has {spec.nt}")
    n_s, n_t = basis.n_s, basis.n_t
    d = d_tensor(basis)
    dts = spec.time_steps()
    times = spec.times()

    galerkin_identity = _scatter_identity(
        np.einsum("kai,kbi->iab", d, d) - np.einsum("kai,kbi->iab", d[1:], d[:-1]), n_s, n_t
    )
    pg_identity = _scatter_identity(np.einsum("kai,kbi->iab", d[:-1], d[:-1]), n_s, n_t)

    pg_blocks = []
    for dt in np.unique(dts):
        on_diag = (dts == dt).astype(float)
        cross = (dts[1:] == dt).astype(float)
        pg_blocks.append((
            float(dt),
            np.einsum("k,kap,kbq->apbq", on_diag, d, d),
            np.einsum("k,kap,kbq->apbq", cross, d[:-1], d[1:]),
        ))

    return OfflineProjection(
        n_s=n_s,
        n_t=n_t,
        d=d,
        dts=dts,
        times=times,
        galerkin_identity=galerkin_identity,
        galerkin_weight=np.einsum("k,kap,kbq->apbq", dts, d, d),
        pg_identity=pg_identity,
        pg_blocks=tuple(pg_blocks),
        static_source=_static_source(basis, spec, dts, times),
    )


def _offline_for(basis: SpaceTimeBasis, spec: ProblemSpec,
                 offline: Optional[OfflineProjection]) -> OfflineProjection:
    if offline is None:
        return precompute(basis, spec)
    if not offline.matches(basis) or not np.array_equal(offline.dts, spec.time_steps()):
        raise DimensionMismatchError(
            f"offline data is for ({offline.n_s}, {offline.n_t}) over {offline.dts.size} steps, "
            f"basis is ({basis.n_s}, {basis.n_t}) over {basis.n_steps}"
        )
    return offline


def _projected_forcing(offline: OfflineProjection, system: SpatialSystem, spec: ProblemSpec, mu: Mu,
                       phi: np.ndarray, a_phi: Optional[np.ndarray]) -> Tuple[np.ndarray, Optional[np.ndarray]]:
    """Phi_s^T F diag(dt) and, when a_phi is given, (A Phi_s)^T F diag(dt)"""
    static = offline.static_source
    if static is not None:
        if a_phi is None:
            return static.projected, None
        if static.part_projections is not None and system.affine_weights is not None:
            return static.projected, sum(w * p for w, p in zip(system.affine_weights, static.part_projections))
        return static.projected, a_phi.T @ static.weighted

    spatial, temporal = source_factors(spec, mu, offline.times)
    temporal = temporal * offline.dts[None, :]
    projected = (phi.T @ spatial) @ temporal
    if a_phi is None:
        return projected, None
    return projected, (a_phi.T @ spatial) @ temporal


def assemble_galerkin(system: SpatialSystem, basis: SpaceTimeBasis, spec: ProblemSpec, mu=None,
                      offline: Optional[OfflineProjection] = None) -> ReducedSystem:
    _check_dims(system, basis, spec)
    offline = _offline_for(basis, spec, offline)
    mu = system.mu if mu is None else (float(mu[0]), float(mu[1]))
    n_s, n_t = basis.n_s, basis.n_t
    phi = basis.phi_s
    d = offline.d
    u0 = initial_state(spec, mu)

    r = phi.T @ (system.a_matrix @ phi)
    a4 = offline.galerkin_identity - r[None, :, None, :] * offline.galerkin_weight

    projected, _ = _projected_forcing(offline, system, spec, mu, phi, None)
    f_hat = np.einsum("kji,ik->ji", d, projected).ravel()
    u0_hat = (d[0] * (phi.T @ u0)[None, :]).ravel()

    return ReducedSystem(
        flavor=Flavor.GALERKIN,
        a_hat=a4.reshape(n_t * n_s, n_t * n_s),
        f_hat=f_hat,
        u0_hat=u0_hat,
        n_s=n_s,
        n_t=n_t,
        mu=mu,
        u0=u0,
        time_steps=offline.dts,
    )


def assemble_petrov_galerkin(system: SpatialSystem, basis: SpaceTimeBasis, spec: ProblemSpec, mu=None,
                             offline: Optional[OfflineProjection] = None) -> ReducedSystem:
    _check_dims(system, basis, spec)
    offline = _offline_for(basis, spec, offline)
    mu = system.mu if mu is None else (float(mu[0]), float(mu[1]))
    n_s, n_t = basis.n_s, basis.n_t
    phi = basis.phi_s
    d, dts = offline.d, offline.dts
    u0 = initial_state(spec, mu)
    a_phi = system.a_matrix @ phi

    a4 = offline.pg_identity.copy()
    for dt, on_diag, cross in offline.pg_blocks:
        # (I - dt*A) Phi_s, then M and S once per distinct step size
        p_s = phi - dt * a_phi
        m = p_s.T @ p_s
        s = phi.T @ p_s
        a4 += m[None, :, None, :] * on_diag
        a4 -= s[None, :, None, :] * cross
        a4 -= s.T[None, :, None, :] * cross.transpose(2, 3, 0, 1)

    projected, a_projected = _projected_forcing(offline, system, spec, mu, phi, a_phi)
    weighted = projected - a_projected * dts[None, :]
    f_hat = np.einsum("kji,ik->ji", d, weighted) - np.einsum("kji,ik->ji", d[:-1], projected[:, 1:])
    u0_hat = d[0] * (phi.T @ u0 - dts[0] * (a_phi.T @ u0))[None, :]

    return ReducedSystem(
        flavor=Flavor.PETROV_GALERKIN,
        a_hat=a4.reshape(n_t * n_s, n_t * n_s),
        f_hat=f_hat.ravel(),
        u0_hat=u0_hat.ravel(),
        n_s=n_s,
        n_t=n_t,
        mu=mu,
        u0=u0,
        time_steps=dts,
    )


def assemble(flavor: Flavor, system: SpatialSystem, basis: SpaceTimeBasis, spec: ProblemSpec,
             mu=None, offline: Optional[OfflineProjection] = None) -> ReducedSystem:
    if Flavor(flavor) is Flavor.GALERKIN:
        return assemble_galerkin(system, basis, spec, mu, offline)
    return assemble_petrov_galerkin(system, basis, spec, mu, offline)


def _from_products(flavor: Flavor, basis: SpaceTimeBasis, test: np.ndarray, trial: np.ndarray,
                   f_st: np.ndarray, u0_st: np.ndarray, mu: Mu, u0: np.ndarray,
                   dts: np.ndarray) -> ReducedSystem:
    return ReducedSystem(
        flavor=Flavor(flavor),
        a_hat=test.T @ trial,
        f_hat=test.T @ f_st,
        u0_hat=test.T @ u0_st,
        n_s=basis.n_s,
        n_t=basis.n_t,
        mu=mu,
        u0=u0,
        time_steps=dts,
    )


def assemble_dense(flavor: Flavor, system: SpatialSystem, basis: SpaceTimeBasis,
                   spec: ProblemSpec, mu=None, oracle_cap: Optional[int] = None) -> ReducedSystem:
    """Project the materialized A^st, f^st, u0^st with a materialized Phi_st"""
    _check_dims(system, basis, spec)
    mu, dts, _, u0 = _problem_data(system, spec, mu)
    dense = space_time_dense(system, spec, mu, oracle_cap=oracle_cap)
    phi_st = dense_space_time_basis(basis, oracle_cap=oracle_cap)
    trial = dense.a_st @ phi_st
    test = phi_st if Flavor(flavor) is Flavor.GALERKIN else trial
    return _from_products(flavor, basis, test, trial, dense.f_st, dense.u0_st, mu, u0, dts)


def assemble_unstructured(flavor: Flavor, system: SpatialSystem, basis: SpaceTimeBasis,
                          spec: ProblemSpec, mu=None, oracle_cap: Optional[int] = None) -> ReducedSystem:
    """Reduced system without the block structure: dense A(mu) applied to Phi_st block row by block row.

    Costs O(N_s^2 N_t n_s n_t) like a fully dense projection, but never stores
    the (N_s N_t)^2 operator.
    """
    _check_dims(system, basis, spec)
    mu, dts, forcing, u0 = _problem_data(system, spec, mu)
    n_s_full, n_steps = system.n_s, spec.nt
    a_dense = system.a_matrix.toarray()
    phi_st = dense_space_time_basis(basis, oracle_cap=oracle_cap)

    trial = np.empty_like(phi_st)
    for k in range(n_steps):
        rows = slice(k * n_s_full, (k + 1) * n_s_full)
        trial[rows] = phi_st[rows] - dts[k] * (a_dense @ phi_st[rows])
        if k > 0:
            trial[rows] -= phi_st[(k - 1) * n_s_full:k * n_s_full]

    f_st = forcing.ravel(order="F")
    u0_st = np.zeros(n_s_full * n_steps)
    u0_st[:n_s_full] = u0
    test = phi_st if Flavor(flavor) is Flavor.GALERKIN else trial
    return _from_products(flavor, basis, test, trial, f_st, u0_st, mu, u0, dts)


def solve_reduced(reduced: ReducedSystem) -> RomSolution:
    """x_hat = a_hat^-1 (f_hat + u0_hat) by LU with partial pivoting"""
    a_hat = reduced.a_hat
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", linalg.LinAlgWarning)
        lu, piv = linalg.lu_factor(a_hat, check_finite=False)
    # 1-norm estimate from the LU factors
    rcond, _ = lapack.dgecon(lu, np.abs(a_hat).sum(axis=0).max(initial=0.0), norm="1")
    condition = float("inf") if not rcond > 0 else 1.0 / rcond
    if not np.isfinite(condition) or condition > CONDITION_LIMIT:
        raise IllPosedReductionError(condition)

    x_hat = linalg.lu_solve((lu, piv), reduced.f_hat + reduced.u0_hat, check_finite=False)
    return RomSolution(
        flavor=reduced.flavor,
        x_hat=x_hat,
        mu=reduced.mu,
        u0=reduced.u0,
        time_steps=reduced.time_steps,
        condition=condition,
    )


def reconstruct(basis: SpaceTimeBasis, x_hat: np.ndarray, *, u0: Optional[np.ndarray] = None,
                time_steps: Optional[np.ndarray] = None, mu: Mu = (float("nan"), float("nan"))) -> Trajectory:
    """Column k = Phi_s sum_j D_k^j x_hat_(j)"""
    x_hat = np.asarray(x_hat, dtype=float)
    if x_hat.shape != (basis.n_s * basis.n_t,):
        raise DimensionMismatchError(
            f"x_hat has shape {x_hat.shape}, expected ({basis.n_s * basis.n_t},)"
        )
    coefficients = np.einsum("ikj,ji->ik", basis.phi_t, x_hat.reshape(basis.n_t, basis.n_s))
    states = basis.phi_s @ coefficients
    return Trajectory(
        states=states,
        u0=np.zeros(basis.space_dim) if u0 is None else u0,
        time_steps=np.full(basis.n_steps, np.nan) if time_steps is None else time_steps,
        mu=mu,
    )
