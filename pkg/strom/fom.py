"""
Full Order Model
Backward-Euler time marching, per-step residuals and the dense space-time
system used as a verification oracle
"""

import logging
from dataclasses import dataclass
from typing import Dict, Optional, Tuple

import numpy as np
from scipy.sparse.linalg import splu

from .errors import DimensionMismatchError, FactorizationError, OracleScaleError
from .model import Mu, ProblemSpec, SpatialSystem, initial_state, source_matrix

logger = logging.getLogger(__name__)

DEFAULT_ORACLE_CAP = 5000


@dataclass(frozen=True)
class Trajectory:
    """Column k-1 of ``states`` holds u^(k); u^(0) is kept apart in ``u0``"""

    states: np.ndarray
    u0: np.ndarray
    time_steps: np.ndarray
    mu: Mu

    @property
    def n_s(self) -> int:
        return self.states.shape[0]

    @property
    def n_t(self) -> int:
        return self.states.shape[1]

    @property
    def dt(self) -> float:
        if not np.all(self.time_steps == self.time_steps[0]):
            raise ValueError("trajectory uses non-uniform steps")
        return float(self.time_steps[0])

    def stacked(self) -> np.ndarray:
        """Space-time vector [u^(1); ...; u^(N_t)]"""
        return self.states.ravel(order="F")


@dataclass(frozen=True)
class SpaceTimeDense:
    a_st: np.ndarray
    f_st: np.ndarray
    u0_st: np.ndarray


class StepSolver:
    """Sparse LU of I - dt*A, factored once per distinct step size"""

    def __init__(self, system: SpatialSystem, time_steps: np.ndarray):
        self.time_steps = np.asarray(time_steps, dtype=float)
        self._lu: Dict[float, object] = {}

        for k, dt in enumerate(self.time_steps, start=1):
            dt = float(dt)
            if dt <= 0:
                raise FactorizationError(k, f"non-positive step size {dt}")
            if dt in self._lu:
                continue
            try:
                self._lu[dt] = splu(system.step_matrix(dt))
            except RuntimeError as exc:
                raise FactorizationError(k, str(exc)) from exc
        logger.debug(f"Factored {len(self._lu)} step matrix(es) of size {system.n_s}")

    def solve(self, k: int, rhs: np.ndarray, transpose: bool = False) -> np.ndarray:
        """Solve with the step-k matrix (k is 1-based) or its transpose"""
        lu = self._lu[float(self.time_steps[k - 1])]
        x = lu.solve(rhs, trans="T" if transpose else "N")
        if not np.all(np.isfinite(x)):
            raise FactorizationError(k, "solve produced non-finite values")
        return x


def solve_fom(system: SpatialSystem, spec: ProblemSpec) -> Trajectory:
    """March (I - dt*A) u^(k) = u^(k-1) + dt*f^(k) for k = 1..N_t"""
    if system.n_s != spec.n_s:
        raise DimensionMismatchError(f"system has {system.n_s} unknowns, spec expects {spec.n_s}")

    dts = spec.time_steps()
    solver = StepSolver(system, dts)
    forcing = source_matrix(spec, system.mu, spec.times()) * dts[None, :]
    u0 = initial_state(spec, system.mu)

    states = np.empty((system.n_s, spec.nt))
    u_prev = u0
    for k in range(1, spec.nt + 1):
        u_prev = solver.solve(k, u_prev + forcing[:, k - 1])
        states[:, k - 1] = u_prev

    return Trajectory(states=states, u0=u0, time_steps=dts, mu=system.mu)


def check_oracle_size(size: int, cap: Optional[int], what: str = "Dense oracle") -> None:
    cap = DEFAULT_ORACLE_CAP if cap is None else cap
    if size > cap:
        raise OracleScaleError(size, cap, what)


def space_time_dense(system: SpatialSystem, spec: ProblemSpec, mu=None,
                     oracle_cap: Optional[int] = None) -> SpaceTimeDense:
    """Materialize A^st, f^st and u0^st (verification only)"""
    mu = system.mu if mu is None else (float(mu[0]), float(mu[1]))
    n_s, n_t = system.n_s, spec.nt
    check_oracle_size(n_s * n_t, oracle_cap)

    dts = spec.time_steps()
    a = system.a_matrix.toarray()
    eye = np.eye(n_s)

    a_st = np.zeros((n_s * n_t, n_s * n_t))
    for k in range(n_t):
        rows = slice(k * n_s, (k + 1) * n_s)
        a_st[rows, rows] = eye - dts[k] * a
        if k > 0:
            a_st[rows, (k - 1) * n_s:k * n_s] = -eye

    f_st = (source_matrix(spec, mu, spec.times()) * dts[None, :]).ravel(order="F")
    u0_st = np.zeros(n_s * n_t)
    u0_st[:n_s] = initial_state(spec, mu)
    return SpaceTimeDense(a_st=a_st, f_st=f_st, u0_st=u0_st)


def step_residual(system: SpatialSystem, dt: float, f_k: np.ndarray,
                  u_prev: np.ndarray, u_cur: np.ndarray) -> np.ndarray:
    """dt*f^(k) + u^(k-1) - (I - dt*A) u^(k)"""
    n_s = system.n_s
    for name, vec in (("f_k", f_k), ("u_prev", u_prev), ("u_cur", u_cur)):
        if np.shape(vec) != (n_s,):
            raise DimensionMismatchError(f"{name} has shape {np.shape(vec)}, expected ({n_s},)")
    return dt * f_k + u_prev - (u_cur - dt * (system.a_matrix @ u_cur))


def step_residuals(system: SpatialSystem, spec: ProblemSpec, trajectory: Trajectory) -> np.ndarray:
    """Residual r^(k) of every step as columns, with u^(0) = u0 of the problem"""
    if trajectory.states.shape != (system.n_s, spec.nt):
        raise DimensionMismatchError(
            f"trajectory is {trajectory.states.shape}, expected {(system.n_s, spec.nt)}"
        )
    dts = spec.time_steps()
    forcing = source_matrix(spec, system.mu, spec.times())
    u0 = initial_state(spec, system.mu)

    residuals = np.empty_like(trajectory.states)
    u_prev = u0
    for k in range(spec.nt):
        u_cur = trajectory.states[:, k]
        residuals[:, k] = step_residual(system, dts[k], forcing[:, k], u_prev, u_cur)
        u_prev = u_cur
    return residuals


def space_time_operator_norm_bounds(dense: SpaceTimeDense) -> Tuple[float, float]:
    """Largest and smallest singular values of a materialized A^st"""
    s = np.linalg.svd(dense.a_st, compute_uv=False)
    return float(s[0]), float(s[-1])
