"""
Accuracy, Residual, Error-Bound and Timing Analysis
"""

import logging
import math
import statistics
import time
from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence

import numpy as np
from pydantic import BaseModel, model_validator

from .basis import SpaceTimeBasis
from .errors import ConfigurationError, DimensionMismatchError, UndefinedRelativeErrorError
from .fom import StepSolver, Trajectory, check_oracle_size, step_residuals
from .model import ProblemKind, ProblemSpec, SpatialSystem, assemble_system
from .rom import Flavor, assemble, assemble_unstructured, precompute

logger = logging.getLogger(__name__)

BOUND_SLACK = 1e-10
DEFAULT_STABILITY_CAP = 250_000


class StudyReport(BaseModel):
    """One (problem, mu, n_s, n_t, flavor) cell; field names double as CSV columns"""

    kind: ProblemKind
    flavor: Flavor
    mu1: float
    mu2: float
    n_s: int
    n_t: int
    reduction_factor: Optional[float] = None
    relative_error: Optional[float] = None
    st_residual_norm: Optional[float] = None
    fom_time_s: Optional[float] = None
    rom_online_time_s: Optional[float] = None
    speedup: Optional[float] = None
    bound_lhs: Optional[float] = None
    bound_rhs: Optional[float] = None
    eta: Optional[float] = None
    status: str = "ok"
    error: str = ""

    @model_validator(mode="after")
    def _fill_speedup(self):
        if self.speedup is None and self.fom_time_s and self.rom_online_time_s:
            self.speedup = self.fom_time_s / self.rom_online_time_s
        return self


class BoundReport(BaseModel):
    lhs: float
    rhs: float
    holds: bool


class ComplexityRow(BaseModel):
    N_s: int
    N_t: int
    n_s: int
    n_t: int
    flavor: Flavor
    naive_time: float
    block_time: float


@dataclass(frozen=True)
class StabilityEstimate:
    eta: float
    inv_norm: float
    iterations: int
    converged: bool


def relative_error(fom: Trajectory, rom: Trajectory) -> float:
    """||u~ - u||_2 / ||u||_2 over the stacked space-time vectors"""
    if fom.states.shape != rom.states.shape:
        raise DimensionMismatchError(f"FOM is {fom.states.shape}, ROM is {rom.states.shape}")
    reference = np.linalg.norm(fom.states)
    if reference == 0:
        raise UndefinedRelativeErrorError("FOM trajectory has zero norm")
    return float(np.linalg.norm(rom.states - fom.states) / reference)


def st_residual_norm(system: SpatialSystem, spec: ProblemSpec, mu, rom: Trajectory) -> float:
    """sqrt(sum_k ||r^(k)||^2) with u~^(0) = u0, never forming A^st"""
    if mu is not None and tuple(map(float, mu)) != system.mu:
        raise DimensionMismatchError(f"system assembled at {system.mu}, residual requested at {mu}")
    return float(np.linalg.norm(step_residuals(system, spec, rom)))


def _space_time_solves(solver: StepSolver, n_s: int, n_t: int):
    def apply_inverse(x: np.ndarray) -> np.ndarray:
        out = np.empty_like(x)
        prev = np.zeros(n_s)
        for k in range(n_t):
            prev = solver.solve(k + 1, x[k * n_s:(k + 1) * n_s] + prev)
            out[k * n_s:(k + 1) * n_s] = prev
        return out

    def apply_inverse_transpose(x: np.ndarray) -> np.ndarray:
        out = np.empty_like(x)
        nxt = np.zeros(n_s)
        for k in reversed(range(n_t)):
            nxt = solver.solve(k + 1, x[k * n_s:(k + 1) * n_s] + nxt, transpose=True)
            out[k * n_s:(k + 1) * n_s] = nxt
        return out

    return apply_inverse, apply_inverse_transpose


def stability_constant(system: SpatialSystem, dt: float, n_t: int, *, seed: int = 0,
                       tol: float = 1e-8, max_iter: int = 500,
                       cap: int = DEFAULT_STABILITY_CAP) -> StabilityEstimate:
    """eta = sqrt(N_t) ||(A^st)^-1||_2 by power iteration on (A^st^T A^st)^-1.

    Each application is a block forward solve with A^st after a block backward
    solve with A^st^T, both reusing one factorization of I - dt*A.
    """
    n_s = system.n_s
    check_oracle_size(n_s * n_t, cap, what="Stability estimate")
    solver = StepSolver(system, np.full(n_t, dt))
    apply_inverse, apply_inverse_transpose = _space_time_solves(solver, n_s, n_t)

    rng = np.random.default_rng(seed)
    x = rng.standard_normal(n_s * n_t)
    x /= np.linalg.norm(x)

    lam_old = math.inf
    lam = 0.0
    converged = False
    iterations = 0
    for iterations in range(1, max_iter + 1):
        y = apply_inverse(apply_inverse_transpose(x))
        lam = float(x @ y)
        norm_y = np.linalg.norm(y)
        if norm_y == 0:
            break
        x = y / norm_y
        if abs(lam - lam_old) < tol * abs(lam):
            converged = True
            break
        lam_old = lam

    if not converged:
        logger.warning(f"Power iteration stopped after {iterations} iterations without converging")
    inv_norm = math.sqrt(max(lam, 0.0))
    return StabilityEstimate(
        eta=math.sqrt(n_t) * inv_norm,
        inv_norm=inv_norm,
        iterations=iterations,
        converged=converged,
    )


def check_error_bound(fom: Trajectory, rom: Trajectory, residuals: np.ndarray,
                      eta: float) -> BoundReport:
    """max_k ||e^k|| <= eta max_k ||r~^k||"""
    if fom.states.shape != rom.states.shape or residuals.shape != fom.states.shape:
        raise DimensionMismatchError("trajectories and residuals must share one discretization")
    lhs = float(np.max(np.linalg.norm(fom.states - rom.states, axis=0)))
    rhs = float(eta * np.max(np.linalg.norm(residuals, axis=0)))
    return BoundReport(lhs=lhs, rhs=rhs, holds=lhs <= rhs * (1.0 + BOUND_SLACK))


def measure(fn: Callable[[], object], repeats: int = 7) -> float:
    """Median wall-clock time of ``repeats`` calls after one warm-up call"""
    if repeats < 3:
        raise ConfigurationError(f"timing needs at least 3 repeats, got {repeats}")
    fn()
    samples = []
    for _ in range(repeats):
        start = time.perf_counter()
        fn()
        samples.append(time.perf_counter() - start)
    return statistics.median(samples)


def loglog_slope(sizes: Sequence[float], times: Sequence[float]) -> float:
    slope, _ = np.polyfit(np.log(np.asarray(sizes, float)), np.log(np.asarray(times, float)), 1)
    return float(slope)


def random_basis(n_space: int, n_steps: int, n_s: int, n_t: int, seed: int = 0) -> SpaceTimeBasis:
    """Orthonormal synthetic basis of the requested shape (timing studies only)"""
    rng = np.random.default_rng(seed)
    phi_s, _ = np.linalg.qr(rng.standard_normal((n_space, n_s)))
    phi_t = np.stack([np.linalg.qr(rng.standard_normal((n_steps, n_t)))[0] for _ in range(n_s)])
    return SpaceTimeBasis(phi_s=phi_s, phi_t=phi_t, spatial_singular_values=np.ones(n_s), n_mu=n_t)


def complexity_study(sizes: Sequence[int], *, n_steps: int = 20, n_s: int = 4, n_t: int = 2,
                     kind: ProblemKind = ProblemKind.DIFFUSION, flavors: Sequence[Flavor] = tuple(Flavor),
                     repeats: int = 3, seed: int = 0) -> List[ComplexityRow]:
    """Time block assembly against the unstructured path over N_s in ``sizes``"""
    rows = []
    for size in sizes:
        m = math.isqrt(size)
        if m * m != size or m < 2:
            raise ConfigurationError(f"N_s={size} must be a square of at least 4")
        spec = ProblemSpec(kind=kind, nx=m + 1, ny=m + 1, nt=n_steps)
        mu = tuple(0.5 * (lo + hi) for lo, hi in spec.mu)
        system = assemble_system(spec, mu)
        basis = random_basis(spec.n_s, n_steps, n_s, n_t, seed)
        offline = precompute(basis, spec)

        for flavor in flavors:
            block_time = measure(lambda: assemble(flavor, system, basis, spec, offline=offline), repeats)
            naive_time = measure(
                lambda: assemble_unstructured(flavor, system, basis, spec, oracle_cap=size * n_steps),
                repeats,
            )
            logger.info(
                f"N_s={size} {flavor.value}: block {block_time:.3e}s, unstructured {naive_time:.3e}s"
            )
            rows.append(ComplexityRow(
                N_s=size, N_t=n_steps, n_s=n_s, n_t=n_t, flavor=flavor,
                naive_time=naive_time, block_time=block_time,
            ))
    return rows
