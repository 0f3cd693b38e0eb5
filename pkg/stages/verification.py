"""
Verification Stage
Sweeps a tiny-scale grid and compares every structured computation against
its dense space-time counterpart
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np
from pydantic import BaseModel

from strom.analysis import check_error_bound, stability_constant, st_residual_norm
from strom.basis import SpaceTimeBasis, build_basis, build_snapshots, dense_space_time_basis
from strom.config import REFERENCE_TARGET_MU, REFERENCE_TRAIN_MUS, VerifyGrid
from strom.errors import RomError
from strom.fom import (
    SpaceTimeDense,
    Trajectory,
    solve_fom,
    space_time_dense,
    space_time_operator_norm_bounds,
    step_residuals,
)
from strom.model import ProblemKind, ProblemSpec, SpatialSystem, assemble_system
from strom.rom import Flavor, assemble, assemble_dense, solve_reduced
from .base_stage import BaseStage

logger = logging.getLogger(__name__)

ORACLE_TOL = 1e-10
ORTHONORMAL_TOL = 1e-12
STATIONARITY_TOL = 1e-8
POD_TOL = 1e-8
STABILITY_TOL = 1e-6
MINIMALITY_TOL = 1e-12


class CheckResult(BaseModel):
    check: str
    kind: ProblemKind
    nx: int
    nt: int
    n_s: Optional[int] = None
    n_t: Optional[int] = None
    flavor: Optional[Flavor] = None
    value: float
    tolerance: float
    passed: bool
    detail: str = ""


@dataclass
class VerificationResult:
    checks: List[CheckResult] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(check.passed for check in self.checks)

    @property
    def failures(self) -> List[CheckResult]:
        return [check for check in self.checks if not check.passed]


def _relative_max_diff(block: np.ndarray, dense: np.ndarray) -> float:
    scale = max(np.max(np.abs(dense), initial=0.0), np.max(np.abs(block), initial=0.0))
    if scale == 0:
        return 0.0
    return float(np.max(np.abs(block - dense)) / scale)


class VerificationStage(BaseStage):
    """Stage responsible for the oracle invariant suite"""

    def __init__(self, metrics_collector=None):
        super().__init__("VerificationStage", metrics_collector)
        self.capabilities = [
            'dense_space_time_oracle',
            'projection_equalities',
            'stationarity',
            'residual_minimality',
            'error_bound'
        ]

    def run(self, grid: VerifyGrid, oracle_cap: Optional[int] = None, seed: int = 0) -> VerificationResult:
        """Run every check on every grid cell; failures are collected, never raised"""
        start_time = self.start_task("oracle suite")
        result = VerificationResult()

        if grid.is_empty:
            logger.warning("Verification grid is empty; nothing to check")
            self.end_task(start_time)
            return result

        for kind in grid.kinds:
            for mesh in grid.meshes:
                for steps in grid.steps:
                    spec = ProblemSpec(kind=kind, nx=mesh, ny=mesh, nt=steps)
                    try:
                        result.checks.extend(self._check_problem(spec, grid, oracle_cap, seed))
                    except RomError as exc:
                        logger.error(f"{kind.value} {mesh}x{mesh}, N_t={steps} failed: {exc}")
                        result.checks.append(CheckResult(
                            check="cell_error", kind=kind, nx=mesh, nt=steps,
                            value=float("nan"), tolerance=0.0, passed=False, detail=str(exc),
                        ))

        if not result.passed:
            self.fail_task(f"{len(result.failures)} of {len(result.checks)} checks failed")
        else:
            self.end_task(start_time)
        logger.info(f"Verification ran {len(result.checks)} checks, {len(result.failures)} failed")
        return result

    def _check_problem(self, spec: ProblemSpec, grid: VerifyGrid, oracle_cap: Optional[int],
                       seed: int) -> List[CheckResult]:
        checks: List[CheckResult] = []

        def record(name, value, tolerance, n_s=None, n_t=None, flavor=None, passed=None, detail=""):
            ok = value <= tolerance if passed is None else passed
            checks.append(CheckResult(
                check=name, kind=spec.kind, nx=spec.nx, nt=spec.nt, n_s=n_s, n_t=n_t,
                flavor=flavor, value=float(value), tolerance=float(tolerance), passed=bool(ok), detail=detail,
            ))

        train_mus = REFERENCE_TRAIN_MUS[spec.kind][:grid.n_train]
        trajectories = [solve_fom(assemble_system(spec, mu), spec) for mu in train_mus]
        snapshots = build_snapshots(trajectories)

        target = REFERENCE_TARGET_MU[spec.kind]
        system = assemble_system(spec, target)
        fom = solve_fom(system, spec)
        dense = space_time_dense(system, spec, oracle_cap=oracle_cap)
        rhs = dense.f_st + dense.u0_st

        # marching equals the all-at-once solve
        u_dense = np.linalg.solve(dense.a_st, rhs)
        scale = max(1.0, float(np.max(np.abs(u_dense))))
        record("fom_vs_space_time_dense", np.max(np.abs(fom.stacked() - u_dense)) / scale, ORACLE_TOL)

        stability = stability_constant(system, spec.dt, spec.nt, seed=seed)
        _, sigma_min = space_time_operator_norm_bounds(dense)
        record("stability_vs_dense_svd", abs(stability.inv_norm * sigma_min - 1.0), STABILITY_TOL,
               detail=f"iterations={stability.iterations}")

        n_cols = snapshots.data.shape[1]
        n_s_values = sorted(n for n in grid.n_s_values if n <= spec.n_s and n < n_cols)
        n_t_values = sorted(n for n in grid.n_t_values if n <= min(spec.nt, len(train_mus)))
        if not n_s_values or not n_t_values:
            logger.warning(f"No feasible basis sizes for {spec.kind.value} {spec.nx}x{spec.ny}, N_t={spec.nt}")
            return checks

        full = build_basis(snapshots, max(n_s_values), max(n_t_values), method="direct")
        sigma = full.spatial_singular_values
        total = float(np.sum(sigma**2))

        pg_residuals: Dict[Tuple[int, int], float] = {}
        for n_s in n_s_values:
            phi = full.phi_s[:, :n_s]
            captured = snapshots.data - phi @ (phi.T @ snapshots.data)
            lhs = float(np.sum(captured**2))
            discarded = float(np.sum(sigma[n_s:] ** 2))
            record("pod_identity", abs(lhs - discarded), POD_TOL * discarded + 1e-12 * total, n_s=n_s)
            record("spatial_orthonormality", np.max(np.abs(phi.T @ phi - np.eye(n_s))), ORTHONORMAL_TOL, n_s=n_s)

            for n_t in n_t_values:
                basis = full.truncate(n_s, n_t)
                self._check_basis(basis, record, n_s, n_t, oracle_cap)
                residuals = self._check_flavors(
                    spec, system, basis, fom, dense, rhs, stability.eta, record, n_s, n_t, oracle_cap
                )
                if residuals:
                    pg_residuals[(n_s, n_t)] = residuals[Flavor.PETROV_GALERKIN]

        self._check_monotone(pg_residuals, float(np.linalg.norm(rhs)), record)
        return checks

    def _check_basis(self, basis: SpaceTimeBasis, record, n_s: int, n_t: int, oracle_cap) -> None:
        gram_t = np.einsum("ikj,ikl->ijl", basis.phi_t, basis.phi_t)
        record("temporal_orthonormality", np.max(np.abs(gram_t - np.eye(n_t)[None])), ORTHONORMAL_TOL,
               n_s=n_s, n_t=n_t)

        phi_st = dense_space_time_basis(basis, oracle_cap=oracle_cap)
        kron_cols = np.empty_like(phi_st)
        for j in range(n_t):
            for i in range(n_s):
                kron_cols[:, i + n_s * j] = np.kron(basis.phi_t[i][:, j], basis.phi_s[:, i])
        record("d_block_reassembly", np.max(np.abs(phi_st - kron_cols)), ORTHONORMAL_TOL, n_s=n_s, n_t=n_t)
        record("space_time_orthonormality", np.max(np.abs(phi_st.T @ phi_st - np.eye(n_s * n_t))),
               ORACLE_TOL, n_s=n_s, n_t=n_t)

    def _check_flavors(self, spec: ProblemSpec, system: SpatialSystem, basis: SpaceTimeBasis,
                       fom: Trajectory, dense: SpaceTimeDense, rhs: np.ndarray, eta: float,
                       record, n_s: int, n_t: int, oracle_cap) -> Dict[Flavor, float]:
        phi_st = dense_space_time_basis(basis, oracle_cap=oracle_cap)
        a_phi = dense.a_st @ phi_st
        a_phi_norm = float(np.linalg.norm(a_phi, 2))
        rhs_norm = float(np.linalg.norm(rhs))
        residual_norms: Dict[Flavor, float] = {}

        for flavor in Flavor:
            block = assemble(flavor, system, basis, spec)
            oracle = assemble_dense(flavor, system, basis, spec, oracle_cap=oracle_cap)
            for name in ("a_hat", "f_hat", "u0_hat"):
                record(f"oracle_{name}", _relative_max_diff(getattr(block, name), getattr(oracle, name)),
                       ORACLE_TOL, n_s=n_s, n_t=n_t, flavor=flavor)

            solution = solve_reduced(block)
            rom = solution.reconstruct(basis)
            residual = rhs - dense.a_st @ rom.stacked()
            norm = st_residual_norm(system, spec, system.mu, rom)
            residual_norms[flavor] = norm
            record("residual_vs_dense", abs(norm - np.linalg.norm(residual)), ORACLE_TOL * max(1.0, rhs_norm),
                   n_s=n_s, n_t=n_t, flavor=flavor)

            x_norm = float(np.linalg.norm(solution.x_hat))
            if flavor is Flavor.GALERKIN:
                stationarity = np.linalg.norm(phi_st.T @ residual)
                tolerance = STATIONARITY_TOL * (a_phi_norm * x_norm + rhs_norm)
            else:
                stationarity = np.linalg.norm(a_phi.T @ residual)
                tolerance = STATIONARITY_TOL * a_phi_norm * (a_phi_norm * x_norm + rhs_norm)
                a_hat = block.a_hat
                asym = np.max(np.abs(a_hat - a_hat.T)) / max(np.max(np.abs(a_hat)), 1e-300)
                record("pg_symmetry", asym, MINIMALITY_TOL, n_s=n_s, n_t=n_t, flavor=flavor)
                min_eig = float(np.min(np.linalg.eigvalsh(0.5 * (a_hat + a_hat.T))))
                record("pg_positive_definite", -min_eig, 0.0, n_s=n_s, n_t=n_t, flavor=flavor,
                       passed=min_eig > 0)
            record("stationarity", stationarity, tolerance, n_s=n_s, n_t=n_t, flavor=flavor)

            bound = check_error_bound(fom, rom, step_residuals(system, spec, rom), eta)
            record("error_bound", bound.lhs, bound.rhs, n_s=n_s, n_t=n_t, flavor=flavor, passed=bound.holds)

        slack = residual_norms[Flavor.PETROV_GALERKIN] - residual_norms[Flavor.GALERKIN]
        record("residual_minimality", slack, MINIMALITY_TOL * max(1.0, rhs_norm), n_s=n_s, n_t=n_t)
        return residual_norms

    def _check_monotone(self, residuals: Dict[Tuple[int, int], float], rhs_norm: float, record) -> None:
        tolerance = ORACLE_TOL * max(1.0, rhs_norm)
        for (n_s, n_t), value in sorted(residuals.items()):
            for larger in ((n_s + 1, n_t), (n_s, n_t + 1)):
                if larger in residuals:
                    record("pg_residual_monotone", residuals[larger] - value, tolerance,
                           n_s=larger[0], n_t=larger[1])
