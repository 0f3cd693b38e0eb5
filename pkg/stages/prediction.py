"""
Prediction Stage
Assembles, solves and reconstructs the space-time ROM at one parameter and
compares it against a fresh FOM run
"""

import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

from strom.analysis import (
    StabilityEstimate,
    StudyReport,
    check_error_bound,
    measure,
    relative_error,
    stability_constant,
    st_residual_norm,
)
from strom.basis import SpaceTimeBasis
from strom.errors import DimensionMismatchError, RomError
from strom.fom import Trajectory, solve_fom, step_residuals
from strom.model import ProblemSpec, SpatialSystem, assemble_system
from strom.rom import (
    Flavor,
    OfflineProjection,
    ReducedSystem,
    RomSolution,
    assemble,
    assemble_dense,
    precompute,
    solve_reduced,
)
from .base_stage import BaseStage

logger = logging.getLogger(__name__)


@dataclass
class PredictionResult:
    mu: Tuple[float, float]
    reports: List[StudyReport]
    fom: Optional[Trajectory] = None
    roms: Dict[Tuple[Flavor, int, int], Trajectory] = field(default_factory=dict)
    reduced: Dict[Tuple[Flavor, int, int], Tuple[ReducedSystem, RomSolution]] = field(default_factory=dict)

    @property
    def failed(self) -> bool:
        return any(report.status != "ok" for report in self.reports)


class PredictionStage(BaseStage):
    """Stage responsible for the online phase of the ROM"""

    def __init__(self, metrics_collector=None, fom_provider: Optional[Callable] = None):
        super().__init__("PredictionStage", metrics_collector)
        self.capabilities = [
            'galerkin_rom',
            'petrov_galerkin_rom',
            'oracle_assembly',
            'error_bound',
            'online_timing'
        ]
        self.fom_provider = fom_provider or (lambda spec, mu: solve_fom(assemble_system(spec, mu), spec))
        self._offline: Dict[tuple, Tuple[SpaceTimeBasis, OfflineProjection]] = {}

    def offline_projection(self, basis: SpaceTimeBasis, spec: ProblemSpec, n_s: int, n_t: int) -> OfflineProjection:
        """mu-independent contractions of the (n_s, n_t) sub-basis, built once per basis"""
        key = (id(basis), n_s, n_t, spec)
        with self._lock:
            cached = self._offline.get(key)
        if cached is not None and cached[0] is basis:
            return cached[1]
        offline = precompute(basis.truncate(n_s, n_t), spec)
        with self._lock:
            self._offline[key] = (basis, offline)
        return offline

    def _online(self, flavor: Flavor, system: SpatialSystem, basis: SpaceTimeBasis,
                spec: ProblemSpec, naive: bool, oracle_cap: Optional[int],
                offline: Optional[OfflineProjection] = None):
        if naive:
            reduced = assemble_dense(flavor, system, basis, spec, oracle_cap=oracle_cap)
        else:
            reduced = assemble(flavor, system, basis, spec, offline=offline)
        solution = solve_reduced(reduced)
        return reduced, solution, solution.reconstruct(basis)

    def predict(self, spec: ProblemSpec, basis: SpaceTimeBasis, mu,
                flavors: Sequence[Flavor], *,
                dims: Optional[Sequence[Tuple[int, int]]] = None,
                timing_repeats: Optional[int] = None,
                naive: bool = False,
                oracle_cap: Optional[int] = None,
                with_bound: bool = False,
                stability_cap: Optional[int] = None,
                seed: int = 0,
                record_failures: bool = False) -> PredictionResult:
        """
        Evaluate the ROM at one parameter for every requested flavor and basis size

        Args:
            spec: Problem the basis was trained on
            basis: Trained basis; smaller sizes in ``dims`` use its leading modes
            mu: Target parameter
            flavors: Projections to evaluate
            dims: (n_s, n_t) pairs, the full basis when omitted
            timing_repeats: Median-of-n timing of FOM and online phase; no timing when None
            naive: Assemble through the dense oracle path
            with_bound: Compute the stability constant and check the error bound
            record_failures: Keep going after a failed cell and report it instead of raising

        Returns:
            One StudyReport per (flavor, n_s, n_t) cell plus the trajectories behind them
        """
        start_time = self.start_task(f"predict at mu=({float(mu[0])}, {float(mu[1])})")
        mu = (float(mu[0]), float(mu[1]))
        dims = list(dims) if dims else [(basis.n_s, basis.n_t)]
        result = PredictionResult(mu=mu, reports=[])

        try:
            flavors = [Flavor(f) for f in flavors]
            if basis.space_dim != spec.n_s or basis.n_steps != spec.nt:
                raise DimensionMismatchError(
                    f"basis is {basis.space_dim}x{basis.n_steps}, problem is {spec.n_s}x{spec.nt}"
                )
            system = assemble_system(spec, mu)
            result.fom = self.fom_provider(spec, mu)
            fom_time = measure(lambda: solve_fom(system, spec), timing_repeats) if timing_repeats else None
            stability: Optional[StabilityEstimate] = None
            if with_bound:
                kwargs = {} if stability_cap is None else {"cap": stability_cap}
                stability = stability_constant(system, spec.dt, spec.nt, seed=seed, **kwargs)
        except (RomError, ValueError) as exc:
            raise self.fail_task(str(exc), mu) from exc

        for n_s, n_t in dims:
            for flavor in flavors:
                report = StudyReport(
                    kind=spec.kind, flavor=flavor, mu1=mu[0], mu2=mu[1], n_s=n_s, n_t=n_t,
                    reduction_factor=(spec.n_s * spec.nt) / (n_s * n_t),
                    fom_time_s=fom_time,
                )
                try:
                    sub_basis = basis.truncate(n_s, n_t)
                    offline = None if naive else self.offline_projection(basis, spec, n_s, n_t)
                    reduced, solution, rom = self._online(flavor, system, sub_basis, spec, naive, oracle_cap,
                                                          offline)
                    report.relative_error = relative_error(result.fom, rom)
                    report.st_residual_norm = st_residual_norm(system, spec, mu, rom)
                    if timing_repeats:
                        report.rom_online_time_s = measure(
                            lambda: self._online(flavor, system, sub_basis, spec, naive, oracle_cap, offline),
                            timing_repeats,
                        )
                        report.speedup = fom_time / report.rom_online_time_s
                    if stability is not None:
                        bound = check_error_bound(result.fom, rom, step_residuals(system, spec, rom), stability.eta)
                        report.bound_lhs, report.bound_rhs, report.eta = bound.lhs, bound.rhs, stability.eta
                        if not bound.holds:
                            logger.warning(f"Error bound violated at mu={mu}, {flavor.value} ({n_s}, {n_t})")
                    result.roms[(flavor, n_s, n_t)] = rom
                    result.reduced[(flavor, n_s, n_t)] = (reduced, solution)
                except RomError as exc:
                    if not record_failures:
                        raise self.fail_task(str(exc), mu) from exc
                    logger.warning(f"{flavor.value} ({n_s}, {n_t}) failed at mu={mu}: {exc}")
                    if self.metrics_collector:
                        self.metrics_collector.record_error()
                    report.status, report.error = "failed", str(exc)
                result.reports.append(report)

        self.end_task(start_time)
        return result
