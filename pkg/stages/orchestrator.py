"""
Study Orchestrator
Coordinates all stages, owns the worker pool and writes every output file
"""

import asyncio
import logging
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence

from strom import bundle
from strom.analysis import ComplexityRow, StudyReport
from strom.basis import SpaceTimeBasis
from strom.config import RunConfig
from strom.errors import ConfigurationError, StageError
from .prediction import PredictionResult, PredictionStage
from .studies import BoundStudyRow, StudyStage
from .training import TrainingResult, TrainingStage
from .verification import CheckResult, VerificationResult, VerificationStage

logger = logging.getLogger(__name__)

BASIS_DIR = "basis"


class StudyOrchestrator:
    """Main orchestrator that coordinates all stages"""

    def __init__(self, training: TrainingStage, prediction: PredictionStage,
                 verification: VerificationStage, studies: StudyStage,
                 cache, metrics, jobs: int = 1):
        if jobs < 1:
            raise ConfigurationError(f"jobs must be positive, got {jobs}")
        self.training = training
        self.prediction = prediction
        self.verification = verification
        self.studies = studies
        self.cache = cache
        self.metrics = metrics
        self.jobs = jobs

        self.status = 'ready'
        self.total_runs = 0
        self.successful_runs = 0
        self.failed_runs = 0

    async def initialize(self):
        for stage in (self.training, self.prediction, self.verification, self.studies):
            await stage.initialize()

    async def _fan_out(self, fn: Callable, items: Sequence, workers: int) -> List:
        """Apply fn to every item on the pool; results come back in input order"""
        if workers <= 1 or len(items) <= 1:
            return [await asyncio.to_thread(fn, item) for item in items]
        loop = asyncio.get_running_loop()
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return await asyncio.gather(*(loop.run_in_executor(pool, fn, item) for item in items))

    def _begin(self, command: str, label: str = ""):
        self.total_runs += 1
        self.status = 'working'
        self.metrics.record_run(command, label)

    def _finish(self, ok: bool):
        self.status = 'ready'
        if ok:
            self.successful_runs += 1
        else:
            self.failed_runs += 1

    async def train(self, config: RunConfig, out_dir) -> TrainingResult:
        """Snapshot generation and POD, written as a basis bundle plus manifest"""
        self._begin("train", config.problem.kind.value)
        config.require_uniform_steps()
        try:
            result = await asyncio.to_thread(self.training.train, config)
        except StageError:
            self._finish(False)
            raise
        out_dir = Path(out_dir)
        bundle.save_basis(out_dir / BASIS_DIR, result.basis)
        bundle.write_json(out_dir / "training_manifest.json", result.manifest)
        self._finish(True)
        return result

    async def predict(self, config: RunConfig, out_dir, basis: SpaceTimeBasis, mu=None, *,
                      naive: bool = False, oracle_cap: Optional[int] = None,
                      with_bound: bool = False, timed: bool = True) -> PredictionResult:
        """One target parameter, every configured flavor at the configured (n_s, n_t)"""
        mu = tuple(mu) if mu is not None else config.target()
        self._begin("predict", str(mu))
        config.require_uniform_steps()
        spec = config.problem
        try:
            result = await asyncio.to_thread(
                self.prediction.predict, spec, basis, mu, config.flavors(),
                dims=[(config.n_s, config.n_t)],
                timing_repeats=config.timing_repeats if timed else None,
                naive=naive,
                oracle_cap=config.oracle_cap if oracle_cap is None else oracle_cap,
                with_bound=with_bound,
                stability_cap=config.stability_cap,
                seed=config.seed,
            )
        except StageError:
            self._finish(False)
            raise

        out_dir = Path(out_dir)
        bundle.write_csv(out_dir / "predict.csv", result.reports, StudyReport)
        grid = spec.grid
        bundle.write_snapshot_csv(out_dir / "snapshot_fom.csv", grid, result.fom.states[:, -1])
        for (flavor, n_s, n_t), rom in result.roms.items():
            bundle.write_snapshot_csv(out_dir / f"snapshot_{flavor.value}.csv", grid, rom.states[:, -1])
            bundle.save_trajectory(out_dir / f"rom_{flavor.value}", rom)
            reduced, solution = result.reduced[(flavor, n_s, n_t)]
            bundle.save_reduced(out_dir / f"reduced_{flavor.value}", reduced, solution)
        self._finish(not result.failed)
        return result

    def _failed_rows(self, config: RunConfig, mu, message: str) -> List[StudyReport]:
        spec = config.problem
        return [
            StudyReport(
                kind=spec.kind, flavor=flavor, mu1=float(mu[0]), mu2=float(mu[1]), n_s=n_s, n_t=n_t,
                reduction_factor=(spec.n_s * spec.nt) / (n_s * n_t), status="failed", error=message,
            )
            for n_s, n_t in config.reduced_dims()
            for flavor in config.flavors()
        ]

    async def sweep(self, config: RunConfig, out_dir, basis: Optional[SpaceTimeBasis] = None, *,
                    timed: bool = False, total: bool = False, naive: bool = False) -> List[StudyReport]:
        """
        Every test parameter times every (n_s, n_t) cell

        Timed sweeps run on a single worker; untimed ones fan out over ``jobs``
        workers. In total mode the basis is always trained here so that the
        training time enters the multi-query comparison.
        """
        self._begin("sweep", config.problem.kind.value)
        config.require_uniform_steps()
        timed = timed or total
        training: Optional[TrainingResult] = None
        if basis is None or total:
            training = await self.train(config, out_dir)
            basis = training.basis

        spec = config.problem
        dims = config.reduced_dims()
        flavors = config.flavors()

        def run_cell(mu) -> List[StudyReport]:
            try:
                return self.prediction.predict(
                    spec, basis, mu, flavors, dims=dims,
                    timing_repeats=config.timing_repeats if timed else None,
                    naive=naive, oracle_cap=config.oracle_cap, seed=config.seed,
                    record_failures=True,
                ).reports
            except StageError as exc:
                logger.warning(str(exc))
                return self._failed_rows(config, mu, str(exc))

        mus = config.test_parameters()
        workers = 1 if timed else self.jobs
        logger.info(f"Sweeping {len(mus)} parameter(s) x {len(dims)} basis size(s) on {workers} worker(s)")
        per_mu = await self._fan_out(run_cell, mus, workers)
        reports = [report for rows in per_mu for report in rows]

        out_dir = Path(out_dir)
        bundle.write_csv(out_dir / "sweep.csv", reports, StudyReport)
        summary: Dict = {
            'kind': spec.kind.value,
            'cells': len(reports),
            'failed_cells': sum(r.status != "ok" for r in reports),
            'cache': self.cache.get_stats() if self.cache is not None else None,
        }
        if total and training is not None:
            summary['total'] = self._total_speedup(config, reports, training.manifest.training_time_s)
        bundle.write_json(out_dir / "sweep_summary.json", summary)

        self._finish(summary['failed_cells'] == 0)
        return reports

    def _total_speedup(self, config: RunConfig, reports: List[StudyReport], training_time: float) -> Dict:
        """FOM over every test parameter against training plus every online solve"""
        totals = {'training_time_s': training_time}
        for flavor in config.flavors():
            rows = [
                r for r in reports
                if r.flavor is flavor and r.n_s == config.n_s and r.n_t == config.n_t and r.status == "ok"
            ]
            fom_total = sum(r.fom_time_s for r in rows)
            rom_total = training_time + sum(r.rom_online_time_s for r in rows)
            totals[flavor.value] = {
                'total_fom_time_s': fom_total,
                'total_rom_time_s': rom_total,
                'total_speedup': fom_total / rom_total if rom_total > 0 else None,
            }
        return totals

    async def verify(self, config: RunConfig, out_dir, oracle_cap: Optional[int] = None) -> VerificationResult:
        self._begin("verify")
        result = await asyncio.to_thread(
            self.verification.run, config.verify,
            config.oracle_cap if oracle_cap is None else oracle_cap, config.seed,
        )
        if result.checks:
            bundle.write_csv(Path(out_dir) / "verify.csv", result.checks, CheckResult)
        self._finish(result.passed)
        return result

    async def bound_study(self, config: RunConfig, out_dir, *, dt: Optional[float] = None,
                          nt_list: Optional[Sequence[int]] = None, mu=None):
        self._begin("bound-study", config.problem.kind.value)
        try:
            rows = await asyncio.to_thread(
                self.studies.bound_study, config.problem,
                tuple(mu) if mu is not None else config.target(),
                config.bound_dt if dt is None else dt,
                list(config.bound_nt_list if nt_list is None else nt_list),
                seed=config.seed, cap=config.stability_cap,
            )
        except StageError:
            self._finish(False)
            raise
        bundle.write_csv(Path(out_dir) / "bound_study.csv", rows, BoundStudyRow)
        self._finish(all(row.converged for row in rows))
        return rows

    async def complexity_study(self, config: RunConfig, out_dir):
        self._begin("complexity-study")
        try:
            rows, summaries = await asyncio.to_thread(
                self.studies.complexity, config.complexity_sizes,
                n_steps=config.complexity_nt, n_s=config.complexity_n_s, n_t=config.complexity_n_t,
                flavors=config.flavors(), repeats=config.timing_repeats, seed=config.seed,
            )
        except StageError:
            self._finish(False)
            raise
        out_dir = Path(out_dir)
        bundle.write_csv(out_dir / "complexity.csv", rows, ComplexityRow)
        bundle.write_json(out_dir / "complexity_summary.json",
                          {'slopes': [s.model_dump(mode="json") for s in summaries]})
        self._finish(True)
        return rows, summaries

    def get_status(self) -> Dict:
        """Get orchestrator status"""
        return {
            'status': self.status,
            'jobs': self.jobs,
            'total_runs': self.total_runs,
            'successful_runs': self.successful_runs,
            'failed_runs': self.failed_runs,
            'stages': [
                stage.get_status()
                for stage in (self.training, self.prediction, self.verification, self.studies)
            ],
        }
