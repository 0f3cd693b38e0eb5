"""
Training Stage
Runs the FOM at every training parameter and builds the space-time basis
"""

import logging
import time
from dataclasses import dataclass
from typing import List, Optional, Tuple

from pydantic import BaseModel

from strom.basis import SpaceTimeBasis, build_basis, build_snapshots, captured_energy
from strom.config import RunConfig
from strom.errors import RomError, StageError
from strom.fom import Trajectory, solve_fom
from strom.model import ProblemKind, ProblemSpec, assemble_system
from .base_stage import BaseStage

logger = logging.getLogger(__name__)


class TrainingManifest(BaseModel):
    kind: ProblemKind
    space_dim: int
    n_steps: int
    n_s: int
    n_t: int
    svd_method: str
    training_mus: List[Tuple[float, float]]
    singular_values: List[float]
    captured_energy: float
    fom_times_s: List[float]
    svd_time_s: float
    training_time_s: float


@dataclass
class TrainingResult:
    basis: SpaceTimeBasis
    trajectories: List[Trajectory]
    manifest: TrainingManifest


class TrainingStage(BaseStage):
    """Stage responsible for snapshot generation and POD"""

    def __init__(self, metrics_collector=None, cache=None):
        super().__init__("TrainingStage", metrics_collector)
        self.capabilities = [
            'fom_snapshots',
            'spatial_pod',
            'temporal_pod',
            'trajectory_cache'
        ]
        self.cache = cache

    def run_fom(self, spec: ProblemSpec, mu) -> Trajectory:
        """FOM trajectory at mu, served from the cache when possible"""
        if self.cache is not None:
            cached = self.cache.get(spec, mu)
            if cached is not None:
                return cached
        try:
            trajectory = solve_fom(assemble_system(spec, mu), spec)
        except RomError as exc:
            raise StageError(self.name, str(exc), mu=tuple(mu)) from exc
        if self.cache is not None:
            self.cache.set(spec, mu, trajectory)
        return trajectory

    def train(self, config: RunConfig, n_s: Optional[int] = None,
              n_t: Optional[int] = None) -> TrainingResult:
        """
        Build the space-time basis for a run configuration

        Args:
            config: Run configuration with the problem and training set
            n_s: Spatial basis size (defaults to the largest the config asks for)
            n_t: Temporal basis size per spatial mode (same default)

        Returns:
            Basis, training trajectories and manifest
        """
        spec = config.problem
        n_s = config.max_n_s if n_s is None else n_s
        n_t = config.max_n_t if n_t is None else n_t
        start_time = self.start_task(f"train {spec.kind.value} ({n_s}, {n_t})")

        try:
            trajectories = []
            fom_times = []
            for mu in config.train_mus:
                tic = time.perf_counter()
                trajectories.append(self.run_fom(spec, mu))
                fom_times.append(time.perf_counter() - tic)
                logger.info(f"FOM solved at mu={tuple(mu)} in {fom_times[-1]:.3f}s")

            tic = time.perf_counter()
            snapshots = build_snapshots(trajectories)
            basis = build_basis(snapshots, n_s, n_t, method=config.svd_method)
            svd_time = time.perf_counter() - tic
        except StageError as exc:
            raise self.fail_task(str(exc.__cause__), exc.mu) from exc.__cause__
        except RomError as exc:
            raise self.fail_task(str(exc)) from exc

        manifest = TrainingManifest(
            kind=spec.kind,
            space_dim=basis.space_dim,
            n_steps=basis.n_steps,
            n_s=n_s,
            n_t=n_t,
            svd_method=config.svd_method,
            training_mus=[tuple(mu) for mu in config.train_mus],
            singular_values=[float(s) for s in basis.spatial_singular_values],
            captured_energy=captured_energy(basis.spatial_singular_values, n_s),
            fom_times_s=fom_times,
            svd_time_s=svd_time,
            training_time_s=sum(fom_times) + svd_time,
        )
        self.end_task(start_time)
        return TrainingResult(basis=basis, trajectories=trajectories, manifest=manifest)
