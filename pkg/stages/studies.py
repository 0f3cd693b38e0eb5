"""
Study Stage
Stability-constant growth and assembly complexity studies
"""

import logging
from typing import List, Sequence

from pydantic import BaseModel

from strom.analysis import ComplexityRow, complexity_study, loglog_slope, stability_constant
from strom.errors import RomError
from strom.model import ProblemSpec, assemble_system
from strom.rom import Flavor
from .base_stage import BaseStage

logger = logging.getLogger(__name__)


class BoundStudyRow(BaseModel):
    N_t: int
    dt: float
    inv_norm: float
    eta: float
    iterations: int
    converged: bool


class ComplexitySummary(BaseModel):
    flavor: Flavor
    block_slope: float
    naive_slope: float


class StudyStage(BaseStage):
    """Stage responsible for the scaling studies"""

    def __init__(self, metrics_collector=None):
        super().__init__("StudyStage", metrics_collector)
        self.capabilities = [
            'stability_constant',
            'complexity_scaling'
        ]

    def bound_study(self, spec: ProblemSpec, mu, dt: float, nt_list: Sequence[int], *,
                    seed: int = 0, cap: int = 250_000) -> List[BoundStudyRow]:
        """eta and ||(A^st)^-1|| for the operator A(mu) at a fixed step size over N_t"""
        mu = (float(mu[0]), float(mu[1]))
        start_time = self.start_task(f"bound study at dt={dt}")
        try:
            system = assemble_system(spec, mu)
            rows = []
            for n_t in nt_list:
                estimate = stability_constant(system, dt, n_t, seed=seed, cap=cap)
                logger.info(f"N_t={n_t}: ||(A^st)^-1|| = {estimate.inv_norm:.6e}")
                rows.append(BoundStudyRow(
                    N_t=n_t, dt=dt, inv_norm=estimate.inv_norm, eta=estimate.eta,
                    iterations=estimate.iterations, converged=estimate.converged,
                ))
        except RomError as exc:
            raise self.fail_task(str(exc), mu) from exc

        self.end_task(start_time)
        return rows

    def complexity(self, sizes: Sequence[int], *, n_steps: int, n_s: int, n_t: int,
                   flavors: Sequence[Flavor], repeats: int, seed: int = 0):
        """Timing rows plus the fitted log-log slope of both paths per flavor"""
        start_time = self.start_task(f"complexity over N_s={list(sizes)}")
        try:
            rows: List[ComplexityRow] = complexity_study(
                sizes, n_steps=n_steps, n_s=n_s, n_t=n_t, flavors=flavors, repeats=repeats, seed=seed,
            )
        except RomError as exc:
            raise self.fail_task(str(exc)) from exc

        summaries = []
        if len(set(sizes)) >= 2:
            for flavor in flavors:
                mine = [row for row in rows if row.flavor is flavor]
                summaries.append(ComplexitySummary(
                    flavor=flavor,
                    block_slope=loglog_slope([r.N_s for r in mine], [r.block_time for r in mine]),
                    naive_slope=loglog_slope([r.N_s for r in mine], [r.naive_time for r in mine]),
                ))
        else:
            logger.warning("Slope fit needs at least two distinct sizes")

        self.end_task(start_time)
        return rows, summaries
