"""
Shared tiny-scale fixtures
"""

import json

import numpy as np
import pytest

from strom.basis import SpaceTimeBasis, build_basis, build_snapshots
from strom.config import REFERENCE_TARGET_MU, REFERENCE_TRAIN_MUS
from strom.fom import solve_fom
from strom.model import ProblemKind, ProblemSpec, assemble_system

collect_ignore_glob = ["examples/*"]


def tiny_spec(kind: ProblemKind, mesh: int = 6, steps: int = 5, **kwargs) -> ProblemSpec:
    return ProblemSpec(kind=kind, nx=mesh, ny=mesh, nt=steps, **kwargs)


def train_tiny(spec: ProblemSpec, n_s: int, n_t: int, n_train: int = 2, method: str = "direct"):
    mus = REFERENCE_TRAIN_MUS[spec.kind][:n_train]
    trajectories = [solve_fom(assemble_system(spec, mu), spec) for mu in mus]
    return build_basis(build_snapshots(trajectories), n_s, n_t, method=method)


def exact_basis(trajectory, rel_tol: float = 1e-12) -> SpaceTimeBasis:
    """Basis whose span holds ``trajectory``: its left singular vectors, one temporal mode each"""
    w, sigma, vt = np.linalg.svd(trajectory.states, full_matrices=False)
    r = int(np.sum(sigma > rel_tol * sigma[0]))
    return SpaceTimeBasis(
        phi_s=w[:, :r],
        phi_t=vt[:r, :, None],
        spatial_singular_values=sigma,
        n_mu=1,
        training_mus=[trajectory.mu],
    )


@pytest.fixture(params=list(ProblemKind), ids=lambda kind: kind.value)
def kind(request):
    return request.param


@pytest.fixture
def spec(kind):
    return tiny_spec(kind)


@pytest.fixture
def target_system(spec):
    return assemble_system(spec, REFERENCE_TARGET_MU[spec.kind])


@pytest.fixture
def basis(spec):
    return train_tiny(spec, n_s=3, n_t=2)


@pytest.fixture
def diffusion_spec():
    return tiny_spec(ProblemKind.DIFFUSION)


@pytest.fixture
def tiny_config(tmp_path):
    """A complete run configuration at tiny scale, written to disk"""
    payload = {
        "problem": {"kind": "Diffusion2D", "nx": 6, "ny": 6, "nt": 5},
        "train_mus": [[-0.9, -0.9], [-0.9, -0.5], [-0.5, -0.9]],
        "target_mu": [-0.7, -0.7],
        "test_mus": [[-0.7, -0.7], [-0.6, -0.8]],
        "n_s": 2,
        "n_t": 2,
        "timing_repeats": 3,
        "bound_nt_list": [1, 2, 3],
        "output_dir": str(tmp_path / "results"),
        "verify": {"kinds": ["Diffusion2D"], "meshes": [4], "steps": [3]},
    }
    path = tmp_path / "tiny.json"
    path.write_text(json.dumps(payload))
    return path
