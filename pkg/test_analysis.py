import math

import numpy as np
import pytest
import scipy.sparse as sp

from conftest import tiny_spec
from strom.analysis import (
    StudyReport,
    check_error_bound,
    complexity_study,
    loglog_slope,
    measure,
    random_basis,
    relative_error,
    stability_constant,
    st_residual_norm,
)
from strom.errors import ConfigurationError, DimensionMismatchError, OracleScaleError, UndefinedRelativeErrorError
from strom.fom import Trajectory, solve_fom, space_time_dense, space_time_operator_norm_bounds, step_residuals
from strom.model import ProblemKind, SpatialSystem, assemble_system
from strom.rom import Flavor, assemble, assemble_unstructured, solve_reduced


def test_relative_error_of_identical_trajectories(spec, target_system):
    fom = solve_fom(target_system, spec)
    assert relative_error(fom, fom) == 0.0


def test_relative_error_definition(spec, target_system):
    fom = solve_fom(target_system, spec)
    perturbed = Trajectory(states=fom.states * 1.01, u0=fom.u0, time_steps=fom.time_steps, mu=fom.mu)
    assert relative_error(fom, perturbed) == pytest.approx(0.01)


def test_relative_error_needs_nonzero_reference():
    zero = Trajectory(states=np.zeros((4, 2)), u0=np.zeros(4), time_steps=np.ones(2), mu=(0.0, 0.0))
    with pytest.raises(UndefinedRelativeErrorError):
        relative_error(zero, zero)
    other = Trajectory(states=np.ones((4, 3)), u0=np.zeros(4), time_steps=np.ones(3), mu=(0.0, 0.0))
    with pytest.raises(DimensionMismatchError):
        relative_error(other, zero)


def test_residual_norm_of_fom_vanishes(spec, target_system):
    fom = solve_fom(target_system, spec)
    scale = max(1.0, np.linalg.norm(fom.states))
    assert st_residual_norm(target_system, spec, target_system.mu, fom) <= 1e-10 * scale


def test_residual_norm_matches_dense_residual(spec, target_system, basis):
    rom = solve_reduced(assemble(Flavor.GALERKIN, target_system, basis, spec)).reconstruct(basis)
    dense = space_time_dense(target_system, spec)
    expected = np.linalg.norm(dense.f_st + dense.u0_st - dense.a_st @ rom.stacked())
    assert st_residual_norm(target_system, spec, None, rom) == pytest.approx(expected, rel=1e-10, abs=1e-12)


def test_residual_norm_rejects_other_parameter(spec, target_system):
    fom = solve_fom(target_system, spec)
    with pytest.raises(DimensionMismatchError):
        st_residual_norm(target_system, spec, (9.0, 9.0), fom)


def test_stability_constant_matches_dense_svd(spec, target_system):
    estimate = stability_constant(target_system, spec.dt, spec.nt, seed=3)
    _, sigma_min = space_time_operator_norm_bounds(space_time_dense(target_system, spec))
    assert estimate.converged
    assert estimate.inv_norm == pytest.approx(1.0 / sigma_min, rel=1e-6)
    assert estimate.eta / math.sqrt(spec.nt) == pytest.approx(estimate.inv_norm, rel=1e-15)


def test_stability_constant_of_pure_shift():
    spec = tiny_spec(ProblemKind.CONV_DIFF, mesh=4, steps=6)
    n = spec.n_s
    system = SpatialSystem(kind=spec.kind, a_matrix=sp.csr_matrix((n, n)), mu=(0.04, 0.34), band_width=0)
    estimate = stability_constant(system, 0.1, 6)
    _, sigma_min = space_time_operator_norm_bounds(space_time_dense(system, spec))
    assert estimate.inv_norm == pytest.approx(1.0 / sigma_min, rel=1e-6)


def test_single_step_symmetric_operator():
    spec = tiny_spec(ProblemKind.DIFFUSION, steps=1)
    system = assemble_system(spec, (-0.7, -0.7))
    dt = 0.01
    estimate = stability_constant(system, dt, 1)
    eigenvalues = np.linalg.eigvalsh(system.step_matrix(dt).toarray())
    assert estimate.inv_norm == pytest.approx(1.0 / np.abs(eigenvalues).min(), rel=1e-6)
    assert estimate.eta == pytest.approx(estimate.inv_norm)


def test_stability_constant_respects_cap(target_system):
    with pytest.raises(OracleScaleError) as err:
        stability_constant(target_system, 0.1, 10, cap=target_system.n_s * 5)
    assert err.value.what == "Stability estimate"
    assert str(err.value).startswith("Stability estimate refused")
    assert "oracle" not in str(err.value)


def test_non_convergence_is_flagged(spec, target_system, caplog):
    estimate = stability_constant(target_system, spec.dt, spec.nt, tol=0.0, max_iter=3)
    assert not estimate.converged
    assert estimate.iterations == 3
    assert estimate.inv_norm > 0
    assert "without converging" in caplog.text


@pytest.mark.parametrize("flavor", list(Flavor))
def test_error_bound_holds_for_rom(spec, target_system, basis, flavor):
    fom = solve_fom(target_system, spec)
    rom = solve_reduced(assemble(flavor, target_system, basis, spec)).reconstruct(basis)
    eta = stability_constant(target_system, spec.dt, spec.nt).eta
    report = check_error_bound(fom, rom, step_residuals(target_system, spec, rom), eta)
    assert report.holds
    assert report.lhs <= report.rhs * (1 + 1e-10)


def test_error_bound_holds_for_random_perturbations(diffusion_spec):
    system = assemble_system(diffusion_spec, (-0.7, -0.7))
    fom = solve_fom(system, diffusion_spec)
    eta = stability_constant(system, diffusion_spec.dt, diffusion_spec.nt).eta
    rng = np.random.default_rng(7)
    for _ in range(20):
        noise = rng.standard_normal(fom.states.shape) * rng.uniform(1e-6, 1.0)
        approx = Trajectory(states=fom.states + noise, u0=fom.u0, time_steps=fom.time_steps, mu=fom.mu)
        report = check_error_bound(fom, approx, step_residuals(system, diffusion_spec, approx), eta)
        assert report.holds


def test_error_bound_of_exact_solution(diffusion_spec):
    system = assemble_system(diffusion_spec, (-0.7, -0.7))
    fom = solve_fom(system, diffusion_spec)
    report = check_error_bound(fom, fom, np.zeros_like(fom.states), 1.0)
    assert report.lhs == 0.0 and report.holds


def test_measure_takes_the_median():
    calls = []
    assert measure(lambda: calls.append(1), repeats=5) >= 0.0
    assert len(calls) == 6  # warm-up plus five timed runs
    with pytest.raises(ConfigurationError):
        measure(lambda: None, repeats=2)


def test_loglog_slope():
    sizes = [400, 900, 1600, 2500]
    assert loglog_slope(sizes, [3.0 * s**2 for s in sizes]) == pytest.approx(2.0)
    assert loglog_slope(sizes, [0.5 * s for s in sizes]) == pytest.approx(1.0)


def test_study_report_fills_speedup():
    report = StudyReport(
        kind=ProblemKind.DIFFUSION, flavor=Flavor.GALERKIN, mu1=-0.7, mu2=-0.7, n_s=5, n_t=3,
        fom_time_s=0.6, rom_online_time_s=0.002,
    )
    assert report.speedup == pytest.approx(300.0)
    assert report.status == "ok"
    assert list(StudyReport.model_fields)[:6] == ["kind", "flavor", "mu1", "mu2", "n_s", "n_t"]


def test_random_basis_is_orthonormal():
    basis = random_basis(30, 6, 4, 2, seed=1)
    np.testing.assert_allclose(basis.phi_s.T @ basis.phi_s, np.eye(4), atol=1e-12)
    for i in range(4):
        np.testing.assert_allclose(basis.phi_t[i].T @ basis.phi_t[i], np.eye(2), atol=1e-12)


def test_block_and_unstructured_assembly_agree_on_random_basis():
    spec = tiny_spec(ProblemKind.DIFFUSION, mesh=7, steps=6)
    system = assemble_system(spec, (-0.7, -0.7))
    basis = random_basis(spec.n_s, spec.nt, 4, 2, seed=2)
    for flavor in Flavor:
        block = assemble(flavor, system, basis, spec)
        naive = assemble_unstructured(flavor, system, basis, spec)
        np.testing.assert_allclose(block.a_hat, naive.a_hat, atol=1e-10 * np.abs(naive.a_hat).max())
        np.testing.assert_allclose(block.f_hat, naive.f_hat, atol=1e-10 * np.abs(naive.f_hat).max())


def test_complexity_study_rows():
    rows = complexity_study([16, 25], n_steps=3, n_s=2, n_t=1, repeats=3)
    assert [(r.N_s, r.flavor) for r in rows] == [
        (16, Flavor.GALERKIN), (16, Flavor.PETROV_GALERKIN), (25, Flavor.GALERKIN), (25, Flavor.PETROV_GALERKIN),
    ]
    assert all(r.block_time > 0 and r.naive_time > 0 for r in rows)
    with pytest.raises(ConfigurationError):
        complexity_study([20], n_steps=3, n_s=2, n_t=1)


@pytest.mark.fullscale
def test_complexity_scaling_slopes():
    rows = complexity_study([400, 900, 1600, 2500], n_steps=20, n_s=4, n_t=2, repeats=3)
    for flavor in Flavor:
        mine = [r for r in rows if r.flavor is flavor]
        sizes = [r.N_s for r in mine]
        assert loglog_slope(sizes, [r.block_time for r in mine]) <= 1.5
        assert loglog_slope(sizes, [r.naive_time for r in mine]) >= 1.7
