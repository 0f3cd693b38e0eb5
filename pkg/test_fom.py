import numpy as np
import pytest
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from conftest import tiny_spec
from strom.errors import DimensionMismatchError, FactorizationError, OracleScaleError
from strom.fom import (
    StepSolver,
    solve_fom,
    space_time_dense,
    step_residual,
    step_residuals,
)
from strom.model import ProblemKind, ProblemSpec, SpatialSystem, assemble_system, initial_state


def zero_system(spec, mu=(0.04, 0.34)):
    n = spec.n_s
    return SpatialSystem(kind=spec.kind, a_matrix=sp.csr_matrix((n, n)), mu=mu, band_width=0)


def test_zero_operator_without_source_keeps_initial_state():
    spec = tiny_spec(ProblemKind.CONV_DIFF)
    trajectory = solve_fom(zero_system(spec), spec)
    u0 = initial_state(spec, (0.04, 0.34))
    for k in range(spec.nt):
        np.testing.assert_allclose(trajectory.states[:, k], u0)


def test_marching_matches_all_at_once_solve(spec, target_system):
    trajectory = solve_fom(target_system, spec)
    dense = space_time_dense(target_system, spec)
    u = np.linalg.solve(dense.a_st, dense.f_st + dense.u0_st)
    np.testing.assert_allclose(trajectory.stacked(), u, rtol=0, atol=1e-10 * max(1.0, np.abs(u).max()))


def test_space_time_operator_structure(diffusion_spec):
    system = assemble_system(diffusion_spec, (-0.7, -0.7))
    dense = space_time_dense(system, diffusion_spec)
    n = system.n_s
    a = system.a_matrix.toarray()
    dt = diffusion_spec.dt
    np.testing.assert_allclose(dense.a_st[n:2 * n, n:2 * n], np.eye(n) - dt * a)
    np.testing.assert_allclose(dense.a_st[n:2 * n, :n], -np.eye(n))
    assert not np.any(dense.a_st[:n, n:])
    assert not np.any(dense.u0_st[n:])


def test_fom_residual_vanishes(spec, target_system):
    trajectory = solve_fom(target_system, spec)
    residuals = step_residuals(target_system, spec, trajectory)
    scale = max(1.0, np.abs(trajectory.states).max())
    assert np.abs(residuals).max() <= 1e-10 * scale


def test_stacked_is_time_major(diffusion_spec):
    trajectory = solve_fom(assemble_system(diffusion_spec, (-0.7, -0.7)), diffusion_spec)
    n = diffusion_spec.n_s
    np.testing.assert_array_equal(trajectory.stacked()[n:2 * n], trajectory.states[:, 1])


def test_non_uniform_steps_match_dense():
    spec = ProblemSpec(kind=ProblemKind.CONV_DIFF, nx=5, ny=5, nt=4, steps=(0.4, 0.2, 0.2, 0.2))
    system = assemble_system(spec, (0.04, 0.34))
    solver = StepSolver(system, spec.time_steps())
    assert len(solver._lu) == 2

    trajectory = solve_fom(system, spec)
    dense = space_time_dense(system, spec)
    u = np.linalg.solve(dense.a_st, dense.f_st + dense.u0_st)
    np.testing.assert_allclose(trajectory.stacked(), u, atol=1e-10 * np.abs(u).max())
    with pytest.raises(ValueError):
        trajectory.dt


def test_step_solver_transpose():
    spec = tiny_spec(ProblemKind.CONV_DIFF)
    system = assemble_system(spec, (0.04, 0.34))
    solver = StepSolver(system, spec.time_steps())
    rhs = np.random.default_rng(0).standard_normal(spec.n_s)
    m = system.step_matrix(spec.dt).toarray()
    np.testing.assert_allclose(m.T @ solver.solve(1, rhs, transpose=True), rhs, atol=1e-10)
    np.testing.assert_allclose(m @ solver.solve(1, rhs), rhs, atol=1e-10)


def test_step_solver_reuses_one_factorization():
    spec = tiny_spec(ProblemKind.CONV_DIFF, steps=4)
    system = assemble_system(spec, (0.04, 0.34))
    solver = StepSolver(system, spec.time_steps())
    assert len(solver._lu) == 1

    rhs = np.random.default_rng(1).standard_normal((spec.nt, spec.n_s))
    fresh = splu(system.step_matrix(spec.dt))
    for k in range(1, spec.nt + 1):
        np.testing.assert_array_equal(solver.solve(k, rhs[k - 1]), fresh.solve(rhs[k - 1]))
        np.testing.assert_array_equal(
            solver.solve(k, rhs[k - 1], transpose=True), fresh.solve(rhs[k - 1], trans="T")
        )


def test_non_positive_step_is_a_factorization_error():
    spec = tiny_spec(ProblemKind.CONV_DIFF)
    system = assemble_system(spec, (0.04, 0.34))
    with pytest.raises(FactorizationError) as err:
        StepSolver(system, np.array([0.1, 0.0]))
    assert err.value.step == 2


def test_oracle_cap():
    spec = tiny_spec(ProblemKind.CONV_DIFF, mesh=6, steps=5)
    system = assemble_system(spec, (0.04, 0.34))
    with pytest.raises(OracleScaleError) as err:
        space_time_dense(system, spec, oracle_cap=100)
    assert err.value.size == 125
    assert str(err.value).startswith("Dense oracle refused")


def test_step_residual_checks_shapes():
    spec = tiny_spec(ProblemKind.CONV_DIFF)
    system = assemble_system(spec, (0.04, 0.34))
    n = spec.n_s
    with pytest.raises(DimensionMismatchError):
        step_residual(system, 0.1, np.zeros(n), np.zeros(n + 1), np.zeros(n))
    assert not np.any(step_residual(system, 0.1, np.zeros(n), np.zeros(n), np.zeros(n)))


def test_fom_rejects_mismatched_spec():
    system = assemble_system(tiny_spec(ProblemKind.CONV_DIFF, mesh=4), (0.04, 0.34))
    with pytest.raises(DimensionMismatchError):
        solve_fom(system, tiny_spec(ProblemKind.CONV_DIFF, mesh=6))
