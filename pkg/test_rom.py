import dataclasses

import numpy as np
import pytest

import strom.rom
from conftest import exact_basis, tiny_spec, train_tiny
from strom.analysis import st_residual_norm
from strom.basis import d_tensor, dense_space_time_basis
from strom.config import REFERENCE_TARGET_MU, REFERENCE_TRAIN_MUS
from strom.errors import DimensionMismatchError, IllPosedReductionError
from strom.fom import solve_fom, space_time_dense
from strom.model import ProblemKind, ProblemSpec, assemble_system, source_matrix
from strom.rom import (
    Flavor,
    ReducedSystem,
    assemble,
    assemble_dense,
    assemble_unstructured,
    precompute,
    reconstruct,
    solve_reduced,
)


def relative_max_diff(a, b):
    scale = max(np.abs(a).max(initial=0.0), np.abs(b).max(initial=0.0))
    return 0.0 if scale == 0 else np.abs(a - b).max() / scale


def assert_same_operators(block, dense):
    assert relative_max_diff(block.a_hat, dense.a_hat) <= 1e-10
    assert relative_max_diff(block.f_hat, dense.f_hat) <= 1e-10
    assert relative_max_diff(block.u0_hat, dense.u0_hat) <= 1e-10


@pytest.mark.parametrize("flavor", list(Flavor))
@pytest.mark.parametrize("dims", [(1, 1), (2, 1), (3, 2)])
def test_block_assembly_matches_dense_projection(spec, target_system, flavor, dims):
    basis = train_tiny(spec, n_s=3, n_t=2).truncate(*dims)
    block = assemble(flavor, target_system, basis, spec)
    dense = assemble_dense(flavor, target_system, basis, spec)
    assert block.a_hat.shape == (dims[0] * dims[1],) * 2
    assert_same_operators(block, dense)


@pytest.mark.parametrize("flavor", list(Flavor))
def test_non_uniform_steps_match_dense_projection(flavor):
    spec = ProblemSpec(kind=ProblemKind.CONV_DIFF, nx=5, ny=5, nt=4, steps=(0.4, 0.2, 0.2, 0.2))
    basis = train_tiny(spec, n_s=3, n_t=2)
    system = assemble_system(spec, (0.04, 0.34))
    assert_same_operators(assemble(flavor, system, basis, spec), assemble_dense(flavor, system, basis, spec))


@pytest.mark.parametrize("flavor", list(Flavor))
def test_unstructured_path_matches_dense(spec, target_system, basis, flavor):
    assert_same_operators(
        assemble_unstructured(flavor, target_system, basis, spec),
        assemble_dense(flavor, target_system, basis, spec),
    )


def test_petrov_galerkin_operator_is_spd(spec, target_system, basis):
    a_hat = assemble(Flavor.PETROV_GALERKIN, target_system, basis, spec).a_hat
    assert np.abs(a_hat - a_hat.T).max() <= 1e-12 * np.abs(a_hat).max()
    assert np.linalg.eigvalsh(a_hat).min() > 0


def test_block_accessor_is_one_based(spec, target_system, basis):
    reduced = assemble(Flavor.GALERKIN, target_system, basis, spec)
    np.testing.assert_array_equal(reduced.block(2, 1), reduced.a_hat[3:6, 0:3])


def test_galerkin_identity_blocks(diffusion_spec):
    """With A = 0 the Galerkin operator reduces to Phi_st^T (I - shift) Phi_st"""
    basis = train_tiny(diffusion_spec, n_s=2, n_t=2)
    system = assemble_system(diffusion_spec, (-0.7, -0.7))
    zero = system.__class__(kind=system.kind, a_matrix=system.a_matrix * 0.0, mu=system.mu, band_width=0)
    reduced = assemble(Flavor.GALERKIN, zero, basis, diffusion_spec)
    d = d_tensor(basis)
    for jp in range(2):
        for j in range(2):
            expected = np.einsum("ki,ki->i", d[:, jp], d[:, j]) - np.einsum("ki,ki->i", d[1:, jp], d[:-1, j])
            np.testing.assert_allclose(reduced.block(jp + 1, j + 1), np.diag(expected), atol=1e-14)


def test_petrov_galerkin_minimizes_residual(spec, target_system, basis):
    norms = {}
    for flavor in Flavor:
        rom = solve_reduced(assemble(flavor, target_system, basis, spec)).reconstruct(basis)
        norms[flavor] = st_residual_norm(target_system, spec, None, rom)
    assert norms[Flavor.PETROV_GALERKIN] <= norms[Flavor.GALERKIN] + 1e-12 * max(1.0, norms[Flavor.GALERKIN])


def test_reduced_solutions_are_stationary(spec, target_system, basis):
    dense = space_time_dense(target_system, spec)
    phi_st = dense_space_time_basis(basis)
    rhs = dense.f_st + dense.u0_st
    a_phi = dense.a_st @ phi_st

    galerkin = solve_reduced(assemble(Flavor.GALERKIN, target_system, basis, spec))
    r = rhs - a_phi @ galerkin.x_hat
    scale = np.linalg.norm(a_phi, 2) * np.linalg.norm(galerkin.x_hat) + np.linalg.norm(rhs)
    assert np.linalg.norm(phi_st.T @ r) <= 1e-8 * scale

    pg = solve_reduced(assemble(Flavor.PETROV_GALERKIN, target_system, basis, spec))
    r = rhs - a_phi @ pg.x_hat
    scale = np.linalg.norm(a_phi, 2) * (np.linalg.norm(a_phi, 2) * np.linalg.norm(pg.x_hat) + np.linalg.norm(rhs))
    assert np.linalg.norm(a_phi.T @ r) <= 1e-8 * scale


def test_reconstruction_matches_dense_basis(spec, target_system, basis):
    solution = solve_reduced(assemble(Flavor.PETROV_GALERKIN, target_system, basis, spec))
    rom = solution.reconstruct(basis)
    np.testing.assert_allclose(rom.stacked(), dense_space_time_basis(basis) @ solution.x_hat, atol=1e-12)
    assert rom.mu == target_system.mu
    assert rom.states.shape == (spec.n_s, spec.nt)


def test_reconstruct_checks_coordinate_length(basis):
    with pytest.raises(DimensionMismatchError):
        reconstruct(basis, np.zeros(basis.n_s * basis.n_t + 1))


def test_singular_reduced_system():
    reduced = ReducedSystem(
        flavor=Flavor.GALERKIN, a_hat=np.zeros((2, 2)), f_hat=np.ones(2), u0_hat=np.zeros(2),
        n_s=2, n_t=1, mu=(0.0, 0.0), u0=np.zeros(3), time_steps=np.ones(1),
    )
    with pytest.raises(IllPosedReductionError):
        solve_reduced(reduced)


def test_basis_from_other_discretization_is_rejected(spec, target_system):
    other = train_tiny(tiny_spec(spec.kind, mesh=5), n_s=2, n_t=1)
    with pytest.raises(DimensionMismatchError):
        assemble(Flavor.GALERKIN, target_system, other, spec)


def test_sign_flip_in_d_blocks_breaks_oracle_agreement(monkeypatch, diffusion_spec):
    basis = train_tiny(diffusion_spec, n_s=2, n_t=2)
    system = assemble_system(diffusion_spec, REFERENCE_TARGET_MU[diffusion_spec.kind])

    def flipped(b):
        d = d_tensor(b).copy()
        d[1, 0, 0] *= -1.0
        return d

    monkeypatch.setattr(strom.rom, "d_tensor", flipped)
    block = assemble(Flavor.GALERKIN, system, basis, diffusion_spec)
    dense = assemble_dense(Flavor.GALERKIN, system, basis, diffusion_spec)
    assert relative_max_diff(block.a_hat, dense.a_hat) > 1e-6


@pytest.mark.parametrize("flavor", list(Flavor))
def test_trajectory_in_span_is_reproduced(spec, target_system, flavor):
    fom = solve_fom(target_system, spec)
    basis = exact_basis(fom)
    rom = solve_reduced(assemble(flavor, target_system, basis, spec)).reconstruct(basis)
    assert np.linalg.norm(rom.states - fom.states) <= 1e-8 * np.linalg.norm(fom.states)


@pytest.mark.parametrize("flavor", list(Flavor))
def test_offline_projection_is_reused_across_parameters(spec, basis, flavor):
    offline = precompute(basis, spec)
    for mu in REFERENCE_TRAIN_MUS[spec.kind][:2]:
        system = assemble_system(spec, mu)
        reused = assemble(flavor, system, basis, spec, offline=offline)
        assert_same_operators(reused, assemble_dense(flavor, system, basis, spec))
        assert reused.mu == system.mu


def test_static_source_is_projected_once(spec, basis):
    offline = precompute(basis, spec)
    if spec.kind is ProblemKind.DIFFUSION:
        assert offline.static_source is None
        return
    dts = spec.time_steps()
    forcing = source_matrix(spec, REFERENCE_TARGET_MU[spec.kind], spec.times()) * dts[None, :]
    np.testing.assert_allclose(offline.static_source.projected, basis.phi_s.T @ forcing,
                               rtol=1e-12, atol=1e-12 * max(1.0, np.abs(forcing).max()))


@pytest.mark.parametrize("flavor", list(Flavor))
def test_affine_shortcut_matches_direct_source_projection(spec, target_system, basis, flavor):
    generic = dataclasses.replace(target_system, affine_weights=None)
    assert_same_operators(
        assemble(flavor, target_system, basis, spec),
        assemble(flavor, generic, basis, spec),
    )


def test_offline_projection_must_match_basis(spec, target_system, basis):
    offline = precompute(basis.truncate(2, 1), spec)
    with pytest.raises(DimensionMismatchError):
        assemble(Flavor.GALERKIN, target_system, basis, spec, offline=offline)


def test_identity_part_sits_on_the_spatial_diagonal(diffusion_spec):
    basis = train_tiny(diffusion_spec, n_s=3, n_t=2)
    offline = precompute(basis, diffusion_spec)
    for tensor in (offline.galerkin_identity, offline.pg_identity):
        for a in range(2):
            for b in range(2):
                block = tensor[a, :, b, :]
                np.testing.assert_array_equal(block, np.diag(np.diag(block)))
