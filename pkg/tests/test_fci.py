"""Exact diagonalization layer and the shared lowest-eigenpair solver."""

import numpy as np
import pytest
import scipy.sparse

from oracles import all_determinants, dense_hamiltonian, random_hamiltonian
from qsci_afqmc import fci
from qsci_afqmc._eigen import EigensolverError, lowest_eigenpair
from qsci_afqmc.detops import Determinant, hf_determinant
from qsci_afqmc.fci import (
    CiSpace,
    build_ci_matrix,
    ci_as_trial,
    fci_ground_state,
)
from qsci_afqmc.hamio import ActiveSpaceSpec, fold_core

ENERGY_TOL = 1e-8
MATRIX_TOL = 1e-12


# ---------------------------------------------------------------------------
# Determinant space enumeration
# ---------------------------------------------------------------------------

def test_space_dimension_and_order():
    space = CiSpace.build(3, 2, 1)
    assert space.dimension == 9
    # alpha-major with lexicographic occupied tuples in each spin sector
    assert space.determinants[0].alpha.occupied == (0, 1)
    assert space.determinants[0].beta.occupied == (0,)
    assert space.determinants[2].beta.occupied == (2,)
    assert space.determinants[3].alpha.occupied == (0, 2)
    assert space.determinants == tuple(all_determinants(3, 2, 1))


def test_space_index_lookup():
    space = CiSpace.build(3, 1, 1)
    for i, det in enumerate(space.determinants):
        assert space.index(det) == i
    with pytest.raises(KeyError):
        space.index(hf_determinant(3, 2, 2))


# ---------------------------------------------------------------------------
# Matrix construction
# ---------------------------------------------------------------------------

@pytest.mark.parametrize("shape", [(3, 1, 1), (3, 2, 1), (4, 2, 2)])
def test_ci_matrix_matches_operator_oracle(shape):
    n, na, nb = shape
    ham = random_hamiltonian(n, na, nb, np.random.default_rng(5))
    space = CiSpace.build(n, na, nb)
    mat = build_ci_matrix(ham, space)
    ref = dense_hamiltonian(ham, space.determinants)
    assert np.abs(mat - ref).max() < MATRIX_TOL
    np.testing.assert_array_equal(mat, mat.T)


def test_ci_matrix_sparse_agrees_with_dense():
    ham = random_hamiltonian(4, 2, 2, np.random.default_rng(6))
    space = CiSpace.build(4, 2, 2)
    dense = build_ci_matrix(ham, space)
    sparse = build_ci_matrix(ham, space, sparse=True)
    assert scipy.sparse.issparse(sparse)
    assert np.abs(sparse.toarray() - dense).max() == 0.0


def test_ci_matrix_rejects_partial_space():
    ham = random_hamiltonian(3, 1, 1, np.random.default_rng(7))
    space = CiSpace.build(3, 1, 1)
    broken = CiSpace(space.determinants[:5], 3, 1, 1)
    with pytest.raises(ValueError, match="product"):
        build_ci_matrix(ham, broken)


# ---------------------------------------------------------------------------
# Ground states against the bundled references
# ---------------------------------------------------------------------------

@pytest.mark.parametrize("fixture", [
    "h2_sto6g_r1.40",
    "h4_sto6g_r2.00",
    "h2o_sto3g_r1.00",
    "h4_631g_r2.00",
])
def test_ground_state_energy_matches_reference(load_ham, reference, fixture):
    result = fci_ground_state(load_ham(fixture))
    assert result.space.dimension == reference[fixture]["fci_dimension"]
    assert abs(result.energy - reference[fixture]["e_fci"]) < ENERGY_TOL


def test_casci_energy_matches_reference(load_ham, reference):
    ham = load_ham("h2o_sto3g_r1.00")
    cas = reference["h2o_sto3g_r1.00"]["cas"]
    spec = ActiveSpaceSpec(cas["n_core"], tuple(cas["active_orbitals"]),
                           ham.n_alpha - cas["n_core"],
                           ham.n_beta - cas["n_core"])
    result = fci_ground_state(fold_core(ham, spec))
    assert result.space.dimension == cas["dimension"]
    assert abs(result.energy - cas["e_casci"]) < ENERGY_TOL


def test_ground_state_sign_and_norm(load_fci):
    result = load_fci("h2_sto6g_r1.40")
    pivot = int(np.argmax(np.abs(result.coefficients)))
    assert result.coefficients[pivot] > 0
    assert abs(np.linalg.norm(result.coefficients) - 1.0) < 1e-12


def test_sparse_path_reproduces_dense_result(load_ham, load_fci):
    ham = load_ham("h4_sto6g_r2.00")
    dense = load_fci("h4_sto6g_r2.00")
    sparse = fci_ground_state(ham, dense_cutoff=10)
    assert abs(sparse.energy - dense.energy) < 1e-9
    overlap = abs(np.dot(sparse.coefficients, dense.coefficients))
    assert abs(overlap - 1.0) < 1e-8


def test_dimension_guard(load_ham, monkeypatch):
    monkeypatch.setattr(fci, "MAX_DIMENSION", 10)
    with pytest.raises(ValueError, match="exceeds"):
        fci_ground_state(load_ham("h4_sto6g_r2.00"))


# ---------------------------------------------------------------------------
# CI vector -> trial packaging
# ---------------------------------------------------------------------------

def test_ci_as_trial_keeps_everything_by_default(load_fci):
    result = load_fci("h2_sto6g_r1.40")
    trial = ci_as_trial(result)
    kept = np.abs(result.coefficients) > 0.0
    assert len(trial.determinants) == int(kept.sum())


def test_ci_as_trial_truncation(load_fci):
    result = load_fci("h4_sto6g_r2.00")
    trial = ci_as_trial(result, truncation=0.05)
    expected = int((np.abs(result.coefficients) > 0.05).sum())
    assert len(trial.determinants) == expected
    assert expected < result.space.dimension


def test_ci_as_trial_never_empty(load_fci):
    result = load_fci("h2_sto6g_r1.40")
    trial = ci_as_trial(result, truncation=10.0)
    assert len(trial.determinants) == 1
    big = result.space.determinants[int(np.argmax(np.abs(result.coefficients)))]
    assert trial.determinants[0] == big


# ---------------------------------------------------------------------------
# Lowest-eigenpair solver
# ---------------------------------------------------------------------------

def _random_symmetric(dim, seed, gap=1.0):
    rng = np.random.default_rng(seed)
    a = rng.standard_normal((dim, dim))
    mat = 0.5 * (a + a.T) + np.diag(np.linspace(0.0, 3.0 * dim, dim))
    mat[0, 0] -= gap * dim   # pull one diagonal entry down to open a gap
    return mat


@pytest.mark.parametrize("dim", [6, 40, 120])
def test_davidson_matches_dense(dim):
    mat = _random_symmetric(dim, seed=dim)
    e_dense, v_dense = lowest_eigenpair(mat, dense_cutoff=10 ** 9)
    e_dav, v_dav = lowest_eigenpair(mat, dense_cutoff=1)
    assert abs(e_dav - e_dense) < 1e-8
    assert abs(abs(np.dot(v_dav, v_dense)) - 1.0) < 1e-6


def test_davidson_accepts_sparse_input():
    mat = _random_symmetric(80, seed=3)
    e_ref, _ = lowest_eigenpair(mat, dense_cutoff=10 ** 9)
    e_sp, _ = lowest_eigenpair(scipy.sparse.csr_matrix(mat), dense_cutoff=1)
    assert abs(e_sp - e_ref) < 1e-8


def test_davidson_subspace_restart():
    # dim > _MAX_SUBSPACE with a small spectral gap forces at least one restart
    mat = _random_symmetric(200, seed=9, gap=0.02)
    e_ref, _ = lowest_eigenpair(mat, dense_cutoff=10 ** 9)
    e_dav, _ = lowest_eigenpair(mat, dense_cutoff=1)
    assert abs(e_dav - e_ref) < 1e-8


def test_davidson_iteration_budget():
    mat = _random_symmetric(60, seed=4)
    with pytest.raises(EigensolverError, match="did not reach"):
        lowest_eigenpair(mat, dense_cutoff=1, max_iter=2)


def test_solver_rejects_rectangular():
    with pytest.raises(ValueError, match="square"):
        lowest_eigenpair(np.zeros((3, 2)))


def test_solver_exact_on_diagonal():
    e, v = lowest_eigenpair(np.diag([3.0, -1.0, 2.0]))
    assert e == -1.0
    assert abs(abs(v[1]) - 1.0) < 1e-15
