#!/usr/bin/env python3
"""
Tests for rank decisions, the staircase and generalized spectra.
"""

import sys
from pathlib import Path

import numpy as np
import pytest
import scipy.linalg as la
from hypothesis import given, strategies as st

# Add src to path
sys.path.insert(0, str(Path(__file__).parent.parent / "src"))

from config_loader import Tolerances
from pencils.pencil_core import (
    MatrixPencil, DeflatingSubspace, as_matrix, numerical_rank, null_space, range_basis,
    staircase_reduce, minimal_indices, generalized_spectrum, is_regular, normal_rank_sampled,
    on_unit_circle, eigenvalues_on_unit_circle, is_e_neutral, verify_deflating, subspace_contained,
)
from utils.errors import InvalidInputError, NumericalFailureError


def test_as_matrix_promotes_and_validates():
    """Scalars and vectors become complex matrices; NaN and bad shapes are rejected."""
    print("Testing matrix promotion...")

    assert as_matrix(2.0).shape == (1, 1)
    assert as_matrix([1, 2]).shape == (2, 1)
    assert as_matrix([1, 2], shape=(1, 2)).shape == (1, 2)
    assert as_matrix([[1, 2]]).dtype == complex

    with pytest.raises(InvalidInputError):
        as_matrix([[np.nan]])
    with pytest.raises(InvalidInputError):
        as_matrix(np.eye(2), "E", (3, 3))
    with pytest.raises(InvalidInputError):
        MatrixPencil(np.eye(2), np.eye(3))

    print("✅ Matrix promotion: PASSED")


def test_rank_and_bases(tol):
    print("Testing SVD rank decisions...")

    M = np.array([[1.0, 1.0], [1.0, 1.0]])
    assert numerical_rank(M, tol) == 1
    assert numerical_rank(np.zeros((2, 3)), tol) == 0
    assert numerical_rank(np.zeros((0, 3)), tol) == 0

    N = null_space(np.array([[1.0, 1.0]]), tol)
    assert N.shape == (2, 1)
    assert np.allclose(np.array([[1.0, 1.0]]) @ N, 0.0)

    R = range_basis(M, tol)
    assert R.shape == (2, 1)
    assert subspace_contained(np.array([[1.0], [1.0]]), R) < 1e-12

    print("✅ Rank decisions: PASSED")


def test_ambiguous_rank_raises(tol):
    """A singular value just above the threshold aborts the structural decision."""
    print("Testing rank ambiguity detection...")

    E = np.diag([1.0, 5e-9])
    with pytest.raises(NumericalFailureError) as excinfo:
        numerical_rank(E, tol, strict=True)
    assert 'threshold' in excinfo.value.diagnostics

    with pytest.raises(NumericalFailureError):
        staircase_reduce(MatrixPencil(E, np.zeros((2, 2))), tol)

    # Widening the threshold past the small singular value settles it
    loose = tol.with_overrides(rank_rtol=1e-6)
    assert numerical_rank(E, loose, strict=True) == 1

    print("✅ Rank ambiguity: PASSED")


def test_running_example_spectrum(running_example, tol):
    print("Testing spectrum of the running example...")

    spec = generalized_spectrum(running_example.pencil, tol)
    assert spec.is_regular
    assert spec.finite_eigenvalues.size == 1
    assert abs(spec.finite_eigenvalues[0] - 1.0) < 1e-10
    assert spec.infinite_multiplicity == 1
    assert spec.normal_rank == 2
    assert spec.index == 1
    assert is_regular(running_example.pencil, tol)

    print("✅ Running example spectrum: PASSED")


def test_nilpotent_pencil_has_index_two(tol):
    spec = generalized_spectrum(MatrixPencil(np.array([[0.0, 1.0], [0.0, 0.0]]), np.eye(2)), tol)
    assert spec.finite_eigenvalues.size == 0
    assert spec.infinite_multiplicity == 2
    assert spec.index == 2


def test_singular_pencils(tol):
    """Zero 1x1 pencil is not regular; [z, -1] has one column minimal index 1."""
    print("Testing singular pencils...")

    zero = MatrixPencil(np.zeros((1, 1)), np.zeros((1, 1)))
    assert not is_regular(zero, tol)

    wide = MatrixPencil(np.array([[1.0, 0.0]]), np.array([[0.0, 1.0]]))
    spec = generalized_spectrum(wide, tol)
    assert spec.normal_rank == 1
    assert spec.finite_eigenvalues.size == 0
    assert minimal_indices(wide, tol) == {'column': [1], 'row': []}
    assert normal_rank_sampled(wide, 10, tol) == 1

    with pytest.raises(InvalidInputError):
        is_regular(wide, tol)

    tall = wide.adjoint()
    assert minimal_indices(tall, tol) == {'column': [], 'row': [1]}

    print("✅ Singular pencils: PASSED")


def test_staircase_is_block_triangular(tol):
    rng = np.random.default_rng(3)
    E = np.hstack([rng.normal(size=(3, 2)), np.zeros((3, 1))])
    A = np.hstack([rng.normal(size=(3, 2)), np.zeros((3, 1))])
    result = staircase_reduce(MatrixPencil(E, A), tol)
    assert result.reconstruction_residual < 1e-12
    assert result.structure.right_indices == [0]
    U, V = result.transforms
    assert np.allclose(U.conj().T @ U, np.eye(3))
    assert np.allclose(V.conj().T @ V, np.eye(3))


@given(seed=st.integers(min_value=0, max_value=10_000))
def test_finite_spectrum_matches_qz(seed):
    """Finite eigenvalues of a pencil with invertible E agree with the QZ values."""
    tol = Tolerances()
    rng = np.random.default_rng(seed)
    E = 2.0 * np.eye(3) + 0.3 * rng.normal(size=(3, 3))
    A = rng.normal(size=(3, 3))

    spec = generalized_spectrum(MatrixPencil(E, A), tol)
    reference = la.eigvals(A, E)
    assert spec.finite_eigenvalues.size == 3
    assert spec.infinite_multiplicity == 0
    for lam in spec.finite_eigenvalues:
        assert np.min(np.abs(reference - lam)) < 1e-8 * (1.0 + abs(lam))


def test_unit_circle_mask(tol):
    eigs = np.array([1.0, -1.0 + 1e-12, 0.5, 1j, 2.0])
    assert list(on_unit_circle(eigs, tol)) == [True, True, False, True, False]

    # The band grows with the pencil norm
    near = np.array([1.0 + 5e-8])
    assert not on_unit_circle(near, tol)[0]
    assert on_unit_circle(near, tol, scale=100.0)[0]


def test_unit_circle_eigenvalues_of_example(running_example, tol):
    spec = generalized_spectrum(running_example.pencil, tol)
    on_circle = eigenvalues_on_unit_circle(spec, tol)
    assert on_circle.size == 1
    assert abs(on_circle[0] - 1.0) < 1e-10


def test_e_neutrality(tol):
    E = np.array([[0.0, 1.0], [1.0, 0.0]])
    ok, value = is_e_neutral(np.array([[1.0], [0.0]]), E, tol)
    assert ok and value < 1e-14
    ok, _ = is_e_neutral(np.array([[1.0], [1.0]]), E, tol)
    assert not ok


def test_verify_deflating(tol):
    print("Testing deflating subspace verification...")

    p = MatrixPencil(np.eye(2), np.diag([1.0, 2.0]))
    e1 = np.array([[1.0], [0.0]])
    good = DeflatingSubspace(Y=e1, Z=e1, reduced=MatrixPencil([[1.0]], [[1.0]]))
    report = verify_deflating(p, good, tol)
    assert report['ok']
    assert report['residual'] < 1e-14

    bad = DeflatingSubspace(Y=e1, Z=e1, reduced=MatrixPencil([[1.0]], [[3.0]]))
    assert not verify_deflating(p, bad, tol)['ok']

    with pytest.raises(InvalidInputError):
        verify_deflating(p, DeflatingSubspace(Y=np.ones((3, 1)), Z=e1,
                                              reduced=MatrixPencil([[1.0]], [[1.0]])), tol)

    print("✅ Deflating subspace verification: PASSED")


def run_all_tests():
    """Run every test in this module through pytest."""
    return pytest.main([__file__, "-v"])


if __name__ == "__main__":
    sys.exit(run_all_tests())
