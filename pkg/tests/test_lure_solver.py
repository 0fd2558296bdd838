#!/usr/bin/env python3
"""
Tests for the Lur'e solvers, certificates and deflating subspaces.
"""

import sys
from pathlib import Path

import numpy as np
import pytest

# Add src to path
sys.path.insert(0, str(Path(__file__).parent.parent / "src"))

from conftest import SQRT3
from pencils.pencil_core import numerical_rank
from systems.system_forms import system_space
from systems.system_io import load_system, load_solution_file
from analysis.popov_kyp import kyp_matrix, popov_normal_rank
from solvers.lure_solver import (
    LureSolution, kkt_gram, normalize_factor_phase, dare_residual, dare_fixed_point, lure_solve_ede,
    lure_verify, lure_solve, deflating_from_solution, solution_to_dict, solution_from_dict,
)
from utils.errors import InvalidInputError, NumericalFailureError, UnsupportedStructureError


@pytest.fixture
def example_solution(running_example, tol):
    return lure_solve(running_example, tol=tol)


def test_ede_part_solution(ede_part, tol):
    """X_s = sqrt(3) on the scalar EDE part, by both solver paths."""
    print("Testing Lur'e solution of the EDE part...")

    for path in ('auto', 'bvd', 'dare'):
        sol = lure_solve_ede(ede_part, path, tol)
        assert abs(sol.X[0, 0] - SQRT3) < 1e-10, path
        assert sol.q == 1
        assert abs(sol.K[0, 0] - np.sqrt(2.0)) < 1e-10
        assert abs(sol.L[0, 0] + (SQRT3 + 1.0) / np.sqrt(2.0)) < 1e-10

    with pytest.raises(InvalidInputError):
        lure_solve_ede(ede_part, 'newton', tol)

    print("✅ EDE part solution: PASSED")


def test_running_example_solution(running_example, example_solution, example_solution_arrays, tol):
    print("Testing Lur'e solution of the running example...")

    sol = example_solution
    EXE = running_example.E.conj().T @ sol.X @ running_example.E
    assert np.allclose(EXE, [[0.0, 0.0], [0.0, SQRT3]], atol=1e-8)
    assert np.allclose(sol.X, example_solution_arrays['X'], atol=1e-8)
    assert np.allclose(sol.K, example_solution_arrays['K'], atol=1e-8)
    assert np.allclose(sol.L, example_solution_arrays['L'], atol=1e-8)

    expected = np.hstack([example_solution_arrays['K'], example_solution_arrays['L']])
    assert np.allclose(kkt_gram(sol), expected.T @ expected, atol=1e-8)

    cert = sol.certificate
    assert cert.residual_on_V <= 1e-8
    assert cert.rank_condition_ok and cert.stabilizing and cert.kyp_feasible
    assert cert.passed(tol)

    # M(X) - [K L]^*[K L] = [[1, 0, 0], [0, -1, 1], [0, 1, -1]] vanishes on V only
    diff = kyp_matrix(running_example, sol.X) - kkt_gram(sol)
    assert np.allclose(diff, [[1, 0, 0], [0, -1, 1], [0, 1, -1]], atol=1e-8)
    V = system_space(running_example, tol=tol)
    assert np.allclose(V.conj().T @ diff @ V, 0.0, atol=1e-8)

    print("✅ Running example solution: PASSED")


def test_shipped_solution_verifies(running_example, systems_dir, tol):
    parsed = load_solution_file(systems_dir / "running_example_solution.json")
    arrays = parsed.arrays(running_example.n, running_example.m)
    sol = LureSolution(X=arrays['X'], K=arrays['K'], L=arrays['L'], q=parsed.q)
    assert lure_verify(running_example, sol, tol).passed(tol)


def test_perturbed_solution_fails(running_example, example_solution, tol):
    print("Testing certificate on a perturbed solution...")

    sol = example_solution
    bad = LureSolution(X=sol.X + 1e-3 * np.eye(2), K=sol.K, L=sol.L, q=sol.q)
    cert = lure_verify(running_example, bad, tol)
    assert cert.residual_on_V > 1e-6
    assert not cert.passed(tol)

    with pytest.raises(InvalidInputError):
        lure_verify(running_example, LureSolution(X=sol.X, K=np.ones((1, 3)), L=sol.L, q=1), tol)

    print("✅ Perturbed solution: PASSED")


def test_dare_corpus(ede_corpus, tol):
    """The Lur'e solution of an explicit system is the stabilizing DARE solution."""
    print("Testing DARE agreement on the random corpus...")

    for w in ede_corpus:
        sol = lure_solve_ede(w, 'auto', tol)
        assert sol.q == w.m
        assert dare_residual(w.A, w.B, w.Q, w.R, w.S, sol.X) <= 1e-8
        reference = dare_fixed_point(w.A, w.B, w.Q, w.R, w.S, tol)
        assert np.linalg.norm(sol.X - reference, 2) <= 1e-7 * max(1.0, np.linalg.norm(reference, 2))

        cert = lure_verify(w, sol, tol)
        assert cert.passed(tol)

    print("✅ DARE corpus: PASSED")


def test_not_i_controllable_is_unsupported(systems_dir, tol):
    w = load_system(systems_dir / "not_i_controllable.json")
    with pytest.raises(UnsupportedStructureError):
        lure_solve(w, tol=tol)


def test_deflating_subspaces_from_solution(running_example, example_solution, tol):
    print("Testing deflating subspaces built from the solution...")

    pal = deflating_from_solution(running_example, example_solution, 'palindromic', tol)
    assert pal.dimension == 3
    assert pal.checks['deflating']['ok']
    assert pal.checks['neutral']
    assert pal.checks['ker_E_star_residual'] < 1e-8
    assert np.allclose(running_example.E.conj().T @ pal.G1, 0.0, atol=1e-8)

    bvd = deflating_from_solution(running_example, example_solution, 'bvd', tol)
    assert bvd.checks['deflating']['ok']
    assert bvd.checks['ker_E_star_residual'] < 1e-8

    with pytest.raises(InvalidInputError):
        deflating_from_solution(running_example, example_solution, 'hamiltonian', tol)

    print("✅ Deflating subspaces: PASSED")


def test_factor_phase_normalization():
    K, L = normalize_factor_phase(np.array([[0.0, -2.0j]]), np.array([[1.0]]))
    assert np.allclose(K, [[0.0, 2.0]])
    assert np.allclose(L, [[1.0j]])

    K, L = normalize_factor_phase(np.zeros((1, 2)), np.zeros((1, 1)))
    assert np.allclose(K, 0.0) and np.allclose(L, 0.0)


def test_solution_serialization(running_example, example_solution):
    data = solution_to_dict(example_solution)
    assert data['q'] == 1
    assert data['certificate']['stabilizing'] is True
    restored = solution_from_dict(data, running_example.n, running_example.m)
    assert np.allclose(restored.X, example_solution.X)
    assert np.allclose(kkt_gram(restored), kkt_gram(example_solution))


def test_non_stabilizing_solution_is_rejected(running_example, tol, monkeypatch):
    import solvers.lure_solver as lure_module
    monkeypatch.setattr(lure_module, '_stabilizing',
                        lambda w, sol, tol: (False, np.array([1.5 + 0.0j])))
    with pytest.raises(NumericalFailureError, match="not stabilizing"):
        lure_solve(running_example, tol=tol)


def test_descriptor_corpus_round_trip(descriptor_corpus, tol):
    """Singular-E systems: solve, verify, serialize and verify again."""
    print("Testing Lur'e solver on the descriptor corpus...")

    for w in descriptor_corpus:
        assert np.linalg.matrix_rank(w.E) < w.n
        sol = lure_solve(w, tol=tol)
        assert sol.q == w.m
        assert sol.certificate.passed(tol)

        restored = solution_from_dict(solution_to_dict(sol), w.n, w.m)
        assert lure_verify(w, restored, tol).passed(tol)

    print("✅ Descriptor corpus: PASSED")


def test_solution_invariant_under_feedback(descriptor_corpus, tol):
    """E^* X E does not depend on the feedback used for the feedback form."""
    rng = np.random.default_rng(11)
    for w in descriptor_corpus[:4]:
        base = w.E.conj().T @ lure_solve(w, tol=tol).X @ w.E
        for _ in range(3):
            F = 0.5 * rng.normal(size=(w.m, w.n))
            sol = lure_solve(w, F=F, tol=tol)
            EXE = w.E.conj().T @ sol.X @ w.E
            assert np.linalg.norm(EXE - base, 2) <= 1e-7 * max(1.0, np.linalg.norm(base, 2))


def test_factorization_has_minimal_rank(ede_corpus, descriptor_corpus, tol):
    """rk [K L] = rk of M(X) on the system space = normal rank of the Popov function."""
    for w in ede_corpus[:5] + descriptor_corpus[:5]:
        sol = lure_solve(w, tol=tol)
        q = popov_normal_rank(w, tol)
        assert sol.q == q
        assert numerical_rank(np.hstack([sol.K, sol.L]), tol) == q

        V = system_space(w, tol=tol)
        M_V = V.conj().T @ kyp_matrix(w, sol.X) @ V
        assert numerical_rank(M_V, tol, scale=max(1.0, np.linalg.norm(M_V, 2))) == q
        assert sol.certificate.rank_condition_ok


def test_deflating_subspaces_are_neutral(ede_corpus, descriptor_corpus, tol):
    for w in ede_corpus[:10] + descriptor_corpus[:10]:
        sol = lure_solve(w, tol=tol)
        pal = deflating_from_solution(w, sol, 'palindromic', tol)
        assert pal.checks['neutral']
        assert pal.checks['deflating']['ok']


def run_all_tests():
    """Run every test in this module through pytest."""
    return pytest.main([__file__, "-v"])


if __name__ == "__main__":
    sys.exit(run_all_tests())
