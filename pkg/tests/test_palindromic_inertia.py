#!/usr/bin/env python3
"""
Tests for palindromic inertia, the unit-circle census and the inertia sweep.
"""

import sys
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, strategies as st

# Add src to path
sys.path.insert(0, str(Path(__file__).parent.parent / "src"))

from conftest import SQRT3, random_ede_system
from config_loader import Tolerances
from analysis.palindromic_inertia import (
    InertiaTriple, build_palindromic, build_bvd, quasi_hermitian_check, inertia_along, hermitian_at_omega,
    inertia_at_omega, event_angles, inertia_sweep, sweep_to_frame, pkcf_census, popov_inertia_identity,
    bookkeeping_rank_check,
)
from analysis.popov_kyp import popov_normal_rank, popov_grid
from utils.errors import InvalidInputError


def _sorted_inertia(H):
    eigs = np.linalg.eigvalsh(H)
    return int(np.sum(eigs > 1e-9)), int(np.sum(np.abs(eigs) <= 1e-9)), int(np.sum(eigs < -1e-9))


def test_inertia_of_example(running_example, tol):
    print("Testing inertia of the palindromic pencil...")

    p = build_palindromic(running_example)
    assert p.size == 5
    for omega in (np.pi / 2, np.pi, 3 * np.pi / 2):
        triple = inertia_at_omega(p, omega, tol)
        assert triple.as_tuple() == (3, 0, 2)
        assert triple.signature == 1
        assert _sorted_inertia(hermitian_at_omega(p, omega)) == (3, 0, 2)

    print("✅ Palindromic inertia: PASSED")


def test_inertia_matches_popov(running_example, tol):
    """In(M(omega)) = (n, 0, n) + In(Phi(e^{i omega})) wherever Phi is defined."""
    rng = np.random.default_rng(11)
    for omega in rng.uniform(0.05, 2 * np.pi - 0.05, 20):
        report = popov_inertia_identity(running_example, omega, tol)
        assert report['defined']
        assert report['match'], (omega, report)


def test_matrix_at_omega_is_hermitian(running_example, tol):
    p = build_palindromic(running_example)
    for omega in (0.3, 2.2, 5.9):
        ok, defect = quasi_hermitian_check(hermitian_at_omega(p, omega), 0.0, tol)
        assert ok and defect < 1e-14


def test_quasi_hermitian_inertia(tol):
    print("Testing quasi-Hermitian inertia...")

    H = np.diag([2.0, -1.0, 0.0])
    for phi in (0.0, 0.4, np.pi / 3):
        assert inertia_along(np.exp(1j * phi) * H, phi, tol).as_tuple() == (1, 1, 1)

    with pytest.raises(InvalidInputError):
        inertia_along(np.array([[0.0, 1.0], [0.0, 0.0]]), 0.0, tol)
    with pytest.raises(InvalidInputError):
        inertia_along(np.ones((2, 3)), 0.0, tol)
    assert inertia_along(np.zeros((0, 0)), 0.0, tol).size == 0

    print("✅ Quasi-Hermitian inertia: PASSED")


@given(seed=st.integers(min_value=0, max_value=10_000))
def test_inertia_is_congruence_invariant(seed):
    tol = Tolerances()
    rng = np.random.default_rng(seed)
    G = rng.normal(size=(4, 4))
    H = G + G.T
    S = np.eye(4) + 0.2 * rng.normal(size=(4, 4))
    assert inertia_along(S.T @ H @ S, 0.0, tol) == inertia_along(H, 0.0, tol)


def test_inertia_triple_arithmetic():
    total = InertiaTriple(2, 0, 2) + InertiaTriple(1, 0, 0)
    assert total == InertiaTriple(3, 0, 2)
    assert total.size == 5 and total.signature == 1


def test_census_of_example(running_example, tol):
    print("Testing unit-circle census...")

    q = popov_normal_rank(running_example, tol)
    census = pkcf_census(build_palindromic(running_example), q, tol)
    assert census.q == 1
    assert census.p5_count == 0
    assert census.angles == [0.0]
    assert census.signature_at_one == 1
    assert census.net_signature[0.0] == 1
    assert census.positivity_certified
    assert not census.has_p3_p4

    pairs = census.off_circle_pairs
    assert any(np.isinf(b) and abs(a) < 1e-8 for a, b in pairs)
    ratio = 2.0 - SQRT3
    assert any(abs(a - ratio) < 1e-8 and abs(b - 1.0 / ratio) < 1e-6 for a, b in pairs)
    assert census.unpaired == []

    serialized = census.to_dict()
    assert serialized['positivity_certified'] is True
    assert "inf" in [entry for pair in serialized['off_circle_pairs'] for entry in pair]

    print("✅ Census: PASSED")


def test_census_of_explicit_systems(ede_corpus, tol):
    """Positive definite R and stable A: only lambda = 1 on the circle and s(1) = m."""
    for w in ede_corpus[:8]:
        census = pkcf_census(build_palindromic(w), w.m, tol)
        assert census.angles == [0.0]
        assert census.signature_at_one == w.m
        assert census.p5_count == 0
        assert census.positivity_certified


def _mixed_corpus(count: int = 100):
    """Positive, negated and indefinite weights on random stable EDE systems."""
    rng = np.random.default_rng(99)
    systems = []
    for i in range(count):
        w = random_ede_system(rng, int(rng.integers(1, 5)), int(rng.integers(1, 3)))
        if i % 3 == 1:
            w = w.with_weights(Q=-w.Q, S=-w.S, R=-w.R)
        elif i % 3 == 2:
            w = w.with_weights(Q=3.0 * w.Q, R=np.diag(rng.uniform(-1.5, 1.5, size=w.m)))
        systems.append(w)
    return systems


def test_popov_positivity_matches_census(tol):
    """Popov function nonnegative on the circle exactly when the census certifies positivity."""
    print("Testing Popov positivity against the census...")

    certified_count = 0
    for w in _mixed_corpus():
        p = build_palindromic(w)
        grid = np.union1d(np.linspace(0.0, 2 * np.pi, 128, endpoint=False), event_angles(p, tol))
        min_eig = min(sample.min_eig for sample in popov_grid(w, grid, tol))
        nonnegative = min_eig >= -1e-8 * max(1.0, np.linalg.norm(w.weight_matrix(), 2))

        census = pkcf_census(p, popov_normal_rank(w, tol), tol)
        assert census.positivity_certified == nonnegative
        certified_count += int(nonnegative)

    # Both outcomes occur in the corpus
    assert 0 < certified_count < 100

    print("✅ Popov positivity vs census: PASSED")


def test_census_rejects_wrong_rank(running_example, tol):
    census = pkcf_census(build_palindromic(running_example), 2, tol)
    assert not census.positivity_certified


def test_event_angles_bracket_the_eigenvalue(running_example, tol):
    events = event_angles(build_palindromic(running_example), tol)
    assert len(events) == 3
    assert 0.0 in events
    assert any(0.0 < e < 1e-3 for e in events)
    assert any(2 * np.pi - 1e-3 < e < 2 * np.pi for e in events)


def test_inertia_sweep(running_example, tol):
    print("Testing inertia sweep...")

    p = build_palindromic(running_example)
    frame = sweep_to_frame(inertia_sweep(p, np.linspace(0.0, 2 * np.pi, 8, endpoint=False), tol))
    assert list(frame.columns) == ['omega', 'n_plus', 'n_zero', 'n_minus']
    assert len(frame) == 10
    assert frame['omega'].is_monotonic_increasing

    away = frame[(frame['omega'] > 1e-3) & (frame['omega'] < 2 * np.pi - 1e-3)]
    assert len(away) == 7
    assert (away[['n_plus', 'n_zero', 'n_minus']].values == [3, 0, 2]).all()

    at_event = frame[frame['omega'] == 0.0].iloc[0]
    assert at_event['n_zero'] >= 1

    print("✅ Inertia sweep: PASSED")


def test_bookkeeping_rank(running_example, tol):
    report = bookkeeping_rank_check(running_example, tol)
    assert report['ok']
    assert report['twice_rank_E_minus_A_B'] == 4


def test_bvd_pencil_shape(running_example):
    bvd = build_bvd(running_example)
    assert bvd.pencil.shape == (5, 5)
    assert np.allclose(bvd.Acal, build_palindromic(running_example).Acal)


def run_all_tests():
    """Run every test in this module through pytest."""
    return pytest.main([__file__, "-v"])


if __name__ == "__main__":
    sys.exit(run_all_tests())
