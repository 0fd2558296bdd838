#!/usr/bin/env python3
"""
Tests for the feedback equivalence form, controllability and simulation.
"""

import sys
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, strategies as st

# Add src to path
sys.path.insert(0, str(Path(__file__).parent.parent / "src"))

from pencils.pencil_core import subspace_contained
from systems.system_forms import (
    DescriptorSystem, WeightedSystem, FeedbackTransform, feedback_form, feedback_form_from_transforms,
    compose_feedback, system_space, consistent_initials, initial_state, reduce_by_projector, index_reducing_feedback,
    controllability, i_controllable, fef_controllability_agreement, transfer_columns_in_system_space,
    simulate, Trajectory,
)
from systems.system_io import load_system
from utils.errors import InvalidInputError, UnsupportedStructureError

# Hand-derived transforms of the running example
W_EXAMPLE = np.array([[1.0, 1.0], [-1.0, 0.0]])
T_EXAMPLE = np.array([[1.0, 1.0], [1.0, 0.0]])


@pytest.fixture
def example_form(running_example, tol):
    return feedback_form_from_transforms(running_example, W_EXAMPLE, T_EXAMPLE, np.zeros((1, 2)), 1, 1, tol)


@pytest.fixture
def not_i_controllable(systems_dir):
    return load_system(systems_dir / "not_i_controllable.json")


def test_singular_pencil_rejected():
    with pytest.raises(InvalidInputError, match="not regular"):
        WeightedSystem.from_matrices(np.zeros((1, 1)), np.zeros((1, 1)), np.ones((1, 1)))


def test_hand_transforms_give_ede_part(example_form):
    """Hand-derived transforms reach the canonical shape and the known EDE weights."""
    print("Testing hand-given feedback form...")

    assert example_form.dims == (1, 1, 0)
    assert example_form.reconstruction_residual < 1e-14
    assert np.allclose(example_form.A11, [[1.0]])
    assert np.allclose(example_form.B1, [[-1.0]])
    assert np.allclose(example_form.B2, [[1.0]])

    ede = example_form.ede
    assert np.allclose(ede.A, [[1.0]])
    assert np.allclose(ede.B, [[-1.0]])
    assert np.allclose(ede.Q, [[2.0]])
    assert np.allclose(ede.S, [[-1.0]])
    assert np.allclose(ede.R, [[2.0]])

    E_F, A_F, B_F = example_form.canonical_pencil()
    assert np.allclose(E_F, [[1.0, 0.0], [0.0, 0.0]])
    assert np.allclose(A_F, np.eye(2))
    assert np.allclose(B_F, [[-1.0], [1.0]])

    print("✅ Hand-given feedback form: PASSED")


def test_computed_form_invariants(running_example, tol):
    print("Testing computed feedback form...")

    fef = feedback_form(running_example, tol=tol)
    assert fef.dims == (1, 1, 0)
    assert fef.reconstruction_residual <= 1e-10
    assert abs(fef.A11[0, 0] - 1.0) < 1e-10
    summary = fef.summary()
    assert summary['n1'] == 1 and summary['n3'] == 0

    print("✅ Computed feedback form: PASSED")


def test_finite_infinite_split_ignores_rounding(running_example, descriptor_corpus, tol):
    """Infinite eigenvalues whose beta is rounding noise still land in the infinite block."""
    for factor in (1.0, 1e3):
        scaled = WeightedSystem.from_matrices(factor * running_example.E, factor * running_example.A,
                                              factor * running_example.B, running_example.Q,
                                              running_example.S, running_example.R)
        assert feedback_form(scaled, tol=tol).dims == (1, 1, 0)

    for w in descriptor_corpus:
        n1 = np.linalg.matrix_rank(w.E)
        fef = feedback_form(w, tol=tol)
        assert fef.dims == (n1, w.n - n1, 0)
        assert fef.reconstruction_residual <= 1e-10


def test_system_space_of_example(running_example, example_form, tol):
    """V = im [[1, 0, -1], [1, 0, 0], [0, 0, 1]] in (x1, x2, u) coordinates."""
    V = system_space(running_example, example_form, tol)
    assert V.shape == (3, 2)
    expected = np.array([[1.0, -1.0], [1.0, 0.0], [0.0, 1.0]])
    assert subspace_contained(expected, V) < 1e-12
    assert np.allclose(V.conj().T @ V, np.eye(2))

    computed = system_space(running_example, tol=tol)
    assert subspace_contained(computed, V) < 1e-10


def test_transfer_columns_lie_in_system_space(running_example):
    V = system_space(running_example)
    for lam in (2.0, -0.5 + 0.5j, 3j):
        assert transfer_columns_in_system_space(running_example, lam, V) < 1e-10


def test_controllability_flags(running_example, not_i_controllable, tol):
    print("Testing controllability rank tests...")

    flags = controllability(running_example, tol)
    assert flags['R'] and flags['C'] and flags['I']
    assert flags['stabilizable']
    assert flags['uncontrollable_modes'] == []

    assert not i_controllable(not_i_controllable, tol)

    # A mode at 2 that the input cannot reach
    w = WeightedSystem.from_matrices(np.eye(2), np.diag([0.5, 2.0]), np.array([[1.0], [0.0]]))
    flags = controllability(w, tol)
    assert not flags['R'] and not flags['stabilizable']
    assert len(flags['uncontrollable_modes']) == 1
    assert abs(flags['uncontrollable_modes'][0] - 2.0) < 1e-10

    print("✅ Controllability: PASSED")


def test_ede_part_keeps_uncontrollable_modes(running_example, tol):
    agreement = fef_controllability_agreement(running_example, tol=tol)
    assert agreement['fef_system'] == agreement['ede_part'] == []


def test_initial_value_consistency(running_example, example_form, not_i_controllable, tol):
    print("Testing consistent initial values...")

    x1 = initial_state(example_form, np.array([0.0, 1.0]), tol)
    assert np.allclose(x1, [1.0])

    basis = consistent_initials(running_example, example_form, tol)
    assert basis.shape[1] == 2

    fef = feedback_form(not_i_controllable, tol=tol)
    assert fef.dims == (0, 1, 1)
    with pytest.raises(InvalidInputError, match="consistent"):
        initial_state(fef, np.array([0.0, 1.0]), tol)
    assert initial_state(fef, np.array([1.0, 0.0]), tol).size == 0

    print("✅ Consistent initial values: PASSED")


def test_projector_reduction(running_example, example_form, not_i_controllable, tol):
    report = reduce_by_projector(running_example, example_form, tol)
    assert report['rank'] == 1
    assert report['idempotency_residual'] < 1e-12
    assert report['image_residual'] < 1e-10

    with pytest.raises(UnsupportedStructureError):
        reduce_by_projector(not_i_controllable, tol=tol)


def test_simulation_follows_dynamics(example_form, running_example, tol):
    """v = 0 from x1 = 1 keeps x = (1, 1) with u = 0."""
    traj = simulate(example_form, np.zeros((6, 1)), np.array([1.0]), tol)
    assert traj.horizon == 6
    assert np.allclose(traj.x, np.tile([1.0, 1.0], (6, 1)))
    assert np.allclose(traj.u, 0.0)
    assert traj.residual(running_example) < 1e-14

    rng = np.random.default_rng(5)
    traj = simulate(example_form, rng.normal(size=(10, 1)), np.array([0.3]), tol)
    assert traj.residual(running_example) < 1e-12

    with pytest.raises(InvalidInputError):
        simulate(example_form, np.zeros((3, 2)), np.array([1.0]), tol)


def test_trajectory_residual_detects_violation(running_example):
    traj = Trajectory(x=np.array([[1.0, 1.0], [5.0, 5.0]]), u=np.zeros((2, 1)))
    assert traj.residual(running_example) > 0.1


@given(seed=st.integers(min_value=0, max_value=10_000))
def test_feedback_composition(seed):
    """Applying the composed transform equals applying the two in sequence."""
    rng = np.random.default_rng(seed)
    n, m = 3, 2
    sys0 = DescriptorSystem(rng.normal(size=(n, n)), rng.normal(size=(n, n)), rng.normal(size=(n, m)),
                            check_regular=False)

    def random_transform():
        return FeedbackTransform(np.eye(n) + 0.3 * rng.normal(size=(n, n)),
                                 np.eye(n) + 0.3 * rng.normal(size=(n, n)),
                                 rng.normal(size=(m, n)))

    first, second = random_transform(), random_transform()
    intermediate = DescriptorSystem(*first.apply(sys0), check_regular=False)
    sequential = second.apply(intermediate)
    composed = compose_feedback(first, second).apply(sys0)

    for a, b in zip(sequential, composed):
        assert np.allclose(a, b, atol=1e-10)


def test_explicit_system_form(tol):
    """E = I gives n1 = n and an EDE part similar to the system."""
    w = WeightedSystem.from_matrices(np.eye(2), np.array([[0.5, 1.0], [0.0, 0.2]]), np.array([[0.0], [1.0]]))
    fef = feedback_form(w, tol=tol)
    assert fef.dims == (2, 0, 0)
    ede = fef.ede
    # EDE part is similar to (A, B) through T
    assert np.allclose(np.sort(np.linalg.eigvals(ede.A)), [0.2, 0.5])

def test_index_reducing_feedback(tol):
    """The input drives the head of an index-two chain: F = 0 has no form, the chosen F does."""
    print("Testing index-reducing feedback...")

    w = WeightedSystem.from_matrices(np.array([[0.0, 1.0], [0.0, 0.0]]), np.eye(2), np.array([[0.0], [1.0]]))
    assert i_controllable(w, tol)
    with pytest.raises(UnsupportedStructureError):
        feedback_form(w, F=np.zeros((1, 2)), tol=tol)

    F = index_reducing_feedback(w, tol)
    assert abs(F[0, 0]) > 1e-8
    assert np.allclose(F[0, 1], 0.0)

    fef = feedback_form(w, tol=tol)
    assert fef.n3 == 0
    assert fef.dims == (1, 1, 0)
    assert fef.reconstruction_residual <= 1e-10

    print("✅ Index-reducing feedback: PASSED")



def run_all_tests():
    """Run every test in this module through pytest."""
    return pytest.main([__file__, "-v"])


if __name__ == "__main__":
    sys.exit(run_all_tests())
