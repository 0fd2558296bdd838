"""
Shared fixtures: the running example, its EDE part and seeded random corpora.
"""

import sys
from pathlib import Path

import numpy as np
import pytest
from hypothesis import settings

# Add src to path
sys.path.insert(0, str(Path(__file__).parent.parent / "src"))

from config_loader import Tolerances
from systems.system_forms import WeightedSystem

settings.register_profile("dlqkit", derandomize=True, max_examples=25, deadline=None)
settings.load_profile("dlqkit")

ROOT = Path(__file__).parent.parent
SYSTEMS_DIR = ROOT / "config" / "systems"

SQRT3 = np.sqrt(3.0)
RATIO = 2.0 - SQRT3


def running_example_system() -> WeightedSystem:
    E = np.array([[0.0, 0.0], [0.0, 1.0]])
    A = np.array([[-1.0, 1.0], [1.0, 0.0]])
    B = np.array([[-1.0], [0.0]])
    return WeightedSystem.from_matrices(E, A, B, np.eye(2), np.zeros((2, 1)), np.eye(1))


def random_ede_system(rng: np.random.Generator, n: int, m: int, radius: float = 0.9) -> WeightedSystem:
    """Controllable EDE with spectral radius below `radius`, Q >= 0, R > 0, S = 0."""
    while True:
        A = rng.normal(size=(n, n))
        A *= radius / max(1e-12, np.max(np.abs(np.linalg.eigvals(A))))
        B = rng.normal(size=(n, m))
        ctrb = np.hstack([np.linalg.matrix_power(A, k) @ B for k in range(n)])
        if np.linalg.matrix_rank(ctrb) == n:
            break
    C = rng.normal(size=(n, n))
    D = rng.normal(size=(m, m))
    return WeightedSystem.from_matrices(np.eye(n), A, B, C.T @ C / n, np.zeros((n, m)),
                                        D.T @ D / m + np.eye(m))


def random_descriptor_system(rng: np.random.Generator, n1: int, n2: int, m: int) -> WeightedSystem:
    """
    Index-one descriptor system with rank E = n1 built from a feedback form.

    The canonical pencil diag(zI - A11, -I) with inputs (B1; B2) is moved by
    orthogonal W, T and a feedback F0, so E = W^* diag(I, 0) T^* is singular
    whenever n2 > 0. Q >= 0 and R > 0 keep the Popov function positive.
    """
    n = n1 + n2
    A11 = random_ede_system(rng, n1, m).A
    E_c = np.zeros((n, n))
    E_c[:n1, :n1] = np.eye(n1)
    A_c = np.zeros((n, n))
    A_c[:n1, :n1] = A11
    A_c[n1:, n1:] = np.eye(n2)
    B_c = rng.normal(size=(n, m))

    W, _ = np.linalg.qr(rng.normal(size=(n, n)))
    T, _ = np.linalg.qr(rng.normal(size=(n, n)))
    F0 = 0.3 * rng.normal(size=(m, n))
    E = W.T @ E_c @ T.T
    A = W.T @ (A_c @ T.T - B_c @ F0)
    B = W.T @ B_c

    C = rng.normal(size=(n, n))
    return WeightedSystem.from_matrices(E, A, B, C.T @ C / n, np.zeros((n, m)), np.eye(m))


@pytest.fixture
def tol() -> Tolerances:
    return Tolerances()


@pytest.fixture
def running_example() -> WeightedSystem:
    return running_example_system()


@pytest.fixture
def ede_part() -> WeightedSystem:
    """A_s = 1, B_s = -1, Q_s = 2, S_s = -1, R_s = 2."""
    return WeightedSystem.from_matrices(np.eye(1), np.array([[1.0]]), np.array([[-1.0]]),
                                        np.array([[2.0]]), np.array([[-1.0]]), np.array([[2.0]]))


@pytest.fixture
def example_solution_arrays():
    c = (SQRT3 + 1.0) / np.sqrt(2.0)
    return {
        'X': SQRT3 * np.ones((2, 2)),
        'K': np.array([[0.0, np.sqrt(2.0)]]),
        'L': np.array([[-c]]),
    }


@pytest.fixture
def ede_corpus():
    rng = np.random.default_rng(20240601)
    return [random_ede_system(rng, int(rng.integers(1, 7)), int(rng.integers(1, 3))) for _ in range(50)]


@pytest.fixture
def descriptor_corpus():
    rng = np.random.default_rng(20240615)
    return [random_descriptor_system(rng, int(rng.integers(1, 4)), int(rng.integers(1, 3)),
                                     int(rng.integers(1, 3))) for _ in range(12)]


@pytest.fixture
def systems_dir() -> Path:
    return SYSTEMS_DIR
