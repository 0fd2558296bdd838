"""
Popov function and KYP matrix of a weighted descriptor system.

    Phi(z) = G(z)^~ [[Q, S], [S^*, R]] G(z),   G(z) = [(zE - A)^{-1} B; I]
    M(P)   = [[A^*PA - E^*PE + Q, A^*PB + S], [B^*PA + S^*, B^*PB + R]]

KYP certificates are checked on an orthonormal basis of the system space.
"""

from dataclasses import dataclass
from typing import Dict, Any, List, Optional, Sequence

import numpy as np
import pandas as pd
import scipy.linalg as la

from config_loader import Tolerances
from pencils.pencil_core import as_matrix, numerical_rank, spectral_norm, generalized_spectrum, on_unit_circle
from systems.system_forms import (
    WeightedSystem, FeedbackForm, system_space, hermitian_part, controllability,
)
from utils.errors import NumericalFailureError
from utils.output_manager import debug_print


@dataclass
class PopovSample:
    omega: float
    value: Optional[np.ndarray]
    defined: bool

    @property
    def min_eig(self) -> float:
        if not self.defined or self.value.size == 0:
            return np.inf
        return float(np.linalg.eigvalsh(self.value)[0])


def transfer_stack(w: WeightedSystem, z: complex, tol: Optional[Tolerances] = None) -> Optional[np.ndarray]:
    """[(zE - A)^{-1} B; I], or None when zE - A is numerically singular."""
    tol = tol or Tolerances()
    M = z * w.E - w.A
    if w.n and numerical_rank(M, tol, scale=max(1.0, abs(z)) * max(w.sys.scale, 1e-300)) < w.n:
        return None
    top = np.linalg.solve(M, w.B) if w.n else np.zeros((0, w.m), dtype=complex)
    return np.vstack([top, np.eye(w.m)])


def popov_eval(w: WeightedSystem, omega: float, tol: Optional[Tolerances] = None) -> PopovSample:
    """Phi(e^{i omega}), Hermitian-symmetrized."""
    G = transfer_stack(w, np.exp(1j * omega), tol)
    if G is None:
        return PopovSample(omega=float(omega), value=None, defined=False)
    value = hermitian_part(G.conj().T @ w.weight_matrix() @ G)
    return PopovSample(omega=float(omega), value=value, defined=True)


def popov_normal_rank(w: WeightedSystem, tol: Optional[Tolerances] = None) -> int:
    """q = max rank of Phi over pseudo-random unit-circle points."""
    tol = tol or Tolerances()
    rng = np.random.default_rng(tol.seed)
    weight_norm = spectral_norm(w.weight_matrix())

    best = -1
    for omega in rng.uniform(0.0, 2.0 * np.pi, tol.popov_samples):
        G = transfer_stack(w, np.exp(1j * omega), tol)
        if G is None:
            continue
        value = hermitian_part(G.conj().T @ w.weight_matrix() @ G)
        if value.size == 0:
            best = max(best, 0)
            continue
        s = la.svd(value, compute_uv=False)
        threshold = tol.popov_rank * weight_norm * spectral_norm(G) ** 2
        best = max(best, int(np.sum(s > threshold)))

    if best < 0:
        raise NumericalFailureError("Popov function undefined at every sample point",
                                    {'samples': tol.popov_samples})
    debug_print(f"   Popov normal rank q={best}")
    return best


def default_grid(w: WeightedSystem, tol: Optional[Tolerances] = None, points: Optional[int] = None) -> np.ndarray:
    """Equispaced omegas plus unit-circle eigenvalue angles +- the event offset."""
    tol = tol or Tolerances()
    points = tol.unit_circle_grid if points is None else points
    grid = list(np.linspace(0.0, 2.0 * np.pi, points, endpoint=False)) if points else []
    if w.n:
        eigs = generalized_spectrum(w.pencil, tol).finite_eigenvalues
        for lam in eigs[on_unit_circle(eigs, tol, w.sys.scale)]:
            theta = float(np.mod(np.angle(lam), 2.0 * np.pi))
            grid.extend([theta - tol.event_offset, theta + tol.event_offset])
    return np.sort(np.mod(np.array(grid, dtype=float), 2.0 * np.pi))


def popov_grid(w: WeightedSystem, grid: Optional[Sequence[float]] = None,
               tol: Optional[Tolerances] = None) -> List[PopovSample]:
    tol = tol or Tolerances()
    grid = default_grid(w, tol) if grid is None else grid
    return [popov_eval(w, omega, tol) for omega in grid]


def popov_grid_frame(samples: List[PopovSample]) -> pd.DataFrame:
    """CSV-ready table: omega, lambda_min, lambda_max, defined."""
    rows = []
    for sample in samples:
        if sample.defined and sample.value.size:
            eigs = np.linalg.eigvalsh(sample.value)
            rows.append({'omega': sample.omega, 'lambda_min': eigs[0], 'lambda_max': eigs[-1], 'defined': True})
        else:
            rows.append({'omega': sample.omega, 'lambda_min': np.nan, 'lambda_max': np.nan,
                         'defined': sample.defined})
    return pd.DataFrame(rows, columns=['omega', 'lambda_min', 'lambda_max', 'defined'])


def kyp_matrix(w: WeightedSystem, P: np.ndarray) -> np.ndarray:
    """M(P) assembled blockwise."""
    P = as_matrix(P, "P", (w.n, w.n))
    E, A, B = w.E, w.A, w.B
    Ah, Bh, Eh = A.conj().T, B.conj().T, E.conj().T
    top_left = Ah @ P @ A - Eh @ P @ E + w.Q
    top_right = Ah @ P @ B + w.S
    bottom_right = Bh @ P @ B + w.R
    return np.block([[top_left, top_right], [top_right.conj().T, bottom_right]])


def kyp_check(w: WeightedSystem, P: np.ndarray, V: Optional[np.ndarray] = None,
              tol: Optional[Tolerances] = None) -> Dict[str, Any]:
    """Minimum eigenvalue of V^* M(P) V on an orthonormal system-space basis."""
    tol = tol or Tolerances()
    V = system_space(w, tol=tol) if V is None else V
    M = kyp_matrix(w, P)
    projected = hermitian_part(V.conj().T @ M @ V)
    min_eig = float(np.linalg.eigvalsh(projected)[0]) if projected.size else 0.0
    slack = tol.residual * (1.0 + spectral_norm(M))
    return {'feasible': min_eig >= -slack, 'min_eig_on_V': min_eig}


def kyp_lift(fef: FeedbackForm, P11: np.ndarray) -> np.ndarray:
    """P = W^* diag(P11, 0, 0) W."""
    n = fef.system.n
    P11 = as_matrix(P11, "P11", (fef.n1, fef.n1))
    P_F = np.zeros((n, n), dtype=complex)
    P_F[:fef.n1, :fef.n1] = hermitian_part(P11)
    return hermitian_part(fef.W.conj().T @ P_F @ fef.W)


def zero_kyp_residual(w: WeightedSystem, P: np.ndarray, z: complex) -> float:
    """Relative size of G(1/conj z)^* [[A^*PA - E^*PE, A^*PB], [B^*PA, B^*PB]] G(z)."""
    P = as_matrix(P, "P", (w.n, w.n))
    G = np.vstack([np.linalg.solve(z * w.E - w.A, w.B), np.eye(w.m)])
    z_ref = 1.0 / np.conj(z)
    G_ref = np.vstack([np.linalg.solve(z_ref * w.E - w.A, w.B), np.eye(w.m)])

    pure = kyp_matrix(w.with_weights(Q=np.zeros_like(w.Q), S=np.zeros_like(w.S), R=np.zeros_like(w.R)), P)
    value = G_ref.conj().T @ pure @ G
    scale = (1.0 + spectral_norm(P)) * (1.0 + w.sys.scale) ** 2 * (1.0 + spectral_norm(G)) * (1.0 + spectral_norm(G_ref))
    return spectral_norm(value) / scale


def kyp_implies_popov_check(w: WeightedSystem, P: np.ndarray, grid: Optional[Sequence[float]] = None,
                            tol: Optional[Tolerances] = None) -> Dict[str, Any]:
    """Popov nonnegativity on the grid for a KYP-feasible P, with the zero-KYP witness."""
    tol = tol or Tolerances()
    check = kyp_check(w, P, tol=tol)
    samples = popov_grid(w, grid, tol)
    defined = [s for s in samples if s.defined]
    min_eig = min((s.min_eig for s in defined), default=np.inf)
    slack = tol.residual * (1.0 + spectral_norm(w.weight_matrix()))

    witness = 0.0
    for s in defined[:: max(1, len(defined) // 16)]:
        witness = max(witness, zero_kyp_residual(w, P, np.exp(1j * s.omega)))

    return {
        'kyp_feasible': check['feasible'],
        'min_eig_on_V': check['min_eig_on_V'],
        'grid_points': len(samples),
        'defined_points': len(defined),
        'popov_min_eig': min_eig,
        'popov_nonnegative': min_eig >= -slack,
        'zero_kyp_residual': witness,
    }


def popov_transformed_eval(fef: FeedbackForm, omega: float, tol: Optional[Tolerances] = None) -> Dict[str, Any]:
    """Phi, Phi_F = Theta^* Phi Theta and the EDE Popov value at e^{i omega}."""
    tol = tol or Tolerances()
    w = fef.system
    z = np.exp(1j * omega)
    original = popov_eval(w, omega, tol)

    E_F, A_F, B_F = fef.canonical_pencil()
    fef_system = WeightedSystem.from_matrices(E_F, A_F, B_F, fef.Q_F, fef.S_F, fef.R_F, check_regular=False)
    transformed = popov_eval(fef_system, omega, tol)
    reduced = popov_eval(fef.ede, omega, tol)

    if not (original.defined and transformed.defined and reduced.defined):
        return {'defined': False}

    Theta = np.linalg.inv(np.eye(w.m) - fef.F @ np.linalg.solve(z * w.E - w.A, w.B))
    via_theta = Theta.conj().T @ original.value @ Theta
    scale = 1.0 + spectral_norm(transformed.value)
    return {
        'defined': True,
        'phi': original.value,
        'phi_F': transformed.value,
        'phi_s': reduced.value,
        'theta_residual': spectral_norm(transformed.value - via_theta) / scale,
        'ede_residual': spectral_norm(transformed.value - reduced.value) / scale,
    }


def kyp_existence_report(w: WeightedSystem, tol: Optional[Tolerances] = None) -> Dict[str, Any]:
    """Whether the KYP lemma guarantees a solution from the Popov sweep."""
    tol = tol or Tolerances()
    ctrl = controllability(w, tol)
    samples = popov_grid(w, None, tol)
    min_eig = min((s.min_eig for s in samples if s.defined), default=np.inf)
    nonnegative = min_eig >= -tol.residual * (1.0 + spectral_norm(w.weight_matrix()))

    if not nonnegative:
        status = "no solution: Popov function not positive semidefinite on the unit circle"
    elif ctrl['R']:
        status = "existence guaranteed"
    else:
        status = "existence not guaranteed by the KYP lemma (system not R-controllable)"

    return {
        'R_controllable': ctrl['R'],
        'popov_min_eig': min_eig,
        'popov_nonnegative': nonnegative,
        'status': status,
    }
