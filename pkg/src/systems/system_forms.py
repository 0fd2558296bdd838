"""
Descriptor systems E x_{j+1} = A x_j + B u_j with quadratic weights.

Holds the feedback equivalence form (FEF)

    [zI-A11   0    0       -B1]
    [  0     -I   zE23     -B2]  = W [zE-A  -B] Tcal,   Tcal = [[T, 0], [F T, I]]
    [  0      0   zE33-I    0 ]

together with everything derived from it: the EDE part, the system
space, consistent initial values, the projector and simulation.
"""

from dataclasses import dataclass, field
from typing import Dict, Any, List, Optional, Tuple

import numpy as np
import scipy.linalg as la

from config_loader import Tolerances
from pencils.pencil_core import (
    MatrixPencil, as_matrix, spectral_norm, numerical_rank, null_space,
    generalized_spectrum, is_regular, subspace_contained, EPS,
)
from utils.errors import InvalidInputError, NumericalFailureError, UnsupportedStructureError
from utils.output_manager import debug_print


def hermitian_part(M: np.ndarray) -> np.ndarray:
    return 0.5 * (M + M.conj().T)


@dataclass(frozen=True)
class DescriptorSystem:
    """(E, A, B) with a regular pencil zE - A."""
    E: np.ndarray
    A: np.ndarray
    B: np.ndarray
    check_regular: bool = True

    def __post_init__(self):
        E = as_matrix(self.E, "E")
        n = E.shape[0]
        if E.shape[0] != E.shape[1]:
            raise InvalidInputError("E must be square", {'shape': E.shape})
        A = as_matrix(self.A, "A", (n, n))
        B = np.asarray(self.B, dtype=complex)
        if B.ndim < 2:
            B = B.reshape(n, -1)
        B = as_matrix(B, "B", (n, B.shape[1]))
        object.__setattr__(self, 'E', E)
        object.__setattr__(self, 'A', A)
        object.__setattr__(self, 'B', B)

        if self.check_regular and n and not is_regular(MatrixPencil(E, A)):
            raise InvalidInputError("pencil not regular", {'n': n})

    @property
    def n(self) -> int:
        return self.E.shape[0]

    @property
    def m(self) -> int:
        return self.B.shape[1]

    @property
    def pencil(self) -> MatrixPencil:
        return MatrixPencil(self.E, self.A)

    @property
    def field(self) -> str:
        imag = max((np.abs(M.imag).max() if M.size else 0.0) for M in (self.E, self.A, self.B))
        return 'complex' if imag > 0 else 'real'

    @property
    def scale(self) -> float:
        return spectral_norm(np.hstack([self.E, self.A, self.B])) if self.n else 0.0


@dataclass(frozen=True)
class WeightedSystem:
    """Plant plus cost weights [[Q, S], [S^*, R]]; Q and R are symmetrized on ingest."""
    sys: DescriptorSystem
    Q: np.ndarray
    S: np.ndarray
    R: np.ndarray

    def __post_init__(self):
        n, m = self.sys.n, self.sys.m
        Q = as_matrix(self.Q, "Q", (n, n))
        S = as_matrix(self.S, "S", (n, m))
        R = as_matrix(self.R, "R", (m, m))
        object.__setattr__(self, 'Q', hermitian_part(Q))
        object.__setattr__(self, 'S', S)
        object.__setattr__(self, 'R', hermitian_part(R))

    @classmethod
    def from_matrices(cls, E, A, B, Q=None, S=None, R=None, check_regular: bool = True) -> 'WeightedSystem':
        sys = DescriptorSystem(E, A, B, check_regular=check_regular)
        n, m = sys.n, sys.m
        Q = np.zeros((n, n)) if Q is None else Q
        S = np.zeros((n, m)) if S is None else S
        R = np.zeros((m, m)) if R is None else R
        return cls(sys, Q, S, R)

    @property
    def E(self) -> np.ndarray:
        return self.sys.E

    @property
    def A(self) -> np.ndarray:
        return self.sys.A

    @property
    def B(self) -> np.ndarray:
        return self.sys.B

    @property
    def n(self) -> int:
        return self.sys.n

    @property
    def m(self) -> int:
        return self.sys.m

    @property
    def pencil(self) -> MatrixPencil:
        return self.sys.pencil

    def weight_matrix(self) -> np.ndarray:
        return np.block([[self.Q, self.S], [self.S.conj().T, self.R]])

    def with_weights(self, Q=None, S=None, R=None) -> 'WeightedSystem':
        return WeightedSystem(self.sys,
                              self.Q if Q is None else Q,
                              self.S if S is None else S,
                              self.R if R is None else R)


@dataclass(frozen=True)
class FeedbackTransform:
    """(W, T, F) acting as W [zE-A, -B] Tcal."""
    W: np.ndarray
    T: np.ndarray
    F: np.ndarray

    @property
    def tcal(self) -> np.ndarray:
        n, m = self.T.shape[0], self.F.shape[0]
        return np.block([[self.T, np.zeros((n, m))], [self.F @ self.T, np.eye(m)]])

    def apply(self, sys: DescriptorSystem) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Transformed (E', A', B')."""
        E_new = self.W @ sys.E @ self.T
        A_new = self.W @ (sys.A + sys.B @ self.F) @ self.T
        B_new = self.W @ sys.B
        return E_new, A_new, B_new

    def compose(self, second: 'FeedbackTransform') -> 'FeedbackTransform':
        """Apply self first, then `second` to the transformed system."""
        W = second.W @ self.W
        T = self.T @ second.T
        F = self.F + second.F @ np.linalg.inv(self.T)
        return FeedbackTransform(W, T, F)


@dataclass
class FeedbackForm:
    """Canonical blocks, transformed weights and EDE part of a weighted system."""
    system: WeightedSystem
    transform: FeedbackTransform
    n1: int
    n2: int
    n3: int
    A11: np.ndarray
    B1: np.ndarray
    B2: np.ndarray
    E23: np.ndarray
    E33: np.ndarray
    Q_F: np.ndarray
    S_F: np.ndarray
    R_F: np.ndarray
    ede: WeightedSystem
    reconstruction_residual: float

    @property
    def W(self) -> np.ndarray:
        return self.transform.W

    @property
    def T(self) -> np.ndarray:
        return self.transform.T

    @property
    def F(self) -> np.ndarray:
        return self.transform.F

    @property
    def tcal(self) -> np.ndarray:
        return self.transform.tcal

    @property
    def dims(self) -> Tuple[int, int, int]:
        return self.n1, self.n2, self.n3

    def canonical_pencil(self) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(E_F, A_F, B_F) assembled from the blocks with exact identity/zero entries."""
        return _assemble_canonical(self.n1, self.n2, self.n3, self.A11, self.B1, self.B2,
                                   self.E23, self.E33, self.system.m)

    def summary(self) -> Dict[str, Any]:
        return {
            'n1': self.n1, 'n2': self.n2, 'n3': self.n3,
            'A11_eigenvalues': np.sort_complex(la.eigvals(self.A11)) if self.n1 else np.zeros(0),
            'reconstruction_residual': self.reconstruction_residual,
        }


def _assemble_canonical(n1, n2, n3, A11, B1, B2, E23, E33, m):
    n = n1 + n2 + n3
    E_F = np.zeros((n, n), dtype=complex)
    A_F = np.zeros((n, n), dtype=complex)
    B_F = np.zeros((n, m), dtype=complex)
    E_F[:n1, :n1] = np.eye(n1)
    A_F[:n1, :n1] = A11
    A_F[n1:, n1:] = np.eye(n2 + n3)
    E_F[n1:n1 + n2, n1 + n2:] = E23
    E_F[n1 + n2:, n1 + n2:] = E33
    B_F[:n1] = B1
    B_F[n1:n1 + n2] = B2
    return E_F, A_F, B_F


class _NeedsIndexReduction(Exception):
    pass


def transformed_weights(w: WeightedSystem, T: np.ndarray, F: np.ndarray
                        ) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Q_F = T^*(Q + SF + F^*S^* + F^*RF)T, S_F = T^*(S + F^*R), R_F = R."""
    Fh = F.conj().T
    Q_F = T.conj().T @ (w.Q + w.S @ F + Fh @ w.S.conj().T + Fh @ w.R @ F) @ T
    S_F = T.conj().T @ (w.S + Fh @ w.R)
    return hermitian_part(Q_F), S_F, w.R.copy()


def ede_part(n1: int, n2: int, A11, B1, B2, Q_F, S_F, R_F) -> WeightedSystem:
    """Weighted EDE obtained by eliminating x2 = -B2 v and x3 = 0."""
    Q11 = Q_F[:n1, :n1]
    Q12 = Q_F[:n1, n1:n1 + n2]
    Q22 = Q_F[n1:n1 + n2, n1:n1 + n2]
    S1 = S_F[:n1]
    S2 = S_F[n1:n1 + n2]
    B2h = B2.conj().T

    Q_s = Q11
    S_s = S1 - Q12 @ B2
    R_s = B2h @ Q22 @ B2 - B2h @ S2 - S2.conj().T @ B2 + R_F
    ede_sys = DescriptorSystem(np.eye(n1), A11, B1, check_regular=False)
    return WeightedSystem(ede_sys, Q_s, S_s, R_s)


def _extract_form(w: WeightedSystem, transform: FeedbackTransform, n1: int, n2: int,
                  tol: Tolerances, check: bool = True) -> FeedbackForm:
    n, m = w.n, w.m
    n3 = n - n1 - n2
    E_F, A_F, B_F = transform.apply(w.sys)

    A11 = A_F[:n1, :n1]
    B1 = B_F[:n1]
    B2 = B_F[n1:n1 + n2]
    E23 = E_F[n1:n1 + n2, n1 + n2:]
    E33 = E_F[n1 + n2:, n1 + n2:]

    E_c, A_c, B_c = _assemble_canonical(n1, n2, n3, A11, B1, B2, E23, E33, m)
    scale = (1.0 + w.sys.scale) * max(1.0, spectral_norm(transform.W) * spectral_norm(transform.T))
    residual = max(spectral_norm(E_F - E_c), spectral_norm(A_F - A_c),
                   spectral_norm(B_F - B_c)) / scale

    if check and residual > tol.residual:
        raise NumericalFailureError("feedback form does not reach the canonical shape",
                                    {'residual': residual})

    if n3 and spectral_norm(np.linalg.matrix_power(E33, n3)) > tol.residual * (1.0 + spectral_norm(E33)) ** n3:
        raise NumericalFailureError("E33 block is not nilpotent", {'n3': n3})

    Q_F, S_F, R_F = transformed_weights(w, transform.T, transform.F)
    ede = ede_part(n1, n2, A11, B1, B2, Q_F, S_F, R_F)

    return FeedbackForm(
        system=w, transform=transform, n1=n1, n2=n2, n3=n3,
        A11=A11, B1=B1, B2=B2, E23=E23, E33=E33,
        Q_F=Q_F, S_F=S_F, R_F=R_F, ede=ede,
        reconstruction_residual=residual,
    )


def _finite_first_schur(Acl: np.ndarray, E: np.ndarray, n1: int, tol: Tolerances):
    """Complex QZ of (Acl, E) with the n1 finite eigenvalues leading.

    Infinite eigenvalues come back from QZ with beta at rounding level, so the
    infinite side of the split is floored at the rank tolerance.
    """
    n = E.shape[0]
    noise = max(n * EPS, tol.rank_rtol)
    AA0, BB0, _, _ = la.qz(Acl, E, output='complex')
    alpha0, beta0 = np.abs(np.diag(AA0)), np.abs(np.diag(BB0))
    ratio = beta0 / np.maximum(np.maximum(alpha0, beta0), 1e-300)
    ordered = np.sort(ratio)[::-1]

    if n1 == n:
        threshold = -1.0
    elif n1 == 0:
        threshold = 2.0
    else:
        threshold = np.sqrt(max(ordered[n1 - 1], noise) * max(ordered[n1], noise))

    def finite_first(alpha, beta):
        a, b = np.abs(alpha), np.abs(beta)
        return b > threshold * np.maximum(np.maximum(a, b), 1e-300)

    AA, BB, alpha, beta, Q, Z = la.ordqz(Acl, E, sort=finite_first, output='complex')
    selected = int(np.sum(finite_first(alpha, beta)))
    if selected != n1:
        raise NumericalFailureError("finite/infinite eigenvalue split is ambiguous",
                                    {'expected_finite': n1, 'selected': selected})
    return AA, BB, Q, Z


def _build_form(w: WeightedSystem, F: np.ndarray, tol: Tolerances) -> FeedbackForm:
    n, m = w.n, w.m
    if n == 0:
        empty = np.zeros((0, 0), dtype=complex)
        return _extract_form(w, FeedbackTransform(empty, empty, F), 0, 0, tol)

    E = w.E
    Acl = w.A + w.B @ F
    closed = MatrixPencil(E, Acl)
    if not is_regular(closed, tol):
        raise InvalidInputError("closed-loop pencil not regular for the given feedback")

    spec = generalized_spectrum(closed, tol)
    n1 = int(spec.finite_eigenvalues.size)
    ni = n - n1

    S, Tm, Qz, Zz = _finite_first_schur(Acl, E, n1, tol)

    S11, S12, S22 = S[:n1, :n1], S[:n1, n1:], S[n1:, n1:]
    T11, T12, T22 = Tm[:n1, :n1], Tm[:n1, n1:], Tm[n1:, n1:]

    # Generalized Sylvester decoupling: S11 R + L S22 = -S12, T11 R + L T22 = -T12.
    if n1 and ni:
        Ik, Il = np.eye(n1), np.eye(ni)
        M = np.block([[np.kron(Il, S11), np.kron(S22.T, Ik)],
                      [np.kron(Il, T11), np.kron(T22.T, Ik)]])
        rhs = -np.concatenate([S12.reshape(-1, order='F'), T12.reshape(-1, order='F')])
        sol = np.linalg.solve(M, rhs)
        Rm = sol[:n1 * ni].reshape((n1, ni), order='F')
        Lm = sol[n1 * ni:].reshape((n1, ni), order='F')
    else:
        Rm = np.zeros((n1, ni), dtype=complex)
        Lm = np.zeros((n1, ni), dtype=complex)

    left = np.block([[np.eye(n1), Lm], [np.zeros((ni, n1)), np.eye(ni)]])
    right = np.block([[np.eye(n1), Rm], [np.zeros((ni, n1)), np.eye(ni)]])
    scaling = la.block_diag(np.linalg.inv(T11) if n1 else np.zeros((0, 0)),
                            np.linalg.inv(S22) if ni else np.zeros((0, 0)))
    W0 = scaling @ left @ Qz.conj().T
    T0 = Zz @ right

    # Infinite part: zN - I with input B_inf.
    N = np.linalg.solve(S22, T22) if ni else np.zeros((0, 0), dtype=complex)
    B_inf = (W0 @ w.B)[n1:]
    coupling = spectral_norm(N @ B_inf)
    if coupling > tol.residual * (1.0 + spectral_norm(N)) * (1.0 + spectral_norm(B_inf)):
        raise _NeedsIndexReduction()

    if ni:
        _, s, Vh = la.svd(N, full_matrices=True)
        r = int(np.sum(s > tol.rank_rtol * max(1.0, spectral_norm(N))))
        Vfull = Vh.conj().T
        T2 = np.hstack([Vfull[:, r:], Vfull[:, :r]])
        n2 = ni - r
    else:
        T2 = np.zeros((0, 0), dtype=complex)
        n2 = 0

    W = la.block_diag(np.eye(n1), T2.conj().T) @ W0
    T = T0 @ la.block_diag(np.eye(n1), T2)

    debug_print(f"   FEF: n1={n1}, n2={n2}, n3={ni - n2}")
    return _extract_form(w, FeedbackTransform(W, T, F), n1, n2, tol)


def i_controllable(w: WeightedSystem, tol: Optional[Tolerances] = None) -> bool:
    """rk [E, A S_inf, B] = n with S_inf a kernel basis of E."""
    tol = tol or Tolerances()
    n = w.n
    if n == 0:
        return True
    S_inf = null_space(w.E, tol, scale=spectral_norm(w.E) or 1.0)
    M = np.hstack([w.E, w.A @ S_inf, w.B])
    return numerical_rank(M, tol) == n


def index_reducing_feedback(w: WeightedSystem, tol: Optional[Tolerances] = None) -> np.ndarray:
    """F with A22 + B2 F2 invertible in the SVD coordinates of E (index <= 1 closed loop)."""
    tol = tol or Tolerances()
    n, m = w.n, w.m
    U, s, Vh = la.svd(w.E)
    r = numerical_rank(w.E, tol)
    At = U.conj().T @ w.A @ Vh.conj().T
    Bt = U.conj().T @ w.B
    A22 = At[r:, r:]
    B2 = Bt[r:]

    U2, s2, V2h = la.svd(A22)
    k = numerical_rank(A22, tol, scale=max(1.0, spectral_norm(w.A)))
    G = U2[:, k:].conj().T @ B2
    F2 = np.linalg.pinv(G) @ V2h[k:, :]
    return np.hstack([np.zeros((m, r), dtype=complex), F2]) @ Vh


def feedback_form(w: WeightedSystem, F: Optional[np.ndarray] = None,
                  tol: Optional[Tolerances] = None) -> FeedbackForm:
    """
    Feedback equivalence form of a weighted system.

    Args:
        w: Weighted descriptor system with regular pencil
        F: Optional state feedback (m x n); defaults to 0
        tol: Numerical tolerances

    Returns:
        FeedbackForm with transforms, blocks, transformed weights and EDE part
    """
    tol = tol or Tolerances()
    n, m = w.n, w.m
    if n and not is_regular(w.pencil, tol):
        raise InvalidInputError("pencil not regular")

    F0 = np.zeros((m, n), dtype=complex) if F is None else as_matrix(F, "F", (m, n))
    try:
        return _build_form(w, F0, tol)
    except _NeedsIndexReduction:
        pass

    if F is not None or not i_controllable(w, tol):
        raise UnsupportedStructureError(
            "input enters a higher-index chain; no feedback form with this feedback",
            {'hint': 'omit F to let an index-reducing feedback be chosen' if F is not None else
             'system is not I-controllable'})

    F1 = index_reducing_feedback(w, tol)
    debug_print("   FEF: applying index-reducing feedback")
    try:
        return _build_form(w, F1, tol)
    except _NeedsIndexReduction:
        raise NumericalFailureError("index-reducing feedback did not remove the higher-index chain")


def compose_feedback(first: FeedbackTransform, second: FeedbackTransform) -> FeedbackTransform:
    """Transform equivalent to applying `first` and then `second`."""
    return first.compose(second)


def feedback_form_from_transforms(w: WeightedSystem, W, T, F, n1: int, n2: int,
                                  tol: Optional[Tolerances] = None) -> FeedbackForm:
    """Validate hand-given (W, T, F) and extract the blocks."""
    tol = tol or Tolerances()
    n, m = w.n, w.m
    transform = FeedbackTransform(as_matrix(W, "W", (n, n)), as_matrix(T, "T", (n, n)),
                                  as_matrix(F, "F", (m, n)))
    return _extract_form(w, transform, n1, n2, tol)


def system_space(w: WeightedSystem, fef: Optional[FeedbackForm] = None,
                 tol: Optional[Tolerances] = None) -> np.ndarray:
    """Orthonormal basis of the system space Tcal * im V_F."""
    fef = fef or feedback_form(w, tol=tol)
    n1, n2, n3, m = fef.n1, fef.n2, fef.n3, w.m
    V_F = np.zeros((w.n + m, n1 + m), dtype=complex)
    V_F[:n1, :n1] = np.eye(n1)
    V_F[n1:n1 + n2, n1:] = -fef.B2
    V_F[n1 + n2 + n3:, n1:] = np.eye(m)
    basis, _ = np.linalg.qr(fef.tcal @ V_F)
    return basis


def consistent_initials(w: WeightedSystem, fef: Optional[FeedbackForm] = None,
                        tol: Optional[Tolerances] = None) -> np.ndarray:
    """Basis of V_shift = T {xi : E23 xi3 = 0, E33 xi3 = 0}."""
    tol = tol or Tolerances()
    fef = fef or feedback_form(w, tol=tol)
    n1, n2, n3 = fef.dims
    K3 = null_space(np.vstack([fef.E23, fef.E33]), tol, scale=1.0) if n3 else np.zeros((0, 0))

    xi_basis = np.zeros((w.n, n1 + n2 + K3.shape[1]), dtype=complex)
    xi_basis[:n1 + n2, :n1 + n2] = np.eye(n1 + n2)
    xi_basis[n1 + n2:, n1 + n2:] = K3
    if xi_basis.shape[1] == 0:
        return xi_basis
    return la.orth(fef.T @ xi_basis)


def initial_state(fef: FeedbackForm, x0: np.ndarray, tol: Optional[Tolerances] = None) -> np.ndarray:
    """x1_0 = (W E x0)[:n1]; rejects x0 outside V_shift."""
    tol = tol or Tolerances()
    w = fef.system
    x0 = as_matrix(x0, "x0", (w.n, 1)).ravel()
    y = fef.W @ w.E @ x0
    slack = spectral_norm(y[fef.n1:].reshape(-1, 1)) if y.size > fef.n1 else 0.0
    bound = tol.residual * (1.0 + spectral_norm(fef.W @ w.E) * np.linalg.norm(x0))
    if slack > bound:
        raise InvalidInputError("x0 is not a consistent initial value",
                                {'violation': slack})
    return y[:fef.n1]


def projector_pi(w: WeightedSystem, fef: Optional[FeedbackForm] = None,
                 tol: Optional[Tolerances] = None) -> np.ndarray:
    """Pi = W^{-1} diag(I_{n1}, 0, 0) W."""
    tol = tol or Tolerances()
    if not i_controllable(w, tol):
        raise UnsupportedStructureError("projector requires an I-controllable system")
    fef = fef or feedback_form(w, tol=tol)
    D = np.zeros((w.n, w.n), dtype=complex)
    D[:fef.n1, :fef.n1] = np.eye(fef.n1)
    return np.linalg.solve(fef.W, D @ fef.W)


def reduce_by_projector(w: WeightedSystem, fef: Optional[FeedbackForm] = None,
                        tol: Optional[Tolerances] = None) -> Dict[str, Any]:
    """Pi together with the check im Pi = E V_shift."""
    tol = tol or Tolerances()
    fef = fef or feedback_form(w, tol=tol)
    Pi = projector_pi(w, fef, tol)
    E_shift = w.E @ consistent_initials(w, fef, tol)
    image = la.orth(Pi) if spectral_norm(Pi) > 0 else np.zeros((w.n, 0))
    idempotency = spectral_norm(Pi @ Pi - Pi) / max(1.0, spectral_norm(Pi))
    forward = subspace_contained(image, E_shift)
    backward = subspace_contained(E_shift, image, max(1.0, spectral_norm(E_shift)))
    return {
        'Pi': Pi,
        'rank': image.shape[1],
        'idempotency_residual': idempotency,
        'image_residual': max(forward, backward),
    }


def _cluster(values: List[complex], tol: float = 1e-7) -> List[complex]:
    out: List[complex] = []
    for v in values:
        if all(abs(v - u) > tol * (1.0 + abs(u)) for u in out):
            out.append(v)
    return out


def uncontrollable_modes(E: np.ndarray, A: np.ndarray, B: np.ndarray,
                         eigenvalues: np.ndarray, tol: Tolerances) -> List[complex]:
    n = E.shape[0]
    modes = []
    for lam in eigenvalues:
        if numerical_rank(np.hstack([lam * E - A, B]), tol) < n:
            modes.append(complex(lam))
    return _cluster(modes)


def controllability(w: WeightedSystem, tol: Optional[Tolerances] = None) -> Dict[str, Any]:
    """R/C/I-controllability and stabilizability by the rank tests."""
    tol = tol or Tolerances()
    n = w.n
    spec = generalized_spectrum(w.pencil, tol)
    modes = uncontrollable_modes(w.E, w.A, w.B, spec.finite_eigenvalues, tol)

    r_ok = not modes
    c_ok = r_ok and numerical_rank(np.hstack([w.E, w.B]), tol) == n
    i_ok = i_controllable(w, tol)
    stabilizable = all(abs(lam) < 1.0 - tol.circle for lam in modes)

    return {
        'R': r_ok,
        'C': c_ok,
        'I': i_ok,
        'stabilizable': stabilizable,
        'uncontrollable_modes': modes,
    }


def unit_circle_uncontrollable_modes(w: WeightedSystem, tol: Optional[Tolerances] = None) -> List[complex]:
    tol = tol or Tolerances()
    modes = controllability(w, tol)['uncontrollable_modes']
    return [lam for lam in modes if abs(abs(lam) - 1.0) < tol.circle * (1.0 + w.sys.scale)]


def fef_controllability_agreement(w: WeightedSystem, fef: Optional[FeedbackForm] = None,
                                  tol: Optional[Tolerances] = None) -> Dict[str, List[complex]]:
    """Uncontrollable modes of the FEF system and of (I, A11, B1)."""
    tol = tol or Tolerances()
    fef = fef or feedback_form(w, tol=tol)
    E_F, A_F, B_F = fef.canonical_pencil()
    fef_eigs = la.eigvals(fef.A11) if fef.n1 else np.zeros(0)
    return {
        'fef_system': uncontrollable_modes(E_F, A_F, B_F, fef_eigs, tol),
        'ede_part': uncontrollable_modes(np.eye(fef.n1), fef.A11, fef.B1, fef_eigs, tol),
    }


def transfer_columns_in_system_space(w: WeightedSystem, lam: complex,
                                     basis: Optional[np.ndarray] = None) -> float:
    """Distance of [(lam E - A)^{-1} B; I] from the system space."""
    basis = system_space(w) if basis is None else basis
    G = np.vstack([np.linalg.solve(lam * w.E - w.A, w.B), np.eye(w.m)])
    return subspace_contained(G, basis, 1.0) / max(1.0, spectral_norm(G))


@dataclass
class Trajectory:
    """Finite stretch of a behavior; row j holds x_j / u_j."""
    x: np.ndarray
    u: np.ndarray

    @property
    def horizon(self) -> int:
        return self.x.shape[0]

    def stacked(self) -> np.ndarray:
        """Rows (x_j; u_j)."""
        return np.hstack([self.x, self.u])

    def residual(self, w: WeightedSystem) -> float:
        """max_j ||E x_{j+1} - A x_j - B u_j|| relative to the system scale."""
        if self.horizon < 2:
            return 0.0
        lhs = self.x[1:] @ w.E.T
        rhs = self.x[:-1] @ w.A.T + self.u[:-1] @ w.B.T
        worst = np.max(np.linalg.norm(lhs - rhs, axis=1))
        size = max(1.0, np.max(np.linalg.norm(self.stacked(), axis=1)))
        return float(worst) / ((1.0 + w.sys.scale) * size)


def simulate(fef: FeedbackForm, v: np.ndarray, x1_0: np.ndarray,
             tol: Optional[Tolerances] = None) -> Trajectory:
    """
    Run the FEF recursion and map back to original coordinates.

    x1_{j+1} = A11 x1_j + B1 v_j, x2_j = -B2 v_j, x3_j = 0,
    x_j = T xi_j, u_j = F x_j + v_j.
    """
    tol = tol or Tolerances()
    w = fef.system
    n, m, n1, n2 = w.n, w.m, fef.n1, fef.n2
    v = np.asarray(v, dtype=complex)
    if v.ndim == 1:
        v = v.reshape(-1, m) if m else v.reshape(-1, 0)
    if v.ndim != 2 or v.shape[1] != m:
        raise InvalidInputError("input sequence must have m columns", {'m': m, 'shape': v.shape})
    x1 = np.asarray(x1_0, dtype=complex).ravel()
    if x1.size != n1:
        raise InvalidInputError("x1_0 must have n1 entries", {'n1': n1, 'size': x1.size})

    horizon = v.shape[0]
    xs = np.zeros((horizon, n), dtype=complex)
    us = np.zeros((horizon, m), dtype=complex)
    for j in range(horizon):
        xi = np.zeros(n, dtype=complex)
        xi[:n1] = x1
        xi[n1:n1 + n2] = -fef.B2 @ v[j]
        xs[j] = fef.T @ xi
        us[j] = fef.F @ xs[j] + v[j]
        x1 = fef.A11 @ x1 + fef.B1 @ v[j]

    traj = Trajectory(xs, us)
    residual = traj.residual(w)
    if residual > tol.residual:
        raise NumericalFailureError("simulated trajectory violates the dynamics",
                                    {'residual': residual})
    return traj
