"""
Discrete-time Lur'e equations

    M(X) =_V [K L]^* [K L],   rank [K L] = q

for explicit and implicit difference equations.

The EDE solver reads X off the stable deflating subspace of the BVD pencil
after the input columns have been compressed away; implicit systems go
through the feedback equivalence form and are lifted back with
X = W^* diag(X11, 0) W.
"""

from dataclasses import dataclass, field
from typing import Dict, Any, Optional

import numpy as np
import scipy.linalg as la

from config_loader import Tolerances
from pencils.pencil_core import (
    MatrixPencil, DeflatingSubspace, as_matrix, spectral_norm, numerical_rank,
    range_basis, generalized_spectrum, staircase_reduce, is_regular, is_e_neutral,
    normal_rank_sampled, on_unit_circle, verify_deflating, sample_points,
)
from systems.system_forms import (
    WeightedSystem, FeedbackForm, feedback_form, system_space, hermitian_part, i_controllable,
)
from systems.system_io import SolutionFile, encode_matrix
from analysis.popov_kyp import kyp_matrix, kyp_check, popov_normal_rank
from analysis.palindromic_inertia import build_palindromic, build_bvd
from utils.errors import InvalidInputError, NumericalFailureError, UnsupportedStructureError
from utils.output_manager import debug_print


@dataclass
class LureCertificate:
    residual_on_V: float
    rank_condition_ok: bool
    stabilizing: bool
    kyp_feasible: bool
    diagnostics: Dict[str, Any] = field(default_factory=dict)

    def passed(self, tol: Optional[Tolerances] = None) -> bool:
        tol = tol or Tolerances()
        return (self.residual_on_V <= tol.residual and self.rank_condition_ok
                and self.stabilizing and self.kyp_feasible)

    def to_dict(self) -> Dict[str, Any]:
        return {
            'residual_on_V': float(self.residual_on_V),
            'rank_condition_ok': bool(self.rank_condition_ok),
            'stabilizing': bool(self.stabilizing),
            'kyp_feasible': bool(self.kyp_feasible),
        }


@dataclass
class LureSolution:
    X: np.ndarray
    K: np.ndarray
    L: np.ndarray
    q: int
    certificate: Optional[LureCertificate] = None

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def m(self) -> int:
        return self.L.shape[1]

    def factor(self) -> np.ndarray:
        """[K L]."""
        return np.hstack([self.K, self.L])


@dataclass
class LureDeflatingSubspace(DeflatingSubspace):
    """Deflating subspace built from a solution, with its multiplier map."""
    kind: str = "palindromic"
    multiplier_map: Optional[np.ndarray] = None
    G1: Optional[np.ndarray] = None
    G2: Optional[np.ndarray] = None
    checks: Dict[str, Any] = field(default_factory=dict)


def kkt_gram(sol: LureSolution) -> np.ndarray:
    """[K L]^* [K L]; invariant under unitary mixing of the rows."""
    KL = sol.factor()
    return KL.conj().T @ KL


def normalize_factor_phase(K: np.ndarray, L: np.ndarray):
    """Make the first significant entry of each row of [K L] real positive."""
    KL = np.hstack([K, L]).astype(complex)
    for i, row in enumerate(KL):
        size = np.linalg.norm(row)
        if size == 0:
            continue
        lead = np.flatnonzero(np.abs(row) > 1e-12 * size)[0]
        KL[i] = row * (np.conj(row[lead]) / abs(row[lead]))
    n = K.shape[1]
    return KL[:, :n], KL[:, n:]


def _factor_kyp(w: WeightedSystem, X: np.ndarray, q: int, tol: Tolerances):
    """Rank-q factorization M(X) = [K L]^* [K L] via eigendecomposition."""
    M = hermitian_part(kyp_matrix(w, X))
    if M.size == 0:
        return np.zeros((0, w.n), complex), np.zeros((0, w.m), complex)
    d, U = np.linalg.eigh(M)
    size = max(spectral_norm(M), 1e-300)
    if d[0] < -tol.residual * max(1.0, size):
        raise NumericalFailureError("M(X) has a negative eigenvalue; X does not solve the KYP inequality",
                                    {'min_eig': float(d[0])})
    keep = d > tol.factorization * size
    rank = int(np.sum(keep))
    if rank != q:
        raise NumericalFailureError("rank of M(X) differs from the Popov normal rank",
                                    {'rank': rank, 'q': q})
    KL = np.sqrt(d[keep])[:, None] * U[:, keep].conj().T
    return normalize_factor_phase(KL[:, :w.n], KL[:, w.n:])


def _compressed_bvd(w: WeightedSystem, tol: Tolerances) -> MatrixPencil:
    """BVD pencil with the input columns compressed away, acting on (mu, x)."""
    n = w.n
    bvd = build_bvd(w)
    C = bvd.Acal[:, 2 * n:]
    r_c = numerical_rank(C, tol) if C.size else 0
    if C.size:
        Uc, _, _ = la.svd(C, full_matrices=True)
        Q2 = Uc[:, r_c:]
    else:
        Q2 = np.eye(2 * n, dtype=complex)
    return MatrixPencil(Q2.conj().T @ bvd.Ecal[:, :2 * n], Q2.conj().T @ bvd.Acal[:, :2 * n])


def _stable_mask(alpha, beta):
    return np.abs(alpha) < np.abs(beta)


def _check_circle(alpha: np.ndarray, beta: np.ndarray, tol: Tolerances, scale: float):
    finite = np.abs(beta) > 1e-14 * np.maximum(np.abs(alpha), 1e-300)
    lams = alpha[finite] / beta[finite]
    bad = lams[on_unit_circle(lams, tol, scale)]
    if bad.size:
        raise UnsupportedStructureError("eigenvalues on the unit circle in the selection set",
                                        {'lambda': complex(bad[0]), 'count': int(bad.size)})


def _stable_basis(p: MatrixPencil, tol: Tolerances) -> np.ndarray:
    """Right singular part plus stable deflating subspace of the regular part."""
    if p.is_square and is_regular(p, tol):
        _, _, alpha, beta, _, Zz = la.ordqz(p.A, p.E, sort=_stable_mask, output='complex')
        _check_circle(alpha, beta, tol, p.norm)
        k = int(np.sum(_stable_mask(alpha, beta)))
        return Zz[:, :k]

    debug_print("   Lur'e: singular BVD pencil, extracting right chains")
    sc = staircase_reduce(p, tol)
    cr, reg, _ = sc.col_blocks
    parts = [sc.V[:, :cr]]
    if reg:
        regp = sc.regular_part
        _, _, alpha, beta, _, Zz = la.ordqz(regp.A, regp.E, sort=_stable_mask, output='complex')
        _check_circle(alpha, beta, tol, regp.norm)
        k = int(np.sum(_stable_mask(alpha, beta)))
        parts.append(sc.V[:, cr:cr + reg] @ Zz[:, :k])
    return np.hstack(parts)


def dare_residual(A, B, Q, R, S, X) -> float:
    """Relative residual of X = A^*XA + Q - (A^*XB + S)(R + B^*XB)^{-1}(B^*XA + S^*)."""
    A, X = np.asarray(A, complex), np.asarray(X, complex)
    B = np.asarray(B, complex)
    S = np.zeros_like(B) if S is None else np.asarray(S, complex)
    Ah, Bh = A.conj().T, B.conj().T
    G = Ah @ X @ B + S
    rhs = Ah @ X @ A + Q - G @ np.linalg.solve(R + Bh @ X @ B, G.conj().T)
    return spectral_norm(rhs - X) / max(1.0, spectral_norm(X))


def dare_fixed_point(A, B, Q, R, S=None, tol: Optional[Tolerances] = None) -> np.ndarray:
    """Riccati value iteration from X = 0."""
    tol = tol or Tolerances()
    A, B = np.asarray(A, complex), np.asarray(B, complex)
    Q, R = np.asarray(Q, complex), np.asarray(R, complex)
    S = np.zeros_like(B) if S is None else np.asarray(S, complex)
    Ah, Bh = A.conj().T, B.conj().T

    X = np.zeros_like(Q)
    for it in range(tol.dare_max_iter):
        G = Ah @ X @ B + S
        X_new = hermitian_part(Ah @ X @ A + Q - G @ np.linalg.solve(R + Bh @ X @ B, G.conj().T))
        if spectral_norm(X_new - X) <= tol.dare_tol * max(1.0, spectral_norm(X_new)):
            debug_print(f"   DARE iteration converged after {it + 1} steps")
            return X_new
        X = X_new
    raise NumericalFailureError("Riccati iteration did not converge",
                                {'iterations': tol.dare_max_iter})


def lure_solve_ede(w: WeightedSystem, path: str = 'auto', tol: Optional[Tolerances] = None) -> LureSolution:
    """
    Stabilizing solution of the Lur'e equation of an explicit system.

    Args:
        w: Weighted system with E = I
        path: 'auto' or 'bvd' (deflating subspace of the BVD pencil) or
              'dare' (scipy Riccati solver, needs R + B^*XB invertible)
        tol: Numerical tolerances

    Returns:
        LureSolution with (K, L) phase-normalized
    """
    tol = tol or Tolerances()
    n, m = w.n, w.m
    if spectral_norm(w.E - np.eye(n)) > tol.residual:
        raise InvalidInputError("lure_solve_ede needs E = I")
    if path not in ('auto', 'bvd', 'dare'):
        raise InvalidInputError("unknown solver path", {'path': path})

    q = popov_normal_rank(w, tol) if n else numerical_rank(w.R, tol)

    if n == 0:
        X = np.zeros((0, 0), dtype=complex)
        K, L = _factor_kyp(w, X, q, tol)
        return LureSolution(X=X, K=K, L=L, q=q)

    if path == 'dare':
        try:
            X = la.solve_discrete_are(w.A, w.B, w.Q, w.R, s=w.S)
        except (np.linalg.LinAlgError, ValueError) as e:
            raise NumericalFailureError("Riccati solver failed", {'reason': str(e)})
    else:
        Y = _stable_basis(_compressed_bvd(w, tol), tol)
        Y_mu, Y_x = Y[:n], Y[n:]
        if Y.shape[1] < n or numerical_rank(Y_x, tol) < n:
            raise NumericalFailureError("stable deflating subspace is not a graph over x",
                                        {'dimension': Y.shape[1], 'rank_x': numerical_rank(Y_x, tol)})
        X = -Y_mu @ np.linalg.pinv(Y_x)
        graph = spectral_norm(Y_mu + X @ Y_x) / max(1.0, spectral_norm(Y))
        if graph > tol.residual:
            raise NumericalFailureError("stable deflating subspace is inconsistent with a Hermitian X",
                                        {'residual': graph})

    asym = spectral_norm(X - X.conj().T) / max(1.0, spectral_norm(X))
    if asym > np.sqrt(tol.residual):
        raise NumericalFailureError("computed X is not Hermitian", {'asymmetry': asym})
    X = hermitian_part(X)

    K, L = _factor_kyp(w, X, q, tol)
    debug_print(f"   Lur'e (EDE, {path}): q={q}, ||X||={spectral_norm(X):.6g}")
    return LureSolution(X=X, K=K, L=L, q=q)


def _closed_loop_pencil(w: WeightedSystem, sol: LureSolution) -> MatrixPencil:
    """z [[E, 0], [0, 0]] - [[A, B], [K, L]]."""
    n, m, q = w.n, w.m, sol.q
    E_ext = np.block([[w.E, np.zeros((n, m))], [np.zeros((q, n + m))]])
    A_ext = np.block([[w.A, w.B], [sol.K, sol.L]])
    return MatrixPencil(E_ext, A_ext)


def lure_verify(w: WeightedSystem, sol: LureSolution, tol: Optional[Tolerances] = None,
                V: Optional[np.ndarray] = None) -> LureCertificate:
    """
    Certificate for a candidate solution, computed from (w, sol) alone.

    Args:
        w: Weighted system
        sol: Candidate (X, K, L)
        tol: Numerical tolerances
        V: Optional orthonormal system-space basis

    Returns:
        LureCertificate
    """
    tol = tol or Tolerances()
    n, m, q = w.n, w.m, sol.q
    X = as_matrix(sol.X, "X", (n, n))
    K = as_matrix(sol.K, "K", (q, n)) if q else np.zeros((0, n), complex)
    L = as_matrix(sol.L, "L", (q, m)) if q else np.zeros((0, m), complex)
    sol = LureSolution(X=X, K=K, L=L, q=q)

    V = system_space(w, tol=tol) if V is None else V
    M = kyp_matrix(w, X)
    KL = sol.factor()
    diff = V.conj().T @ (M - KL.conj().T @ KL) @ V
    size = max(1.0, spectral_norm(V.conj().T @ M @ V))
    residual = spectral_norm(diff) / size

    factor_rank = numerical_rank(KL, tol) if q else 0
    hermitian_defect = spectral_norm(X - X.conj().T) / max(1.0, spectral_norm(X))

    # rk [zE - A, -B; (z-1)K, (z-1)L] = n + q
    rank_pencil = MatrixPencil(np.block([[w.E, np.zeros((n, m))], [K, L]]),
                               np.block([[w.A, w.B], [K, L]]))
    try:
        normal_rank = generalized_spectrum(rank_pencil, tol).normal_rank
    except NumericalFailureError:
        normal_rank = normal_rank_sampled(rank_pencil, 20, tol)
    rank_ok = normal_rank == n + q and factor_rank == q

    stabilizing, closed_loop = _stabilizing(w, sol, tol)
    feasible = kyp_check(w, X, V=V, tol=tol)['feasible']

    diagnostics = {
        'normal_rank': normal_rank,
        'factor_rank': factor_rank,
        'hermitian_defect': hermitian_defect,
        'closed_loop_eigenvalues': closed_loop,
    }
    debug_print(f"   Lur'e certificate: residual={residual:.3e}, rank_ok={rank_ok}, "
                f"stabilizing={stabilizing}, kyp={feasible}")
    return LureCertificate(residual_on_V=residual, rank_condition_ok=rank_ok,
                           stabilizing=stabilizing, kyp_feasible=feasible, diagnostics=diagnostics)


def _stabilizing(w: WeightedSystem, sol: LureSolution, tol: Tolerances):
    """rk [lam E - A, -B; K, L] = n + q on and outside the unit circle."""
    n, q = w.n, sol.q
    target = n + q
    top = lambda lam: np.block([[lam * w.E - w.A, -w.B], [sol.K, sol.L]])

    for omega in np.linspace(0.0, 2.0 * np.pi, tol.popov_samples, endpoint=False):
        if numerical_rank(top(np.exp(1j * omega)), tol) < target:
            return False, np.zeros(0, dtype=complex)

    raw = sample_points(tol.random_outside_points, tol.seed + 4)
    for lam in raw / np.abs(raw) * (1.0 + np.abs(raw)):
        if numerical_rank(top(lam), tol) < target:
            return False, np.zeros(0, dtype=complex)

    try:
        eigs = generalized_spectrum(_closed_loop_pencil(w, sol), tol).finite_eigenvalues
    except NumericalFailureError:
        return True, np.zeros(0, dtype=complex)
    outside = eigs[np.abs(eigs) >= 1.0 - tol.circle]
    for lam in outside:
        if numerical_rank(top(lam), tol) < target:
            return False, eigs
    return outside.size == 0, eigs


def lure_solve(w: WeightedSystem, F: Optional[np.ndarray] = None, path: str = 'auto',
               tol: Optional[Tolerances] = None, fef: Optional[FeedbackForm] = None) -> LureSolution:
    """
    Stabilizing Lur'e solution of an implicit system via its feedback form.

    Args:
        w: Weighted descriptor system
        F: Optional feedback used for the feedback form
        path: EDE solver path, see lure_solve_ede
        tol: Numerical tolerances
        fef: Precomputed feedback form

    Returns:
        LureSolution with a certificate attached
    """
    tol = tol or Tolerances()
    n = w.n

    if n and spectral_norm(w.E - np.eye(n)) <= tol.residual:
        sol = lure_solve_ede(w, path, tol)
    else:
        if not i_controllable(w, tol):
            raise UnsupportedStructureError("Lur'e solver requires an I-controllable system")
        fef = fef or feedback_form(w, F, tol)
        ede_sol = lure_solve_ede(fef.ede, path, tol)
        n1 = fef.n1

        X_F = np.zeros((n, n), dtype=complex)
        X_F[:n1, :n1] = ede_sol.X
        X = hermitian_part(fef.W.conj().T @ X_F @ fef.W)

        K_F = np.zeros((ede_sol.q, n), dtype=complex)
        K_F[:, :n1] = ede_sol.K
        K = K_F @ np.linalg.inv(fef.T) - ede_sol.L @ fef.F
        K, L = normalize_factor_phase(K, ede_sol.L)
        sol = LureSolution(X=X, K=K, L=L, q=ede_sol.q)

    cert = lure_verify(w, sol, tol)
    if cert.residual_on_V > tol.residual:
        raise NumericalFailureError("lifted Lur'e solution fails verification",
                                    {'residual': cert.residual_on_V})
    if not cert.stabilizing:
        raise NumericalFailureError("Lur'e solution is not stabilizing",
                                    {'closed_loop_eigenvalues': [complex(lam) for lam in
                                                                 cert.diagnostics['closed_loop_eigenvalues']]})
    sol.certificate = cert
    return sol


def _deflating_blocks(fef: FeedbackForm, X11: np.ndarray, kind: str) -> np.ndarray:
    """Y_F in feedback-form coordinates; rows (mu1, mu2, x1, x2, u), columns (xi1, xi2, v)."""
    n1, n2, m = fef.n1, fef.n2, fef.system.m
    I1, I2, Im = np.eye(n1), np.eye(n2), np.eye(m)
    Z = lambda r, c: np.zeros((r, c), dtype=complex)
    if kind == 'palindromic':
        mu1 = [X11 @ (fef.A11 - I1), Z(n1, n2), X11 @ fef.B1]
    else:
        mu1 = [-X11, Z(n1, n2), Z(n1, m)]
    return np.block([
        mu1,
        [Z(n2, n1), -I2, -fef.B2],
        [I1, Z(n1, n2), Z(n1, m)],
        [Z(n2, n1), Z(n2, n2), -fef.B2],
        [Z(m, n1), Z(m, n2), Im],
    ])


def deflating_from_solution(w: WeightedSystem, sol: LureSolution, kind: str = 'palindromic',
                            tol: Optional[Tolerances] = None,
                            fef: Optional[FeedbackForm] = None) -> LureDeflatingSubspace:
    """
    Deflating subspace of the palindromic or BVD pencil belonging to a solution.

    Y = [[X(A-E) + G1, XB + G2], [I, 0], [0, I]] on the system space
    (palindromic) or [[-XE + G1, G2], ...] (BVD), im [G1 G2] in ker E^*.
    """
    tol = tol or Tolerances()
    n, m = w.n, w.m
    if kind not in ('palindromic', 'bvd'):
        raise InvalidInputError("kind must be 'palindromic' or 'bvd'", {'kind': kind})
    if kind == 'palindromic' and numerical_rank(np.hstack([w.E - w.A, w.B]), tol) < n:
        raise UnsupportedStructureError("palindromic deflating subspace needs rk [E - A, B] = n")

    fef = fef or feedback_form(w, tol=tol)
    if fef.n3:
        raise UnsupportedStructureError("deflating subspace needs n3 = 0 in the feedback form",
                                        {'n3': fef.n3})

    # X11 of the solution in feedback coordinates: W^{-*} X W^{-1}.
    Winv = np.linalg.inv(fef.W)
    X_F = Winv.conj().T @ sol.X @ Winv
    X11 = X_F[:fef.n1, :fef.n1]

    Y_F = _deflating_blocks(fef, X11, kind)
    tcal = fef.tcal
    U_F = la.block_diag(fef.W.conj().T, tcal)
    Y = U_F @ Y_F @ np.linalg.inv(tcal)

    if kind == 'palindromic':
        p = build_palindromic(w)
        Acal, Ecal = p.Acal, p.Acal.conj().T
    else:
        b = build_bvd(w)
        Acal, Ecal = b.Acal, b.Ecal

    Z = range_basis(np.hstack([Ecal @ Y, Acal @ Y]), tol)
    reduced = MatrixPencil(Z.conj().T @ Ecal @ Y, Z.conj().T @ Acal @ Y)

    Y_mu = Y[:n]
    if kind == 'palindromic':
        base = np.hstack([sol.X @ (w.A - w.E), sol.X @ w.B])
    else:
        base = np.hstack([-sol.X @ w.E, np.zeros((n, m))])
    G = Y_mu - base
    ker_residual = spectral_norm(w.E.conj().T @ G) / max(1.0, spectral_norm(G))

    subspace = LureDeflatingSubspace(Y=Y, Z=Z, reduced=reduced, kind=kind,
                                     multiplier_map=Y_mu, G1=G[:, :n], G2=G[:, n:])
    report = verify_deflating(MatrixPencil(Ecal, Acal), subspace, tol)
    checks = {'deflating': report, 'ker_E_star_residual': ker_residual}
    if kind == 'palindromic':
        neutral, value = is_e_neutral(Y, Ecal - Acal, tol)
        checks['neutral'] = neutral
        checks['neutrality_residual'] = value
    subspace.checks = checks

    failed = (report['residual'] > tol.residual or ker_residual > tol.residual
              or (kind == 'palindromic' and not checks['neutral']))
    if failed:
        raise NumericalFailureError("deflating subspace from solution fails verification",
                                    {'residual': report['residual'], 'ker_E_star': ker_residual,
                                     'neutrality': checks.get('neutrality_residual')})
    debug_print(f"   deflating subspace ({kind}): dim={Y.shape[1]}, reduced rows={Z.shape[1]}")
    return subspace


def solution_to_dict(sol: LureSolution) -> Dict[str, Any]:
    return {
        'X': encode_matrix(sol.X),
        'K': encode_matrix(sol.K) if sol.q else [],
        'L': encode_matrix(sol.L) if sol.q else [],
        'q': int(sol.q),
        'certificate': sol.certificate.to_dict() if sol.certificate else None,
    }


def solution_from_dict(data: Dict[str, Any], n: int, m: int) -> LureSolution:
    parsed = SolutionFile.model_validate(data)
    arrays = parsed.arrays(n, m)
    return LureSolution(X=arrays['X'], K=arrays['K'], L=arrays['L'], q=parsed.q)
