"""
Optimal control of weighted descriptor systems.

    J(x, u)  = sum_j (x_j; u_j)^* [[Q, S], [S^*, R]] (x_j; u_j)
    W+(E x0) = x0^* E^* X E x0          (X stabilizing Lur'e solution)

The optimal trajectory is the behavior of the closed loop

    [E 0; 0 0] sigma(x, u) = [A B; K L] (x, u)

started at a consistent point; it exists when the zero dynamics of
(E, A, B, K, L) are strongly stabilizable and is unique when they are
strongly asymptotically stable.
"""

import warnings
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
import scipy.linalg as la
from tqdm import tqdm

from config_loader import Tolerances
from pencils.pencil_core import (
    MatrixPencil, as_matrix, spectral_norm, null_space, numerical_rank,
    generalized_spectrum, sample_points,
)
from systems.system_forms import (
    WeightedSystem, FeedbackForm, Trajectory, feedback_form, initial_state,
    unit_circle_uncontrollable_modes,
)
from analysis.popov_kyp import kyp_matrix, kyp_existence_report
from solvers.lure_solver import LureSolution, lure_solve, deflating_from_solution
from utils.errors import (
    InvalidInputError, NumericalFailureError, UnsupportedStructureError, InfeasibleSynthesisError,
)
from utils.output_manager import debug_print, get_output_manager


@dataclass
class ZeroDynamicsReport:
    stabilizable: bool
    asymptotically_stable: bool
    strongly_stabilizable: bool
    strongly_asymptotically_stable: bool
    index_of_R: int
    rank_profile: Dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, Any]:
        return {
            'stabilizable': self.stabilizable,
            'asymptotically_stable': self.asymptotically_stable,
            'strongly_stabilizable': self.strongly_stabilizable,
            'strongly_asymptotically_stable': self.strongly_asymptotically_stable,
            'index_of_R': self.index_of_R,
            'normal_rank': self.rank_profile.get('normal_rank'),
            'full_rank': self.rank_profile.get('full_rank'),
            'eigenvalues': self.rank_profile.get('eigenvalues'),
        }


@dataclass
class OptimalControlResult:
    """Synthesized optimal trajectory with its multipliers and checks."""
    optimal_value: float
    trajectory: Optional[Trajectory]
    multipliers_mu: Optional[np.ndarray]
    multipliers_m: Optional[np.ndarray]
    objective: Dict[str, Any] = field(default_factory=dict)
    diagnostics: Dict[str, Any] = field(default_factory=dict)

    @property
    def horizon(self) -> int:
        return 0 if self.trajectory is None else self.trajectory.horizon - 1

    def to_dict(self) -> Dict[str, Any]:
        return {
            'optimal_value': self.optimal_value,
            'horizon': self.horizon,
            'J_N': self.objective.get('value'),
            'converged': self.objective.get('converged'),
            **self.diagnostics,
        }


# ---------------------------------------------------------------------------
# Objective

def _quadratic(v: np.ndarray, M: np.ndarray) -> float:
    return float(np.real(np.vdot(v, M @ v)))


def stage_costs(w: WeightedSystem, traj: Trajectory) -> np.ndarray:
    """(x_j; u_j)^* W (x_j; u_j) for every row of the trajectory."""
    Z = traj.stacked()
    if Z.size == 0:
        return np.zeros(traj.horizon)
    return np.real(np.einsum('ij,jk,ik->i', Z.conj(), w.weight_matrix(), Z))


def objective(w: WeightedSystem, traj: Trajectory, horizon: Optional[int] = None,
              tol: Optional[Tolerances] = None) -> Dict[str, Any]:
    """
    Partial sums of the objective over the first `horizon` stages.

    The convergence flag is a Cauchy test over the last quarter of the
    partial sums.
    """
    tol = tol or Tolerances()
    N = traj.horizon if horizon is None else int(horizon)
    if N > traj.horizon:
        raise InvalidInputError("horizon exceeds the trajectory length",
                                {'horizon': N, 'rows': traj.horizon})
    if N == 0:
        return {'partial_sums': np.zeros(0), 'value': 0.0, 'converged': True}

    sums = np.cumsum(stage_costs(w, traj)[:N])
    window = sums[-max(2, N // 4):]
    spread = float(window.max() - window.min()) if window.size else 0.0
    converged = N >= 2 and spread <= tol.residual * max(1.0, abs(sums[-1]))
    return {'partial_sums': sums, 'value': float(sums[-1]), 'converged': bool(converged)}


def check_initial_value(w: WeightedSystem, x0: np.ndarray, tol: Tolerances,
                        fef: Optional[FeedbackForm] = None):
    if w.n == 0 or spectral_norm(w.E - np.eye(w.n)) <= tol.residual:
        return
    fef = fef or feedback_form(w, tol=tol)
    initial_state(fef, x0, tol)


def optimal_value(w: WeightedSystem, sol: LureSolution, x0: Sequence[complex],
                  tol: Optional[Tolerances] = None, fef: Optional[FeedbackForm] = None) -> float:
    """W+(E x0) = x0^* E^* X E x0 for a consistent x0."""
    tol = tol or Tolerances()
    x0 = as_matrix(x0, "x0", (w.n, 1)).ravel()
    check_initial_value(w, x0, tol, fef)
    Ex0 = w.E @ x0
    value = np.vdot(Ex0, sol.X @ Ex0)
    if abs(value.imag) > 1e-12 * max(1.0, abs(value.real)):
        debug_print(f"⚠️  optimal value has imaginary part {value.imag:.3e}")
    return float(value.real)


# ---------------------------------------------------------------------------
# Zero dynamics

def zero_dynamics(E, A, B, C, D, tol: Optional[Tolerances] = None) -> ZeroDynamicsReport:
    """
    Stability flags of the zero dynamics of E sigma x = A x + B u, y = C x + D u.

    Args:
        E, A, B: Plant matrices (n x n, n x n, n x m)
        C, D: Output matrices (p x n, p x m)
        tol: Numerical tolerances

    Returns:
        ZeroDynamicsReport built from R(z) = [zE - A, -B; C, D]
    """
    tol = tol or Tolerances()
    E = as_matrix(E, "E")
    n = E.shape[0]
    A = as_matrix(A, "A", (n, n))
    B = np.asarray(B, dtype=complex).reshape(n, -1)
    m = B.shape[1]
    C = np.asarray(C, dtype=complex).reshape(-1, n)
    p = C.shape[0]
    D = as_matrix(D, "D", (p, m))

    E_ext = np.block([[E, np.zeros((n, m))], [np.zeros((p, n + m))]])
    A_ext = np.block([[A, B], [-C, -D]])
    pencil = MatrixPencil(E_ext, A_ext)
    spec = generalized_spectrum(pencil, tol)
    eigs = spec.finite_eigenvalues

    # Pointwise ranks on and outside the unit circle
    target = spec.normal_rank
    raw = sample_points(tol.random_outside_points, tol.seed + 5)
    probes = list(np.exp(1j * np.linspace(0.0, 2.0 * np.pi, 8, endpoint=False)))
    probes += list(raw / np.abs(raw) * (1.0 + np.abs(raw)))
    probes += [lam for lam in eigs if abs(lam) >= 1.0 - tol.circle]
    drops = [complex(lam) for lam in probes if numerical_rank(pencil.at(lam), tol) < target]

    stabilizable = not drops and bool(np.all(np.abs(eigs) < 1.0 - tol.circle))
    full_rank = spec.normal_rank == n + m
    asymptotically_stable = stabilizable and full_rank
    low_index = spec.index <= 1

    report = ZeroDynamicsReport(
        stabilizable=stabilizable,
        asymptotically_stable=asymptotically_stable,
        strongly_stabilizable=stabilizable and low_index,
        strongly_asymptotically_stable=asymptotically_stable and low_index,
        index_of_R=int(spec.index),
        rank_profile={
            'normal_rank': spec.normal_rank,
            'full_rank': full_rank,
            'eigenvalues': eigs,
            'rank_drops': drops,
            'probes': len(probes),
        },
    )
    debug_print(f"   zero dynamics: stabilizable={stabilizable}, full rank={full_rank}, index={spec.index}")
    return report


def uniqueness_report(w: WeightedSystem, sol: LureSolution, tol: Optional[Tolerances] = None) -> Dict[str, Any]:
    """Existence and uniqueness of the optimal control from the zero dynamics of (E, A, B, K, L)."""
    zd = zero_dynamics(w.E, w.A, w.B, sol.K, sol.L, tol)
    return {
        'exists': zd.strongly_stabilizable,
        'unique': zd.strongly_asymptotically_stable,
        'zero_dynamics': zd,
    }


def closed_loop_radius(zd: ZeroDynamicsReport) -> float:
    eigs = np.asarray(zd.rank_profile.get('eigenvalues', []), dtype=complex)
    return float(np.max(np.abs(eigs))) if eigs.size else 0.0


# ---------------------------------------------------------------------------
# Closed-loop stepping

def _algebraic_rows(w: WeightedSystem, sol: LureSolution, tol: Tolerances) -> np.ndarray:
    """Rows on (x, u) every closed-loop point satisfies: ker(E^*)^* [A B] and [K L]."""
    N = null_space(w.E.conj().T, tol)
    rows = N.conj().T @ np.hstack([w.A, w.B]) if N.size else np.zeros((0, w.n + w.m), dtype=complex)
    return np.vstack([rows, sol.factor()])


def _solve_stacked(lhs: np.ndarray, rhs: np.ndarray) -> Tuple[np.ndarray, float]:
    z, *_ = la.lstsq(lhs, rhs)
    size = (1.0 + spectral_norm(lhs)) * max(1.0, np.linalg.norm(z), np.linalg.norm(rhs))
    return z, float(np.linalg.norm(lhs @ z - rhs) / size)


def closed_loop_step(w: WeightedSystem, sol: LureSolution, x: np.ndarray, u: np.ndarray,
                     tol: Optional[Tolerances] = None, constraints: Optional[np.ndarray] = None
                     ) -> Tuple[np.ndarray, np.ndarray, float]:
    """
    (x_{j+1}, u_{j+1}) from E x_{j+1} = A x_j + B u_j plus the algebraic rows at j+1.

    The minimum-norm solution is returned when the step is not unique.
    """
    tol = tol or Tolerances()
    n, m = w.n, w.m
    rows = _algebraic_rows(w, sol, tol) if constraints is None else constraints
    lhs = np.vstack([np.hstack([w.E, np.zeros((n, m))]), rows])
    rhs = np.concatenate([w.A @ x + w.B @ u, np.zeros(rows.shape[0])])
    z, residual = _solve_stacked(lhs, rhs)
    return z[:n], z[n:], residual


def consistent_start(w: WeightedSystem, sol: LureSolution, x0: np.ndarray,
                     tol: Optional[Tolerances] = None, constraints: Optional[np.ndarray] = None
                     ) -> Tuple[np.ndarray, np.ndarray, float]:
    """(x_0, u_0) with E x_0 = E x0 on the closed loop's algebraic rows."""
    tol = tol or Tolerances()
    n, m = w.n, w.m
    x0 = as_matrix(x0, "x0", (n, 1)).ravel()
    rows = _algebraic_rows(w, sol, tol) if constraints is None else constraints
    lhs = np.vstack([np.hstack([w.E, np.zeros((n, m))]), rows])
    rhs = np.concatenate([w.E @ x0, np.zeros(rows.shape[0])])
    z, residual = _solve_stacked(lhs, rhs)
    return z[:n], z[n:], residual


# ---------------------------------------------------------------------------
# Identities

def energy_balance(w: WeightedSystem, sol: LureSolution, traj: Trajectory,
                   horizon: Optional[int] = None) -> Dict[str, float]:
    """J_N against x_0^* E^*XE x_0 - x_N^* E^*XE x_N + sum_{j<N} ||K x_j + L u_j||^2."""
    N = traj.horizon - 1 if horizon is None else int(horizon)
    J = objective(w, traj, N)['value']
    EXE = w.E.conj().T @ sol.X @ w.E
    feedback = traj.stacked()[:N] @ sol.factor().T
    penalty = float(np.sum(np.abs(feedback) ** 2)) if feedback.size else 0.0
    rhs = _quadratic(traj.x[0], EXE) - _quadratic(traj.x[N], EXE) + penalty
    return {
        'objective': J,
        'balance': rhs,
        'feedback_energy': penalty,
        'residual': abs(J - rhs) / max(1.0, abs(J), abs(rhs)),
    }


def telescoping_residual(w: WeightedSystem, X: np.ndarray, traj: Trajectory,
                         horizon: Optional[int] = None) -> float:
    """|J_N - (sum z_j^* M(X) z_j + x_0^* E^*XE x_0 - x_N^* E^*XE x_N)|, relative."""
    N = traj.horizon - 1 if horizon is None else int(horizon)
    J = objective(w, traj, N)['value']
    M = kyp_matrix(w, X)
    Z = traj.stacked()[:N]
    lure_part = float(np.real(np.einsum('ij,jk,ik->', Z.conj(), M, Z))) if Z.size else 0.0
    EXE = w.E.conj().T @ X @ w.E
    rhs = lure_part + _quadratic(traj.x[0], EXE) - _quadratic(traj.x[N], EXE)
    scale = max(1.0, abs(J), abs(lure_part), float(np.sum(np.abs(Z) ** 2)) * (1.0 + spectral_norm(M)))
    return abs(J - rhs) / scale


def tail_bound(traj: Trajectory, rho: float, weight_norm: float = 1.0) -> float:
    """Geometric bound on sum_{j >= N} of the stage costs once the decay rate rho < 1 is known."""
    if rho >= 1.0:
        return np.inf
    if traj.horizon == 0:
        return 0.0
    last = float(np.sum(np.abs(traj.stacked()[-1]) ** 2))
    return weight_norm * last * rho ** 2 / (1.0 - rho ** 2)


def trajectory_to_frame(w: WeightedSystem, traj: Trajectory) -> pd.DataFrame:
    """CSV-ready table: j, x components, u components, stage_cost, partial_sum."""
    data: Dict[str, Any] = {'j': np.arange(traj.horizon)}
    for name, block in (('x', traj.x), ('u', traj.u)):
        values = np.real_if_close(block, tol=1000)
        for k in range(block.shape[1]):
            data[f'{name}{k + 1}'] = values[:, k]
    costs = stage_costs(w, traj)
    data['stage_cost'] = costs
    data['partial_sum'] = np.cumsum(costs)
    return pd.DataFrame(data)


# ---------------------------------------------------------------------------
# Multipliers

def _multiplier_maps(w: WeightedSystem, sol: LureSolution, tol: Tolerances,
                     fef: Optional[FeedbackForm]) -> Tuple[np.ndarray, np.ndarray, str]:
    """
    [-XE + G1, G2] and [X(A - E) + G1, XB + G2].

    G = 0 replaces a failed deflating subspace only when E is invertible,
    since then ker E^* = {0} forces the G blocks to vanish.
    """
    maps = {}
    invertible_E = numerical_rank(w.E, tol) == w.n
    source = 'deflating'
    base = {
        'bvd': np.hstack([-sol.X @ w.E, np.zeros((w.n, w.m), dtype=complex)]),
        'palindromic': np.hstack([sol.X @ (w.A - w.E), sol.X @ w.B]),
    }
    for kind in ('bvd', 'palindromic'):
        try:
            maps[kind] = deflating_from_solution(w, sol, kind, tol, fef).multiplier_map
        except (UnsupportedStructureError, NumericalFailureError) as e:
            if not invertible_E:
                raise
            debug_print(f"   {kind} multipliers without G blocks: {e}")
            maps[kind] = base[kind]
            source = 'G=0'
    return maps['bvd'], maps['palindromic'], source


def bvp_residuals(w: WeightedSystem, traj: Trajectory, mu: np.ndarray, m_mult: np.ndarray,
                  tol: Optional[Tolerances] = None) -> Dict[str, float]:
    """
    Boundary-value residuals of the multiplier sequences.

    Stationarity is measured after the best correction of mu_{j+1} inside
    ker E^*, which leaves E^* mu unchanged.
    """
    tol = tol or Tolerances()
    n, m = w.n, w.m
    N = traj.horizon - 1
    EH = w.E.conj().T
    reference = max(1.0, float(np.linalg.norm(EH @ mu[0])))

    terminal = float(np.linalg.norm(EH @ mu[N])) / reference
    summed = EH @ np.sum(m_mult[:N], axis=0) if N else np.zeros(n, dtype=complex)
    sum_residual = float(np.linalg.norm(summed - EH @ mu[0])) / reference

    adjoint = np.vstack([w.A.conj().T, w.B.conj().T])
    shift_free = np.vstack([EH, np.zeros((m, n), dtype=complex)])
    kernel = null_space(EH, tol)
    range_of = la.orth(adjoint @ kernel) if kernel.size else np.zeros((n + m, 0), dtype=complex)

    W = w.weight_matrix()
    Z = traj.stacked()
    worst = 0.0
    for j in range(N):
        rhs = shift_free @ mu[j] + W @ Z[j] - adjoint @ mu[j + 1]
        if range_of.size:
            rhs = rhs - range_of @ (range_of.conj().T @ rhs)
        size = (1.0 + spectral_norm(W) + spectral_norm(adjoint)) * max(
            1.0, np.linalg.norm(Z[j]), np.linalg.norm(mu[j]), np.linalg.norm(mu[j + 1]))
        worst = max(worst, float(np.linalg.norm(rhs)) / size)

    return {
        'bvd_terminal': terminal,
        'pal_sum_residual': sum_residual,
        'bvd_stationarity': worst,
        'dynamics_residual': traj.residual(w),
        'verified': bool(max(terminal, sum_residual, worst) <= tol.residual),
    }


# ---------------------------------------------------------------------------
# Synthesis

def synthesize(w: WeightedSystem, sol: LureSolution, x0: Sequence[complex], horizon: int = 40,
               tol: Optional[Tolerances] = None, fef: Optional[FeedbackForm] = None) -> OptimalControlResult:
    """
    Optimal trajectory, multipliers and checks for a stabilizing solution.

    Args:
        w: Weighted descriptor system
        sol: Stabilizing Lur'e solution
        x0: Consistent initial value
        horizon: Number of closed-loop steps
        tol: Numerical tolerances
        fef: Optional precomputed feedback form

    Returns:
        OptimalControlResult whose trajectory has horizon + 1 rows
    """
    tol = tol or Tolerances()
    if horizon < 1:
        raise InvalidInputError("horizon must be at least 1", {'horizon': horizon})
    x0 = as_matrix(x0, "x0", (w.n, 1)).ravel()
    value = optimal_value(w, sol, x0, tol, fef)

    existence = uniqueness_report(w, sol, tol)
    zd = existence['zero_dynamics']
    if not existence['exists']:
        raise InfeasibleSynthesisError("zero dynamics of (E, A, B, K, L) are not strongly stabilizable",
                                       {'index': zd.index_of_R,
                                        'stabilizable': zd.stabilizable})

    rows = _algebraic_rows(w, sol, tol)
    x, u, worst = consistent_start(w, sol, x0, tol, rows)
    if worst > tol.residual:
        raise NumericalFailureError("no consistent closed-loop start for x0", {'residual': worst})
    xs, us = [x], [u]

    debug_mode = get_output_manager().debug_mode
    for j in tqdm(range(horizon), desc="closed loop", disable=not debug_mode):
        x, u, residual = closed_loop_step(w, sol, x, u, tol, rows)
        if residual > tol.residual:
            raise NumericalFailureError("closed-loop step is inconsistent",
                                        {'step': j + 1, 'residual': residual})
        worst = max(worst, residual)
        xs.append(x)
        us.append(u)

    traj = Trajectory(x=np.array(xs).reshape(horizon + 1, w.n), u=np.array(us).reshape(horizon + 1, w.m))
    obj = objective(w, traj, horizon, tol)

    mu_map, m_map, source = _multiplier_maps(w, sol, tol, fef)
    Z = traj.stacked()
    mu = Z @ mu_map.T
    m_mult = Z @ m_map.T
    bvp = bvp_residuals(w, traj, mu, m_mult, tol)
    balance = energy_balance(w, sol, traj, horizon)

    rho = closed_loop_radius(zd)
    diagnostics = {
        'exists': True,
        'unique': existence['unique'],
        'step_residual': worst,
        'energy_balance_residual': balance['residual'],
        'feedback_energy': balance['feedback_energy'],
        'closed_loop_radius': rho,
        'tail_bound': tail_bound(traj, rho, spectral_norm(w.weight_matrix())),
        'multiplier_source': source,
        **bvp,
    }
    debug_print(f"   synthesis: J_{horizon}={obj['value']:.12g}, W+={value:.12g}, "
                f"bvp verified={bvp['verified']}")
    return OptimalControlResult(optimal_value=value, trajectory=traj, multipliers_mu=mu,
                                multipliers_m=m_mult, objective=obj, diagnostics=diagnostics)


# ---------------------------------------------------------------------------
# Finite-horizon oracle

def _kkt_blocks(w: WeightedSystem, x0: np.ndarray, N: int) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Hessian H and constraints C z = d on z = (x_0 .. x_N, u_0 .. u_{N-1})."""
    n, m = w.n, w.m
    nx = (N + 1) * n
    nv = nx + N * m
    H = np.zeros((nv, nv), dtype=complex)
    C = np.zeros(((N + 2) * n, nv), dtype=complex)
    d = np.zeros((N + 2) * n, dtype=complex)

    for j in range(N):
        ix = slice(j * n, (j + 1) * n)
        iu = slice(nx + j * m, nx + (j + 1) * m)
        H[ix, ix] += w.Q
        H[ix, iu] += w.S
        H[iu, ix] += w.S.conj().T
        H[iu, iu] += w.R

        rows = slice(j * n, (j + 1) * n)
        C[rows, (j + 1) * n:(j + 2) * n] = w.E
        C[rows, ix] = -w.A
        C[rows, iu] = -w.B

    start, end = slice(N * n, (N + 1) * n), slice((N + 1) * n, (N + 2) * n)
    C[start, :n] = w.E
    d[start] = w.E @ x0
    C[end, N * n:(N + 1) * n] = w.E
    return H, C, d


def _kkt_solve(K: np.ndarray, rhs: np.ndarray, steps: int) -> np.ndarray:
    """Hermitian-indefinite solve with refinement; minimum-norm lstsq when singular."""
    def solve(b):
        with warnings.catch_warnings():
            warnings.simplefilter('error', la.LinAlgWarning)
            try:
                return la.solve(K, b, assume_a='her')
            except (la.LinAlgError, la.LinAlgWarning):
                return la.lstsq(K, b)[0]

    s = solve(rhs)
    for _ in range(steps):
        s = s + solve(rhs - K @ s)
    return s


def finite_horizon_oracle(w: WeightedSystem, x0: Sequence[complex], N: int,
                          tol: Optional[Tolerances] = None) -> Dict[str, Any]:
    """
    Minimum of sum_{j<N} stage costs subject to the dynamics, E x_0 = E x0 and E x_N = 0.

    Returns:
        Dict with J_N_min, the minimizing trajectory (u_N padded with zeros)
        and the constraint residual
    """
    tol = tol or Tolerances()
    if N < 1:
        raise InvalidInputError("oracle horizon must be at least 1", {'N': N})
    n, m = w.n, w.m
    x0 = as_matrix(x0, "x0", (n, 1)).ravel()
    H, C, d = _kkt_blocks(w, x0, N)
    nv = H.shape[0]

    # Drop redundant constraint rows; an inconsistent remainder means no feasible trajectory
    U, s, Vh = la.svd(C, full_matrices=True)
    scale = max(spectral_norm(C), 1e-300)
    r = int(np.sum(s > max(C.shape) * np.finfo(float).eps * scale + tol.rank_rtol * scale))
    leftover = float(np.linalg.norm(U[:, r:].conj().T @ d))
    if leftover > tol.residual * (1.0 + np.linalg.norm(d)):
        raise InfeasibleSynthesisError("terminal constraint E x_N = 0 cannot be met",
                                       {'N': N, 'violation': leftover})
    C_r = s[:r, None] * Vh[:r]
    d_r = U[:, :r].conj().T @ d

    # Objective must be bounded below on the constraint set
    free = Vh[r:].conj().T
    if free.size:
        reduced = free.conj().T @ H @ free
        reduced = 0.5 * (reduced + reduced.conj().T)
        low = float(np.linalg.eigvalsh(reduced)[0])
        if low < -tol.residual * max(1.0, spectral_norm(H)):
            raise InfeasibleSynthesisError("objective is unbounded below on the horizon",
                                           {'N': N, 'min_eig': low})

    K = np.block([[H, C_r.conj().T], [C_r, np.zeros((r, r), dtype=complex)]])
    rhs = np.concatenate([np.zeros(nv, dtype=complex), d_r])
    z = _kkt_solve(K, rhs, tol.refinement_steps)[:nv]

    violation = float(np.linalg.norm(C @ z - d)) / ((1.0 + spectral_norm(C)) * max(1.0, np.linalg.norm(z)))
    if violation > tol.residual:
        raise NumericalFailureError("KKT solution violates the constraints", {'N': N, 'residual': violation})

    nx = (N + 1) * n
    x = z[:nx].reshape(N + 1, n)
    u = np.vstack([z[nx:].reshape(N, m), np.zeros((1, m), dtype=complex)])
    J = _quadratic(z, H)
    debug_print(f"   oracle N={N}: J={J:.12g}")
    return {'J_N_min': J, 'trajectory': Trajectory(x=x, u=u), 'N': N, 'constraint_residual': violation}


def oracle_ladder(w: WeightedSystem, x0: Sequence[complex], horizons: Sequence[int],
                  tol: Optional[Tolerances] = None) -> List[Dict[str, Any]]:
    """J_N for a list of horizons."""
    tol = tol or Tolerances()
    debug_mode = get_output_manager().debug_mode
    rows = []
    for N in tqdm(list(horizons), desc="oracle", disable=not debug_mode):
        result = finite_horizon_oracle(w, x0, int(N), tol)
        rows.append({'N': int(N), 'J_N': result['J_N_min']})
    return rows


# ---------------------------------------------------------------------------
# Feasibility

def feasibility(w: WeightedSystem, tol: Optional[Tolerances] = None) -> Dict[str, Any]:
    """Feasible iff a stabilizing Lur'e solution exists; Popov negativity short-circuits."""
    tol = tol or Tolerances()
    modes = unit_circle_uncontrollable_modes(w, tol)
    if modes:
        raise UnsupportedStructureError("uncontrollable modes on the unit circle",
                                        {'modes': [complex(lam) for lam in modes]})

    existence = kyp_existence_report(w, tol)
    if not existence['popov_nonnegative']:
        return {'feasible': False, 'X': None, 'solution': None, 'reason': existence['status']}

    try:
        sol = lure_solve(w, tol=tol)
    except NumericalFailureError as e:
        return {'feasible': False, 'X': None, 'solution': None, 'reason': e.message}

    feasible = sol.certificate is not None and sol.certificate.passed(tol)
    return {
        'feasible': feasible,
        'X': sol.X if feasible else None,
        'solution': sol,
        'reason': 'stabilizing solution found' if feasible else 'solution is not stabilizing',
    }
