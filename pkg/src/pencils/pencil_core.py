"""
Dense matrix-pencil algebra.

A pencil zE - A is stored as the pair (E, A) of complex matrices. Rank
decisions go through the SVD; singular structure is isolated with a
staircase of alternating column/row compressions.
"""

from dataclasses import dataclass, field
from typing import Dict, Any, List, Optional, Tuple

import numpy as np
import scipy.linalg as la

from config_loader import Tolerances
from utils.errors import InvalidInputError, NumericalFailureError
from utils.output_manager import debug_print


EPS = np.finfo(float).eps


def as_matrix(M: Any, name: str = "matrix", shape: Optional[Tuple[int, int]] = None) -> np.ndarray:
    """Promote input to a finite 2-D complex array, optionally checking its shape."""
    arr = np.asarray(M, dtype=complex)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    elif arr.ndim == 1:
        arr = arr.reshape(-1, 1) if shape is None or shape[1] == 1 else arr.reshape(1, -1)
    elif arr.ndim != 2:
        raise InvalidInputError(f"{name} must be a matrix", {'ndim': arr.ndim})

    if shape is not None:
        if arr.size == 0 and (shape[0] == 0 or shape[1] == 0):
            arr = np.zeros(shape, dtype=complex)
        elif arr.shape != tuple(shape):
            raise InvalidInputError(f"{name} has wrong dimensions",
                                    {'expected': tuple(shape), 'got': arr.shape})

    if not np.all(np.isfinite(arr)):
        raise InvalidInputError(f"{name} contains NaN or Inf entries")
    return arr


def spectral_norm(M: np.ndarray) -> float:
    if M.size == 0:
        return 0.0
    return float(la.norm(M, 2))


def rank_threshold(singular_values: np.ndarray, shape: Tuple[int, ...],
                   tol: Tolerances, scale: Optional[float] = None) -> float:
    """tau = max(max(rows, cols) * eps * sigma, rank_rtol * sigma) with sigma the scale."""
    sigma = scale if scale is not None else (float(singular_values[0]) if singular_values.size else 0.0)
    eps_factor = tol.rank_eps_factor if tol.rank_eps_factor is not None else max(shape) * EPS
    return max(eps_factor * sigma, tol.rank_rtol * sigma)


def _decide_rank(singular_values: np.ndarray, shape: Tuple[int, ...], tol: Tolerances,
                 scale: Optional[float] = None, strict: bool = False) -> int:
    tau = rank_threshold(singular_values, shape, tol, scale)
    if strict and tau > 0:
        band = (singular_values > tau) & (singular_values <= tol.ambiguity_band * tau)
        if np.any(band):
            raise NumericalFailureError(
                "rank decision unstable at tolerance boundary",
                {'singular_value': float(singular_values[band][-1]), 'threshold': tau,
                 'hint': 'adjust --tol-rank'})
    return int(np.sum(singular_values > tau))


def numerical_rank(M: Any, tol: Optional[Tolerances] = None, scale: Optional[float] = None,
                   strict: bool = False) -> int:
    """SVD rank with the configured threshold."""
    tol = tol or Tolerances()
    M = np.asarray(M, dtype=complex)
    if M.size == 0:
        return 0
    s = la.svd(M, compute_uv=False)
    return _decide_rank(s, M.shape, tol, scale, strict)


def null_space(M: Any, tol: Optional[Tolerances] = None, scale: Optional[float] = None) -> np.ndarray:
    """Orthonormal basis of the right kernel."""
    tol = tol or Tolerances()
    M = np.asarray(M, dtype=complex)
    rows, cols = M.shape
    if cols == 0:
        return np.zeros((0, 0), dtype=complex)
    if rows == 0:
        return np.eye(cols, dtype=complex)
    _, s, Vh = la.svd(M, full_matrices=True)
    r = _decide_rank(s, M.shape, tol, scale)
    return Vh[r:].conj().T


def range_basis(M: Any, tol: Optional[Tolerances] = None, scale: Optional[float] = None) -> np.ndarray:
    """Orthonormal basis of the column space."""
    tol = tol or Tolerances()
    M = np.asarray(M, dtype=complex)
    if M.size == 0:
        return np.zeros((M.shape[0], 0), dtype=complex)
    U, s, _ = la.svd(M, full_matrices=False)
    r = _decide_rank(s, M.shape, tol, scale)
    return U[:, :r]


def subspace_contained(V: np.ndarray, W: np.ndarray, scale: float = 1.0) -> float:
    """Distance of the columns of V from im W (0 when im V is inside im W)."""
    if V.size == 0:
        return 0.0
    if W.size == 0:
        return spectral_norm(V) / max(scale, 1.0)
    Wo = la.orth(W)
    return spectral_norm(V - Wo @ (Wo.conj().T @ V)) / max(scale, 1.0)


@dataclass(frozen=True)
class MatrixPencil:
    """The pencil zE - A."""
    E: np.ndarray
    A: np.ndarray

    def __post_init__(self):
        E = as_matrix(self.E, "E")
        A = as_matrix(self.A, "A")
        if E.shape != A.shape:
            raise InvalidInputError("E and A must have identical dimensions",
                                    {'E': E.shape, 'A': A.shape})
        object.__setattr__(self, 'E', E)
        object.__setattr__(self, 'A', A)

    @property
    def shape(self) -> Tuple[int, int]:
        return self.E.shape

    @property
    def is_square(self) -> bool:
        return self.E.shape[0] == self.E.shape[1]

    @property
    def norm(self) -> float:
        return spectral_norm(np.hstack([self.E, self.A]))

    def at(self, lam: complex) -> np.ndarray:
        """Evaluate lam*E - A."""
        return lam * self.E - self.A

    def adjoint(self) -> 'MatrixPencil':
        return MatrixPencil(self.E.conj().T, self.A.conj().T)


@dataclass
class SingularStructure:
    """Minimal indices of the K3 (right/column) and K4 (left/row) blocks."""
    right_indices: List[int] = field(default_factory=list)
    left_indices: List[int] = field(default_factory=list)
    right_steps: List[Tuple[int, int]] = field(default_factory=list)
    left_steps: List[Tuple[int, int]] = field(default_factory=list)

    @property
    def is_empty(self) -> bool:
        return not self.right_indices and not self.left_indices

    def to_dict(self) -> Dict[str, Any]:
        return {
            'k3_blocks': len(self.right_indices),
            'k3_sizes': list(self.right_indices),
            'k4_blocks': len(self.left_indices),
            'k4_sizes': list(self.left_indices),
        }


@dataclass
class StaircaseResult:
    """U^H (zE - A) V is block upper triangular: [right chains | regular | left chains]."""
    U: np.ndarray
    V: np.ndarray
    regular_part: MatrixPencil
    structure: SingularStructure
    row_blocks: Tuple[int, int, int]
    col_blocks: Tuple[int, int, int]
    reconstruction_residual: float

    @property
    def transforms(self) -> Tuple[np.ndarray, np.ndarray]:
        return self.U, self.V

    @property
    def regular_rows(self) -> slice:
        return slice(self.row_blocks[0], self.row_blocks[0] + self.row_blocks[1])

    @property
    def regular_cols(self) -> slice:
        return slice(self.col_blocks[0], self.col_blocks[0] + self.col_blocks[1])


@dataclass
class GeneralizedSpectrum:
    finite_eigenvalues: np.ndarray
    infinite_multiplicity: int
    normal_rank: int
    index: int
    structure: SingularStructure
    regular_part: MatrixPencil

    @property
    def is_regular(self) -> bool:
        return self.structure.is_empty

    def to_dict(self) -> Dict[str, Any]:
        return {
            'finite_eigenvalues': self.finite_eigenvalues,
            'infinite_multiplicity': self.infinite_multiplicity,
            'normal_rank': self.normal_rank,
            'index': self.index,
            **self.structure.to_dict(),
        }


def _column_chains(E1: np.ndarray, A1: np.ndarray, U: np.ndarray, V: np.ndarray,
                   row0: int, col0: int, tol: Tolerances, scale: float
                   ) -> Tuple[List[Tuple[int, int]], int, int]:
    """
    Peel off kernel chains of E1 in place.

    Each step compresses the columns of the trailing E1 block onto its kernel
    (s columns) and the rows of the matching A1 columns onto their range
    (r rows), then deflates. Returns the (s, r) steps and the new corner.
    """
    rows, cols = E1.shape
    steps: List[Tuple[int, int]] = []

    while col0 < cols:
        Eb = E1[row0:, col0:]
        ncols = cols - col0
        if Eb.shape[0] == 0:
            rank_e = 0
            Vb = np.eye(ncols, dtype=complex)
        else:
            _, s, Vh = la.svd(Eb, full_matrices=True)
            rank_e = _decide_rank(s, Eb.shape, tol, scale, strict=True)
            Z = Vh.conj().T
            Vb = np.hstack([Z[:, rank_e:], Z[:, :rank_e]])

        s_k = ncols - rank_e
        if s_k == 0:
            break

        E1[:, col0:] = E1[:, col0:] @ Vb
        A1[:, col0:] = A1[:, col0:] @ Vb
        V[:, col0:] = V[:, col0:] @ Vb

        Ab = A1[row0:, col0:col0 + s_k]
        if Ab.shape[0] == 0:
            r_k = 0
        else:
            Ua, sa, _ = la.svd(Ab, full_matrices=True)
            r_k = _decide_rank(sa, Ab.shape, tol, scale, strict=True)
            E1[row0:, :] = Ua.conj().T @ E1[row0:, :]
            A1[row0:, :] = Ua.conj().T @ A1[row0:, :]
            U[:, row0:] = U[:, row0:] @ Ua

        if steps and s_k > steps[-1][1]:
            raise NumericalFailureError(
                "staircase chain lengths inconsistent",
                {'step': len(steps), 'kernel_dim': s_k, 'previous_rank': steps[-1][1]})

        steps.append((s_k, r_k))
        row0 += r_k
        col0 += s_k

    return steps, row0, col0


def _indices_from_steps(steps: List[Tuple[int, int]]) -> List[int]:
    indices: List[int] = []
    for i, (s_k, r_k) in enumerate(steps):
        indices.extend([i] * (s_k - r_k))
    return indices


def _mobius_shift(tol: Tolerances) -> complex:
    rng = np.random.default_rng(tol.seed)
    radius = rng.uniform(0.3, 0.7)
    theta = rng.uniform(0.0, 2.0 * np.pi)
    return complex(radius * np.exp(1j * theta))


def staircase_reduce(p: MatrixPencil, tol: Optional[Tolerances] = None) -> StaircaseResult:
    """
    Isolate the right and left singular chains of p.

    The column compressions act on E - gamma*A for a random gamma, which
    leaves the minimal indices unchanged but makes the regular part's
    leading matrix invertible, so only K3 chains show up on the column side.
    The left chains come from the same procedure on the adjoint remainder.
    """
    tol = tol or Tolerances()
    rows, cols = p.shape
    scale = max(p.norm, 1e-300)

    gamma = _mobius_shift(tol)
    E1 = p.E - gamma * p.A
    A1 = p.A.copy()
    U = np.eye(rows, dtype=complex)
    V = np.eye(cols, dtype=complex)
    mob_scale = max(spectral_norm(np.hstack([E1, A1])), 1e-300)

    right_steps, rr, cr = _column_chains(E1, A1, U, V, 0, 0, tol, mob_scale)
    debug_print(f"   staircase: right chain steps {right_steps}")

    # Left chains: same procedure on the adjoint of the trailing block.
    Et = E1[rr:, cr:].conj().T.copy()
    At = A1[rr:, cr:].conj().T.copy()
    Ut = np.eye(cols - cr, dtype=complex)
    Vt = np.eye(rows - rr, dtype=complex)
    left_steps, lr, ls = _column_chains(Et, At, Ut, Vt, 0, 0, tol, mob_scale)
    debug_print(f"   staircase: left chain steps {left_steps}")

    J_rows = np.eye(rows - rr, dtype=complex)[::-1]
    J_cols = np.eye(cols - cr, dtype=complex)[::-1]
    row_map = Vt @ J_rows
    col_map = Ut @ J_cols
    U[:, rr:] = U[:, rr:] @ row_map
    V[:, cr:] = V[:, cr:] @ col_map

    reg_rows = rows - rr - ls
    reg_cols = cols - cr - lr
    if reg_rows != reg_cols:
        raise NumericalFailureError("staircase produced a non-square regular part",
                                    {'rows': reg_rows, 'cols': reg_cols})

    Ef = U.conj().T @ p.E @ V
    Af = U.conj().T @ p.A @ V
    row_cuts = [0, rr, rr + reg_rows, rows]
    col_cuts = [0, cr, cr + reg_cols, cols]
    lower = 0.0
    for bi in range(3):
        for bj in range(bi):
            for M in (Ef, Af):
                block = M[row_cuts[bi]:row_cuts[bi + 1], col_cuts[bj]:col_cuts[bj + 1]]
                lower = max(lower, spectral_norm(block))
    residual = lower / max(scale, 1.0)

    regular = MatrixPencil(Ef[rr:rr + reg_rows, cr:cr + reg_cols],
                           Af[rr:rr + reg_rows, cr:cr + reg_cols])

    structure = SingularStructure(
        right_indices=_indices_from_steps(right_steps),
        left_indices=_indices_from_steps(left_steps),
        right_steps=right_steps,
        left_steps=left_steps,
    )

    return StaircaseResult(
        U=U, V=V,
        regular_part=regular,
        structure=structure,
        row_blocks=(rr, reg_rows, ls),
        col_blocks=(cr, reg_cols, lr),
        reconstruction_residual=residual,
    )


def minimal_indices(p: MatrixPencil, tol: Optional[Tolerances] = None) -> Dict[str, List[int]]:
    """Column (K3) and row (K4) minimal indices."""
    structure = staircase_reduce(p, tol).structure
    return {'column': list(structure.right_indices), 'row': list(structure.left_indices)}


def _infinite_structure(regular: MatrixPencil, tol: Tolerances, scale: float
                        ) -> Tuple[List[Tuple[int, int]], MatrixPencil]:
    """Chains of ker E in a regular pencil: Jordan structure at infinity and the finite remainder."""
    E1 = regular.E.copy()
    A1 = regular.A.copy()
    n = E1.shape[0]
    U = np.eye(n, dtype=complex)
    V = np.eye(n, dtype=complex)
    steps, r0, c0 = _column_chains(E1, A1, U, V, 0, 0, tol, scale)
    if r0 != c0:
        raise NumericalFailureError("infinite eigenvalue chains do not close",
                                    {'rows': r0, 'cols': c0})
    return steps, MatrixPencil(E1[r0:, c0:], A1[r0:, c0:])


def generalized_spectrum(p: MatrixPencil, tol: Optional[Tolerances] = None) -> GeneralizedSpectrum:
    """Finite eigenvalues, infinite multiplicity, normal rank and index of p."""
    tol = tol or Tolerances()
    reduction = staircase_reduce(p, tol)
    structure = reduction.structure
    regular = reduction.regular_part
    scale = max(p.norm, 1e-300)

    inf_steps, finite_part = _infinite_structure(regular, tol, scale)
    infinite_multiplicity = int(sum(s_k for s_k, _ in inf_steps))

    if finite_part.shape[0] > 0:
        finite = la.eigvals(finite_part.A, finite_part.E)
    else:
        finite = np.zeros(0, dtype=complex)

    cols = p.shape[1]
    normal_rank = cols - len(structure.right_indices)
    index = max([len(inf_steps)] + [k for k in structure.left_indices])

    debug_print(f"   spectrum: {finite.size} finite, {infinite_multiplicity} infinite, "
                f"normal rank {normal_rank}, index {index}")

    return GeneralizedSpectrum(
        finite_eigenvalues=np.sort_complex(finite),
        infinite_multiplicity=infinite_multiplicity,
        normal_rank=normal_rank,
        index=index,
        structure=structure,
        regular_part=regular,
    )


def sample_points(count: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    return rng.normal(size=count) + 1j * rng.normal(size=count)


def is_regular(p: MatrixPencil, tol: Optional[Tolerances] = None) -> bool:
    """Square pencil with det(zE - A) not identically zero."""
    tol = tol or Tolerances()
    if not p.is_square:
        raise InvalidInputError("regularity is only defined for square pencils", {'shape': p.shape})
    n = p.shape[0]
    if n == 0:
        return True

    det_nonzero = False
    for lam in sample_points(5, tol.seed + 1):
        M = p.at(lam)
        if numerical_rank(M, tol) == n:
            det_nonzero = True
            break
    if not det_nonzero:
        return False

    return staircase_reduce(p, tol).structure.is_empty


def normal_rank_sampled(p: MatrixPencil, samples: int = 20, tol: Optional[Tolerances] = None) -> int:
    """Max of rank(lam*E - A) over random lam."""
    tol = tol or Tolerances()
    best = 0
    for lam in sample_points(samples, tol.seed + 2):
        best = max(best, numerical_rank(p.at(lam), tol))
    return best


def on_unit_circle(eigenvalues: np.ndarray, tol: Optional[Tolerances] = None, scale: float = 1.0) -> np.ndarray:
    """Boolean mask of eigenvalues with | |lam| - 1 | below the circle band."""
    tol = tol or Tolerances()
    eigenvalues = np.asarray(eigenvalues, dtype=complex)
    return np.abs(np.abs(eigenvalues) - 1.0) < tol.circle * (1.0 + scale)


def eigenvalues_on_unit_circle(spec: GeneralizedSpectrum, tol: Optional[Tolerances] = None,
                              scale: float = 1.0) -> np.ndarray:
    """Finite eigenvalues of a spectrum that lie on the unit circle; scale is the pencil norm."""
    eigs = spec.finite_eigenvalues
    return eigs[on_unit_circle(eigs, tol, scale)]


def is_e_neutral(Y: np.ndarray, E: np.ndarray, tol: Optional[Tolerances] = None) -> Tuple[bool, float]:
    """Check y1^H E y2 = 0 on im Y; returns (flag, relative residual)."""
    tol = tol or Tolerances()
    Yo = la.orth(Y) if Y.size else Y
    value = spectral_norm(Yo.conj().T @ E @ Yo) / max(1.0, spectral_norm(E))
    return value <= tol.residual, value


@dataclass
class DeflatingSubspace:
    """im Y with (zE - A) Y = Z (z Ehat - Ahat)."""
    Y: np.ndarray
    Z: np.ndarray
    reduced: MatrixPencil

    @property
    def dimension(self) -> int:
        return self.Y.shape[1]


def verify_deflating(p: MatrixPencil, d: DeflatingSubspace, tol: Optional[Tolerances] = None) -> Dict[str, Any]:
    """Residual of the deflating identity at sampled lambda plus rank data."""
    tol = tol or Tolerances()
    rows, cols = p.shape
    if d.Y.shape[0] != cols or d.Z.shape[0] != rows or d.reduced.shape != (d.Z.shape[1], d.Y.shape[1]):
        raise InvalidInputError("deflating subspace shapes do not match the pencil",
                                {'pencil': p.shape, 'Y': d.Y.shape, 'Z': d.Z.shape,
                                 'reduced': d.reduced.shape})

    count = max(5, tol.verify_points)
    residual = 0.0
    for lam in sample_points(count, tol.seed + 3):
        lhs = p.at(lam) @ d.Y
        rhs = d.Z @ d.reduced.at(lam)
        residual = max(residual, spectral_norm(lhs - rhs))
    residual /= (1.0 + p.norm)

    rank_y = numerical_rank(d.Y, tol)
    reduced_rank = normal_rank_sampled(d.reduced, 10, tol) if d.reduced.E.size else 0

    return {
        'residual': residual,
        'rank_Y': rank_y,
        'dimension': d.Y.shape[1],
        'reduced_normal_rank': reduced_rank,
        'reduced_rows': d.reduced.shape[0],
        'ok': (residual <= tol.residual and rank_y == d.Y.shape[1]
               and reduced_rank == d.reduced.shape[0]),
    }
