"""
Palindromic and BVD pencils of a weighted system, inertia along the unit
circle and the census of unit-circle structure.

    Acal = [[0, A, B], [E^*, Q, S], [0, S^*, R]]      z Acal^* - Acal
    Ecal = [[0, E, 0], [A^*, 0, 0], [B^*, 0, 0]]      z Ecal - Acal

Inertia at omega is read from the Hermitian matrix
M(omega) = i e^{-i omega/2} Acal + (i e^{-i omega/2} Acal)^*.
"""

from dataclasses import dataclass, field
from typing import Dict, Any, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from tqdm import tqdm

from config_loader import Tolerances
from pencils.pencil_core import (
    MatrixPencil, as_matrix, spectral_norm, numerical_rank, generalized_spectrum, on_unit_circle,
)
from systems.system_forms import WeightedSystem, hermitian_part
from analysis.popov_kyp import popov_eval
from utils.errors import InvalidInputError, NumericalFailureError
from utils.output_manager import debug_print, get_output_manager


TWO_PI = 2.0 * np.pi


@dataclass(frozen=True)
class InertiaTriple:
    n_plus: int
    n_zero: int
    n_minus: int

    @property
    def signature(self) -> int:
        return self.n_plus - self.n_minus

    @property
    def size(self) -> int:
        return self.n_plus + self.n_zero + self.n_minus

    def as_tuple(self) -> Tuple[int, int, int]:
        return self.n_plus, self.n_zero, self.n_minus

    def __add__(self, other: 'InertiaTriple') -> 'InertiaTriple':
        return InertiaTriple(self.n_plus + other.n_plus, self.n_zero + other.n_zero,
                             self.n_minus + other.n_minus)


@dataclass
class PalindromicPencil:
    Acal: np.ndarray
    n: int
    m: int

    @property
    def pencil(self) -> MatrixPencil:
        """z Acal^* - Acal."""
        return MatrixPencil(self.Acal.conj().T, self.Acal)

    @property
    def size(self) -> int:
        return self.Acal.shape[0]


@dataclass
class BvdPencil:
    Ecal: np.ndarray
    Acal: np.ndarray
    n: int
    m: int

    @property
    def pencil(self) -> MatrixPencil:
        return MatrixPencil(self.Ecal, self.Acal)


@dataclass
class PkcfCensus:
    """Unit-circle bookkeeping of a palindromic pencil."""
    q: int
    p5_count: int
    angles: List[float]
    net_signature: Dict[float, float]
    zero_jump_angles: List[float]
    off_circle_pairs: List[Tuple[complex, complex]]
    unpaired: List[complex]
    signature_at_one: float
    has_p3_p4: bool
    positivity_certified: bool

    def to_dict(self) -> Dict[str, Any]:
        return {
            'q': self.q,
            'p5_count': self.p5_count,
            'unit_circle_angles': self.angles,
            'net_p2_signature': {f"{theta:.10f}": value for theta, value in self.net_signature.items()},
            'zero_jump_angles': self.zero_jump_angles,
            'off_circle_pairs': [[_json_number(a), _json_number(b)] for a, b in self.off_circle_pairs],
            'signature_at_one': self.signature_at_one,
            'p3_p4_present': self.has_p3_p4,
            'positivity_certified': self.positivity_certified,
        }


def _json_number(value: complex):
    if np.isinf(value):
        return "inf"
    if abs(value.imag) <= 1e-14 * max(1.0, abs(value)):
        return float(value.real)
    return [float(value.real), float(value.imag)]


def _acal(w: WeightedSystem) -> np.ndarray:
    n, m = w.n, w.m
    Z = np.zeros
    return np.block([
        [Z((n, n)), w.A, w.B],
        [w.E.conj().T, w.Q, w.S],
        [Z((m, n)), w.S.conj().T, w.R],
    ]).astype(complex)


def build_palindromic(w: WeightedSystem) -> PalindromicPencil:
    return PalindromicPencil(Acal=_acal(w), n=w.n, m=w.m)


def build_bvd(w: WeightedSystem) -> BvdPencil:
    n, m = w.n, w.m
    Z = np.zeros
    Ecal = np.block([
        [Z((n, n)), w.E, Z((n, m))],
        [w.A.conj().T, Z((n, n)), Z((n, m))],
        [w.B.conj().T, Z((m, n)), Z((m, m))],
    ]).astype(complex)
    return BvdPencil(Ecal=Ecal, Acal=_acal(w), n=n, m=m)


def quasi_hermitian_check(Mtx: np.ndarray, phi: float, tol: Optional[Tolerances] = None) -> Tuple[bool, float]:
    """Whether e^{-i phi} Mtx is Hermitian; returns (flag, relative defect)."""
    tol = tol or Tolerances()
    H = np.exp(-1j * phi) * as_matrix(Mtx, "Mtx")
    defect = spectral_norm(H - H.conj().T) / max(1.0, spectral_norm(H))
    return defect <= tol.hermitian, defect


def inertia_along(Mtx: np.ndarray, phi: float, tol: Optional[Tolerances] = None) -> InertiaTriple:
    """Inertia of the quasi-Hermitian matrix Mtx along the line of angle phi."""
    tol = tol or Tolerances()
    Mtx = as_matrix(Mtx, "Mtx")
    if Mtx.shape[0] != Mtx.shape[1]:
        raise InvalidInputError("inertia needs a square matrix", {'shape': Mtx.shape})
    ok, defect = quasi_hermitian_check(Mtx, phi, tol)
    if not ok:
        raise InvalidInputError("matrix is not quasi-Hermitian along the given angle",
                                {'phi': phi, 'defect': defect})
    H = hermitian_part(np.exp(-1j * phi) * Mtx)
    if H.size == 0:
        return InertiaTriple(0, 0, 0)
    eigs = np.linalg.eigvalsh(H)
    cut = tol.zero_eig * max(1.0, float(np.max(np.abs(eigs))))
    return InertiaTriple(int(np.sum(eigs > cut)), int(np.sum(np.abs(eigs) <= cut)),
                         int(np.sum(eigs < -cut)))


def hermitian_at_omega(p: PalindromicPencil, omega: float) -> np.ndarray:
    """M(omega), Hermitian by construction."""
    X = 1j * np.exp(-0.5j * omega) * p.Acal
    return X + X.conj().T


def inertia_at_omega(p: PalindromicPencil, omega: float, tol: Optional[Tolerances] = None) -> InertiaTriple:
    return inertia_along(hermitian_at_omega(p, omega), 0.0, tol)


def _unit_circle_angles(p: PalindromicPencil, tol: Tolerances) -> List[float]:
    eigs = generalized_spectrum(p.pencil, tol).finite_eigenvalues
    angles: List[float] = []
    for lam in eigs[on_unit_circle(eigs, tol, p.pencil.norm)]:
        theta = float(np.mod(np.angle(lam), TWO_PI))
        if theta < 1e-7 or theta > TWO_PI - 1e-7:
            theta = 0.0
        if all(abs(theta - a) > 1e-7 for a in angles):
            angles.append(theta)
    return sorted(angles)


def _event_delta(theta: float, angles: List[float], tol: Tolerances) -> float:
    gaps = [TWO_PI]
    for other in angles:
        if other == theta:
            continue
        d = abs(theta - other)
        gaps.append(min(d, TWO_PI - d))
    return min(tol.jump_delta_max, 0.5 * min(gaps))


def event_angles(p: PalindromicPencil, tol: Optional[Tolerances] = None) -> List[float]:
    """Unit-circle eigenvalue angles together with their two-sided offsets."""
    tol = tol or Tolerances()
    angles = _unit_circle_angles(p, tol)
    events = []
    for theta in angles:
        delta = _event_delta(theta, angles, tol)
        events.extend([theta - delta, theta, theta + delta])
    return [float(np.mod(e, TWO_PI)) for e in events]


def inertia_sweep(p: PalindromicPencil, grid: Optional[Sequence[float]] = None,
                  tol: Optional[Tolerances] = None) -> List[Tuple[float, InertiaTriple]]:
    """Inertia on grid plus event angles, sorted by omega."""
    tol = tol or Tolerances()
    if grid is None:
        grid = np.linspace(0.0, TWO_PI, tol.unit_circle_grid, endpoint=False)
    omegas = sorted(set(float(np.mod(g, TWO_PI)) for g in grid) | set(event_angles(p, tol)))

    quiet = not get_output_manager().debug_mode
    sweep = []
    for omega in tqdm(omegas, desc="inertia sweep", disable=quiet):
        sweep.append((omega, inertia_at_omega(p, omega, tol)))
    debug_print(f"   inertia sweep: {len(sweep)} points")
    return sweep


def sweep_to_frame(sweep: List[Tuple[float, InertiaTriple]]) -> pd.DataFrame:
    rows = [{'omega': omega, 'n_plus': t.n_plus, 'n_zero': t.n_zero, 'n_minus': t.n_minus}
            for omega, t in sweep]
    return pd.DataFrame(rows, columns=['omega', 'n_plus', 'n_zero', 'n_minus'])


def _pair_off_circle(eigs: np.ndarray, infinite: int, tol: Tolerances
                     ) -> Tuple[List[Tuple[complex, complex]], List[complex]]:
    """Group off-circle eigenvalues into {lam, 1/conj(lam)}; zeros pair with infinity."""
    inside = [complex(l) for l in eigs if abs(l) < 1.0]
    outside = [complex(l) for l in eigs if abs(l) > 1.0]
    pairs: List[Tuple[complex, complex]] = []
    unpaired: List[complex] = []
    zero_cut = max(tol.zero_eig, 1e-8)

    for lam in sorted(inside, key=abs):
        if abs(lam) <= zero_cut and infinite > 0:
            pairs.append((lam, complex(np.inf)))
            infinite -= 1
            continue
        if abs(lam) <= zero_cut:
            unpaired.append(lam)
            continue
        mirror = 1.0 / np.conj(lam)
        if outside:
            k = int(np.argmin([abs(mu - mirror) for mu in outside]))
            if abs(outside[k] - mirror) <= 1e-6 * (1.0 + abs(mirror)):
                pairs.append((lam, outside.pop(k)))
                continue
        unpaired.append(lam)

    unpaired.extend(outside)
    unpaired.extend([complex(np.inf)] * infinite)
    return pairs, unpaired


def pkcf_census(p: PalindromicPencil, q: int, tol: Optional[Tolerances] = None) -> PkcfCensus:
    """
    Census of the unit-circle structure and the Popov positivity test.

    Args:
        p: Palindromic pencil of a weighted system
        q: Normal rank of the Popov function
        tol: Numerical tolerances

    Returns:
        PkcfCensus; positivity is certified when no unit-circle angle other
        than 0 carries a net signature jump and the signature at 1 equals q
    """
    tol = tol or Tolerances()
    spec = generalized_spectrum(p.pencil, tol)
    p5 = p.size - spec.normal_rank

    eigs = spec.finite_eigenvalues
    circle = on_unit_circle(eigs, tol, p.pencil.norm)
    pairs, unpaired = _pair_off_circle(eigs[~circle], spec.infinite_multiplicity, tol)
    angles = _unit_circle_angles(p, tol)

    net: Dict[float, float] = {}
    zero_jump: List[float] = []
    for theta in angles:
        if theta == 0.0:
            continue
        delta = _event_delta(theta, angles, tol)
        jump = (inertia_at_omega(p, theta + delta, tol).signature
                - inertia_at_omega(p, theta - delta, tol).signature)
        if jump % 2:
            raise NumericalFailureError("signature jump across a unit-circle eigenvalue is odd",
                                        {'theta': theta, 'jump': jump,
                                         'hint': 'decrease jump_delta_max or adjust --tol-circle'})
        net[theta] = jump / 2.0
        if jump == 0:
            zero_jump.append(theta)

    delta0 = _event_delta(0.0, angles, tol)
    after = inertia_at_omega(p, delta0, tol).signature
    before = inertia_at_omega(p, TWO_PI - delta0, tol).signature
    signature_at_one = 0.5 * (after + before)
    if 0.0 in angles:
        net[0.0] = signature_at_one

    certified = all(v == 0 for theta, v in net.items() if theta != 0.0) and signature_at_one == q
    debug_print(f"   census: p5={p5}, angles={len(angles)}, s(1)={signature_at_one}, q={q}, "
                f"certified={certified}")

    return PkcfCensus(
        q=q, p5_count=p5, angles=angles, net_signature=net, zero_jump_angles=zero_jump,
        off_circle_pairs=pairs, unpaired=unpaired, signature_at_one=signature_at_one,
        has_p3_p4=bool(zero_jump), positivity_certified=bool(certified),
    )


def popov_inertia_identity(w: WeightedSystem, omega: float, tol: Optional[Tolerances] = None) -> Dict[str, Any]:
    """In(M(omega)) against (n, 0, n) + In(Phi(e^{i omega}))."""
    tol = tol or Tolerances()
    sample = popov_eval(w, omega, tol)
    if not sample.defined:
        return {'defined': False}
    pencil_side = inertia_at_omega(build_palindromic(w), omega, tol)
    popov_side = InertiaTriple(w.n, 0, w.n) + inertia_along(sample.value, 0.0, tol)
    return {
        'defined': True,
        'pencil': pencil_side.as_tuple(),
        'popov': popov_side.as_tuple(),
        'match': pencil_side == popov_side,
    }


def bookkeeping_rank_check(w: WeightedSystem, tol: Optional[Tolerances] = None) -> Dict[str, Any]:
    """rk(Acal^* - Acal) = 2 rk [E - A, B]."""
    tol = tol or Tolerances()
    Acal = _acal(w)
    lhs = numerical_rank(Acal.conj().T - Acal, tol)
    rhs = 2 * numerical_rank(np.hstack([w.E - w.A, w.B]), tol)
    return {'rank_difference': lhs, 'twice_rank_E_minus_A_B': rhs, 'ok': lhs == rhs}
