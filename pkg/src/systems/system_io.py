"""
JSON interchange for weighted systems and Lur'e solutions.

Matrices are nested lists; a complex entry is written as [re, im] and a
real entry as a plain number. Real files are promoted to complex
internally.
"""

import json
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

import numpy as np
from pydantic import BaseModel, Field, ValidationError, field_validator, model_validator

from systems.system_forms import WeightedSystem
from utils.errors import InvalidInputError, NumericalFailureError
from utils.output_manager import debug_print


Entry = Union[float, int, List[float]]
MatrixData = List[List[Entry]]

HERMITIAN_WARN = 1e-8


def decode_matrix(data: Any, name: str = "matrix") -> np.ndarray:
    """Nested lists with [re, im] pairs -> complex ndarray."""
    if data is None:
        raise InvalidInputError(f"{name} is missing")
    rows = []
    for row in data:
        if not isinstance(row, (list, tuple)):
            raise InvalidInputError(f"{name} must be a list of rows")
        values = []
        for entry in row:
            if isinstance(entry, (list, tuple)):
                if len(entry) != 2:
                    raise InvalidInputError(f"{name}: complex entries must be [re, im] pairs",
                                            {'entry': entry})
                values.append(complex(float(entry[0]), float(entry[1])))
            else:
                values.append(complex(float(entry)))
        rows.append(values)
    widths = {len(r) for r in rows}
    if len(widths) > 1:
        raise InvalidInputError(f"{name} has ragged rows", {'widths': sorted(widths)})
    width = widths.pop() if widths else 0
    return np.array(rows, dtype=complex).reshape(len(rows), width)


def encode_matrix(M: np.ndarray, force_complex: bool = False) -> MatrixData:
    """Inverse of decode_matrix; real entries stay plain numbers unless forced."""
    M = np.atleast_2d(np.asarray(M, dtype=complex))
    real = not force_complex and not np.any(M.imag != 0)
    out = []
    for row in M:
        if real:
            out.append([float(v.real) for v in row])
        else:
            out.append([[float(v.real), float(v.imag)] for v in row])
    return out


def _check_shape(M: np.ndarray, rows: int, cols: int, name: str):
    if M.size == 0 and (rows == 0 or cols == 0):
        return
    if M.shape != (rows, cols):
        raise ValueError(f"{name} must be {rows}x{cols}, got {M.shape[0]}x{M.shape[1]}")


class SystemFile(BaseModel):
    """On-disk weighted descriptor system."""
    n: int = Field(ge=0)
    m: int = Field(ge=0)
    field: str = "real"
    E: MatrixData
    A: MatrixData
    B: MatrixData
    Q: Optional[MatrixData] = None
    S: Optional[MatrixData] = None
    R: Optional[MatrixData] = None
    name: Optional[str] = None

    @field_validator('field')
    @classmethod
    def _known_field(cls, value: str) -> str:
        if value not in ('real', 'complex'):
            raise ValueError("field must be 'real' or 'complex'")
        return value

    @model_validator(mode='after')
    def _dimensions(self) -> 'SystemFile':
        n, m = self.n, self.m
        _check_shape(decode_matrix(self.E, "E"), n, n, "E")
        _check_shape(decode_matrix(self.A, "A"), n, n, "A")
        _check_shape(decode_matrix(self.B, "B"), n, m, "B")
        if self.Q is not None:
            _check_shape(decode_matrix(self.Q, "Q"), n, n, "Q")
        if self.S is not None:
            _check_shape(decode_matrix(self.S, "S"), n, m, "S")
        if self.R is not None:
            _check_shape(decode_matrix(self.R, "R"), m, m, "R")
        return self

    def matrices(self) -> Dict[str, np.ndarray]:
        n, m = self.n, self.m
        out = {
            'E': decode_matrix(self.E, "E").reshape(n, n),
            'A': decode_matrix(self.A, "A").reshape(n, n),
            'B': decode_matrix(self.B, "B").reshape(n, m),
            'Q': decode_matrix(self.Q, "Q").reshape(n, n) if self.Q is not None else np.zeros((n, n), complex),
            'S': decode_matrix(self.S, "S").reshape(n, m) if self.S is not None else np.zeros((n, m), complex),
            'R': decode_matrix(self.R, "R").reshape(m, m) if self.R is not None else np.zeros((m, m), complex),
        }
        for key in ('Q', 'R'):
            M = out[key]
            asym = float(np.max(np.abs(M - M.conj().T))) if M.size else 0.0
            if asym > HERMITIAN_WARN:
                debug_print(f"⚠️  {key} is not Hermitian (asymmetry {asym:.3e}); symmetrizing")
        return out

    def to_system(self, check_regular: bool = True) -> WeightedSystem:
        mats = self.matrices()
        return WeightedSystem.from_matrices(mats['E'], mats['A'], mats['B'],
                                            mats['Q'], mats['S'], mats['R'],
                                            check_regular=check_regular)

    @classmethod
    def from_system(cls, w: WeightedSystem, name: Optional[str] = None) -> 'SystemFile':
        field_name = w.sys.field
        imag = max(float(np.abs(M.imag).max()) if M.size else 0.0 for M in (w.Q, w.S, w.R))
        if imag > 0:
            field_name = 'complex'
        return cls(n=w.n, m=w.m, field=field_name, name=name,
                   E=encode_matrix(w.E), A=encode_matrix(w.A), B=encode_matrix(w.B),
                   Q=encode_matrix(w.Q), S=encode_matrix(w.S), R=encode_matrix(w.R))


class SolutionFile(BaseModel):
    """On-disk Lur'e solution with its certificate."""
    X: MatrixData
    K: MatrixData
    L: MatrixData
    q: int = Field(ge=0)
    certificate: Optional[Dict[str, Any]] = None

    @model_validator(mode='after')
    def _dimensions(self) -> 'SolutionFile':
        X = decode_matrix(self.X, "X")
        if X.shape[0] != X.shape[1]:
            raise ValueError("X must be square")
        n = X.shape[0]
        K = decode_matrix(self.K, "K")
        L = decode_matrix(self.L, "L")
        if self.q and (K.shape[0] != self.q or L.shape[0] != self.q):
            raise ValueError(f"K and L must have q={self.q} rows")
        if self.q and n and K.shape[1] != n:
            raise ValueError(f"K must have n={n} columns")
        return self

    def arrays(self, n: int, m: int) -> Dict[str, np.ndarray]:
        q = self.q
        return {
            'X': decode_matrix(self.X, "X").reshape(n, n),
            'K': decode_matrix(self.K, "K").reshape(q, n) if q else np.zeros((0, n), complex),
            'L': decode_matrix(self.L, "L").reshape(q, m) if q else np.zeros((0, m), complex),
        }


def _read_json(path: Union[str, Path]) -> Any:
    try:
        with open(path, 'r', encoding='utf-8') as handle:
            return json.load(handle)
    except FileNotFoundError:
        raise InvalidInputError(f"file not found: {path}")
    except json.JSONDecodeError as e:
        raise InvalidInputError(f"malformed JSON in {path}", {'line': e.lineno, 'column': e.colno})


def parse_system(data: Dict[str, Any], check_regular: bool = True) -> WeightedSystem:
    try:
        spec = SystemFile.model_validate(data)
    except ValidationError as e:
        raise InvalidInputError("invalid system file", {'errors': e.error_count(),
                                                        'first': e.errors()[0]['msg']})
    return spec.to_system(check_regular=check_regular)


def load_system(path: Union[str, Path], check_regular: bool = True) -> WeightedSystem:
    """Read and validate a system file."""
    debug_print(f"📂 Loading system from {path}")
    return parse_system(_read_json(path), check_regular=check_regular)


def load_solution_file(path: Union[str, Path]) -> SolutionFile:
    try:
        return SolutionFile.model_validate(_read_json(path))
    except ValidationError as e:
        raise InvalidInputError("invalid solution file", {'errors': e.error_count(),
                                                          'first': e.errors()[0]['msg']})


def write_json(payload: Dict[str, Any], path: Union[str, Path], indent: int = 2):
    """Write JSON; I/O failures surface as NumericalFailureError (exit 1)."""
    try:
        with open(path, 'w', encoding='utf-8') as handle:
            json.dump(payload, handle, indent=indent)
    except OSError as e:
        raise NumericalFailureError(f"cannot write {path}", {'reason': e.strerror})


def write_frame(frame, path: Union[str, Path], float_format: str = "%.12g"):
    """pandas DataFrame -> CSV with the same I/O error mapping as write_json."""
    try:
        frame.to_csv(path, index=False, float_format=float_format)
    except OSError as e:
        raise NumericalFailureError(f"cannot write {path}", {'reason': e.strerror})
