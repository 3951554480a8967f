"""Dense operator and state algebra on small tensor-product Hilbert spaces.

Composite spaces are ordered (cavity, atom) and basis kets are written
``|photons, atom-level>`` with atomic levels counted from 1.  Everything here
is dense: the largest space in use has dimension 20.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import factorial, prod

import numpy as np
from numpy.typing import ArrayLike, NDArray

HERMITIAN_TOL = 1e-12
NORM_TOL = 1e-10
TRACE_TOL = 1e-9
DENSITY_HERMITIAN_TOL = 1e-10
POSITIVITY_TOL = 1e-8


class SpaceMismatchError(ValueError):
    """Raised when objects living on different Hilbert spaces are combined."""


def _frozen(arr: NDArray) -> NDArray:
    arr = np.array(arr, dtype=complex)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class HilbertSpace:
    """Ordered product of labelled factors, e.g. ``(("cavity", 5), ("atom", 4))``."""

    factors: tuple[tuple[str, int], ...]

    def __post_init__(self):
        factors = tuple((str(label), int(dim)) for label, dim in self.factors)
        if not factors:
            raise ValueError("a Hilbert space needs at least one factor")
        for label, dim in factors:
            if dim < 2:
                raise ValueError(f"factor {label!r} has dimension {dim}; need >= 2")
        object.__setattr__(self, "factors", factors)

    @property
    def dim(self) -> int:
        return prod(d for _, d in self.factors)

    @property
    def dims(self) -> tuple[int, ...]:
        return tuple(d for _, d in self.factors)

    @property
    def labels(self) -> tuple[str, ...]:
        return tuple(label for label, _ in self.factors)

    def __mul__(self, other: HilbertSpace) -> HilbertSpace:
        return HilbertSpace(self.factors + other.factors)

    def index(self, *levels: int) -> int:
        """Flat index of the product basis ket with zero-based factor ``levels``."""
        if len(levels) != len(self.factors):
            raise ValueError(f"expected {len(self.factors)} indices, got {len(levels)}")
        for (label, d), k in zip(self.factors, levels):
            if not 0 <= k < d:
                raise IndexError(f"index {k} out of range for factor {label!r} (dim {d})")
        return int(np.ravel_multi_index(levels, self.dims))


def _check_same(a: HilbertSpace, b: HilbertSpace) -> None:
    if a != b:
        raise SpaceMismatchError(f"space mismatch: {a.factors} vs {b.factors}")


@dataclass(frozen=True, eq=False)
class Operator:
    """Dense linear operator on ``space``.

    ``hermitian=True`` is a checked promise, not a hint: construction fails if
    the matrix deviates from its adjoint by more than ``HERMITIAN_TOL``.
    """

    space: HilbertSpace
    matrix: NDArray[np.complex128]
    hermitian: bool = False

    def __post_init__(self):
        m = _frozen(self.matrix)
        d = self.space.dim
        if m.shape != (d, d):
            raise ValueError(f"matrix shape {m.shape} does not match space dimension {d}")
        if self.hermitian:
            dev = np.max(np.abs(m - m.conj().T)) if d else 0.0
            if dev > HERMITIAN_TOL:
                raise ValueError(f"operator flagged Hermitian deviates by {dev:.3e}")
        object.__setattr__(self, "matrix", m)

    @property
    def dim(self) -> int:
        return self.space.dim

    def dag(self) -> Operator:
        return Operator(self.space, self.matrix.conj().T, self.hermitian)

    def is_hermitian(self, tol: float = HERMITIAN_TOL) -> bool:
        return bool(np.max(np.abs(self.matrix - self.matrix.conj().T)) <= tol)

    def as_hermitian(self) -> Operator:
        """Same matrix, with the Hermitian flag set (and therefore checked)."""
        return Operator(self.space, self.matrix, hermitian=True)

    def _coerce(self, other: Operator) -> NDArray:
        if not isinstance(other, Operator):
            return NotImplemented
        _check_same(self.space, other.space)
        return other.matrix

    def __add__(self, other: Operator) -> Operator:
        m = self._coerce(other)
        if m is NotImplemented:
            return NotImplemented
        return Operator(self.space, self.matrix + m)

    def __sub__(self, other: Operator) -> Operator:
        m = self._coerce(other)
        if m is NotImplemented:
            return NotImplemented
        return Operator(self.space, self.matrix - m)

    def __neg__(self) -> Operator:
        return Operator(self.space, -self.matrix, self.hermitian)

    def __mul__(self, scalar: complex) -> Operator:
        if isinstance(scalar, Operator):
            return NotImplemented
        return Operator(self.space, complex(scalar) * self.matrix)

    __rmul__ = __mul__

    def __truediv__(self, scalar: complex) -> Operator:
        return Operator(self.space, self.matrix / complex(scalar))

    def __matmul__(self, other):
        if isinstance(other, Operator):
            _check_same(self.space, other.space)
            return Operator(self.space, self.matrix @ other.matrix)
        if isinstance(other, StateVector):
            _check_same(self.space, other.space)
            return StateVector(self.space, self.matrix @ other.amplitudes)
        return NotImplemented

    def commutator(self, other: Operator) -> Operator:
        return self @ other - other @ self

    def allclose(self, other: Operator, atol: float = 1e-12) -> bool:
        _check_same(self.space, other.space)
        return bool(np.max(np.abs(self.matrix - other.matrix)) <= atol)


@dataclass(frozen=True, eq=False)
class StateVector:
    """Ket on ``space``.  Normalization is not enforced; see :meth:`check_normalized`."""

    space: HilbertSpace
    amplitudes: NDArray[np.complex128]

    def __post_init__(self):
        v = _frozen(np.ravel(self.amplitudes))
        if v.shape != (self.space.dim,):
            raise ValueError(f"state length {v.shape[0]} does not match dimension {self.space.dim}")
        object.__setattr__(self, "amplitudes", v)

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def normalized(self) -> StateVector:
        n = self.norm()
        if n == 0.0:
            raise ValueError("cannot normalize the zero vector")
        return StateVector(self.space, self.amplitudes / n)

    def check_normalized(self, tol: float = NORM_TOL) -> StateVector:
        if abs(self.norm() - 1.0) > tol:
            raise ValueError(f"state norm {self.norm():.12f} is not 1 within {tol}")
        return self

    def inner(self, other: StateVector) -> complex:
        """``<self|other>``."""
        _check_same(self.space, other.space)
        return complex(np.vdot(self.amplitudes, other.amplitudes))

    def fidelity(self, other: StateVector) -> float:
        """``|<self|other>|^2`` for normalized states."""
        return abs(self.inner(other)) ** 2

    def projector(self) -> DensityMatrix:
        v = self.amplitudes
        return DensityMatrix(self.space, np.outer(v, v.conj()))


@dataclass(frozen=True, eq=False)
class DensityMatrix:
    space: HilbertSpace
    matrix: NDArray[np.complex128]

    def __post_init__(self):
        m = _frozen(self.matrix)
        d = self.space.dim
        if m.shape != (d, d):
            raise ValueError(f"matrix shape {m.shape} does not match space dimension {d}")
        object.__setattr__(self, "matrix", m)

    def trace(self) -> complex:
        return complex(np.trace(self.matrix))

    def purity(self) -> float:
        return float(np.real(np.trace(self.matrix @ self.matrix)))

    def populations(self) -> NDArray[np.float64]:
        return np.real(np.diag(self.matrix)).copy()

    def min_eigenvalue(self) -> float:
        h = 0.5 * (self.matrix + self.matrix.conj().T)
        return float(np.linalg.eigvalsh(h)[0])

    def validate(self) -> DensityMatrix:
        """Check trace, Hermiticity and positivity bounds; return ``self``."""
        tr = self.trace()
        if abs(tr - 1.0) > TRACE_TOL:
            raise ValueError(f"trace {tr} differs from 1 by more than {TRACE_TOL}")
        herm = np.max(np.abs(self.matrix - self.matrix.conj().T))
        if herm > DENSITY_HERMITIAN_TOL:
            raise ValueError(f"density matrix non-Hermitian by {herm:.3e}")
        lam = self.min_eigenvalue()
        if lam < -POSITIVITY_TOL:
            raise ValueError(f"density matrix has eigenvalue {lam:.3e}")
        return self


def fock_annihilation(n_max: int) -> Operator:
    """Cavity lowering operator truncated at ``n_max`` photons."""
    if int(n_max) != n_max or n_max < 1:
        raise ValueError(f"n_max must be an integer >= 1, got {n_max}")
    n_max = int(n_max)
    space = HilbertSpace((("cavity", n_max + 1),))
    return Operator(space, np.diag(np.sqrt(np.arange(1, n_max + 1, dtype=float)), k=1))


def atomic_transition(L: int, i: int, j: int) -> Operator:
    """``|i><j|`` on an ``L``-level atom, levels numbered from 1."""
    if int(L) != L or L < 2:
        raise ValueError(f"need at least two atomic levels, got {L}")
    for k in (i, j):
        if int(k) != k or not 1 <= k <= L:
            raise IndexError(f"atomic level {k} out of range 1..{L}")
    m = np.zeros((L, L), dtype=complex)
    m[i - 1, j - 1] = 1.0
    return Operator(HilbertSpace((("atom", int(L)),)), m)


def sigma_z() -> Operator:
    """Two-level inversion ``sigma_22 - sigma_11`` (level 2 is the excited state)."""
    return (atomic_transition(2, 2, 2) - atomic_transition(2, 1, 1)).as_hermitian()


def identity(space: HilbertSpace) -> Operator:
    return Operator(space, np.eye(space.dim), hermitian=True)


def tensor(A: Operator, B: Operator) -> Operator:
    """Kronecker product on the concatenated space (``A``'s factors first)."""
    herm = A.hermitian and B.hermitian
    return Operator(A.space * B.space, np.kron(A.matrix, B.matrix), hermitian=herm)


def tensor_state(a: StateVector, b: StateVector) -> StateVector:
    return StateVector(a.space * b.space, np.kron(a.amplitudes, b.amplitudes))


def basis_state(space: HilbertSpace, *levels: int) -> StateVector:
    """Product ket with zero-based factor indices ``levels``."""
    v = np.zeros(space.dim, dtype=complex)
    v[space.index(*levels)] = 1.0
    return StateVector(space, v)


def coherent_state(n_max: int, alpha: complex) -> StateVector:
    """Truncated coherent state ``sum_n e^{-|alpha|^2/2} alpha^n / sqrt(n!) |n>`` (not renormalized)."""
    space = HilbertSpace((("cavity", n_max + 1),))
    n = np.arange(n_max + 1)
    c = np.exp(-abs(alpha) ** 2 / 2) * np.array([alpha**k / np.sqrt(factorial(k)) for k in n], dtype=complex)
    return StateVector(space, c)


def expectation(op: Operator, state: StateVector | DensityMatrix) -> complex:
    """``<psi|O|psi>`` or ``Tr[O rho]``; real (as a complex) for Hermitian ``op``."""
    _check_same(op.space, state.space)
    if isinstance(state, StateVector):
        v = state.amplitudes
        val = complex(np.vdot(v, op.matrix @ v))
    elif isinstance(state, DensityMatrix):
        val = complex(np.trace(op.matrix @ state.matrix))
    else:
        raise TypeError(f"cannot take an expectation value in {type(state).__name__}")
    if op.hermitian and abs(val.imag) > 1e-10 * max(1.0, abs(val.real)):
        raise ArithmeticError(f"Hermitian expectation value has imaginary part {val.imag:.3e}")
    return complex(val.real) if op.hermitian else val


def operator(space: HilbertSpace, matrix: ArrayLike, hermitian: bool = False) -> Operator:
    return Operator(space, np.asarray(matrix, dtype=complex), hermitian)
