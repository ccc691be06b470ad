"""Truncated product space atom1 x atom2 x cavity1 x cavity2 x fiber.

Ordering is row-major over (a1, a2, n1, n2, nb) with atomic levels
(g, f, e) = (0, 1, 2), so dim = 9 * (n_max + 1)**3. Operators are stored
sparse but the contract is their dense semantics; ladder operators are
plain truncations (the raise out of the top Fock level is dropped), so
algebraic identities are only asserted on interior states.
"""

from __future__ import annotations

import cmath
import math

import numpy as np
import scipy.sparse as sp

__all__ = [
    "LEVELS",
    "LEVEL_NAMES",
    "HilbertSpace",
    "QOperator",
    "QState",
    "build_space",
    "mode_annihilation",
    "atomic_projector",
    "normal_mode",
    "normal_mode_coefficients",
    "basis_state",
    "interior_indices",
    "interior_projector",
]

LEVELS = {"g": 0, "f": 1, "e": 2}
LEVEL_NAMES = ("g", "f", "e")

_MODE_FACTOR = {"cavity1": 2, "cavity2": 3, "fiber": 4}


class HilbertSpace:
    """Index bookkeeping for the five-factor truncated space."""

    atom_dim = 3
    mode_count = 3

    def __init__(self, n_max: int):
        if not isinstance(n_max, int) or n_max < 1:
            raise ValueError(f"n_max must be an integer >= 1, got {n_max!r}")
        self.n_max = n_max
        self.fock_dim = n_max + 1
        self.dim = self.atom_dim**2 * self.fock_dim**3
        self._factor_dims = (3, 3, self.fock_dim, self.fock_dim, self.fock_dim)

    def index_of(self, a1: int, a2: int, n1: int, n2: int, nb: int) -> int:
        m = self.fock_dim
        for label, v, hi in (
            ("a1", a1, 2), ("a2", a2, 2),
            ("n1", n1, self.n_max), ("n2", n2, self.n_max), ("nb", nb, self.n_max),
        ):
            if not 0 <= v <= hi:
                raise ValueError(f"{label}={v} outside 0..{hi}")
        return (((a1 * 3 + a2) * m + n1) * m + n2) * m + nb

    def unpack(self, idx: int) -> tuple:
        if not 0 <= idx < self.dim:
            raise ValueError(f"index {idx} outside 0..{self.dim - 1}")
        m = self.fock_dim
        idx, nb = divmod(idx, m)
        idx, n2 = divmod(idx, m)
        idx, n1 = divmod(idx, m)
        a1, a2 = divmod(idx, 3)
        return a1, a2, n1, n2, nb

    def __eq__(self, other):
        return isinstance(other, HilbertSpace) and other.n_max == self.n_max

    def __hash__(self):
        return hash(("HilbertSpace", self.n_max))

    def __repr__(self):
        return f"HilbertSpace(n_max={self.n_max}, dim={self.dim})"


def build_space(n_max: int) -> HilbertSpace:
    return HilbertSpace(n_max)


class QOperator:
    """Operator on a HilbertSpace; immutable, sparse storage."""

    def __init__(self, space: HilbertSpace, matrix):
        m = sp.csr_matrix(matrix)
        if m.shape != (space.dim, space.dim):
            raise ValueError(f"matrix shape {m.shape} does not match dim {space.dim}")
        m.eliminate_zeros()
        self.space = space
        self.matrix = m

    def dense(self) -> np.ndarray:
        return np.asarray(self.matrix.todense(), dtype=complex)

    def dag(self) -> "QOperator":
        return QOperator(self.space, self.matrix.conjugate().transpose())

    def is_hermitian(self, tol: float = 1e-12) -> bool:
        d = self.matrix - self.matrix.conjugate().transpose()
        return abs(d).max() <= tol if d.nnz else True

    def expect(self, state: "QState") -> complex:
        v = state.amplitudes
        return complex(np.vdot(v, self.matrix.dot(v)))

    def max_abs_diff(self, other: "QOperator") -> float:
        d = self.matrix - other.matrix
        return float(abs(d).max()) if d.nnz else 0.0

    def __add__(self, other):
        self._check(other)
        return QOperator(self.space, self.matrix + other.matrix)

    def __sub__(self, other):
        self._check(other)
        return QOperator(self.space, self.matrix - other.matrix)

    def __neg__(self):
        return QOperator(self.space, -self.matrix)

    def __mul__(self, scalar):
        return QOperator(self.space, self.matrix * complex(scalar))

    __rmul__ = __mul__

    def __matmul__(self, other):
        if isinstance(other, QOperator):
            self._check(other)
            return QOperator(self.space, self.matrix @ other.matrix)
        if isinstance(other, QState):
            return QState(self.space, self.matrix.dot(other.amplitudes),
                          normalized=False)
        return self.matrix.dot(other)

    def _check(self, other):
        if other.space != self.space:
            raise ValueError("operators live on different spaces")

    def to_triplets(self) -> list:
        coo = self.matrix.tocoo()
        return [
            (int(r), int(c), float(v.real), float(v.imag))
            for r, c, v in zip(coo.row, coo.col, coo.data)
        ]

    def save_triplets(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("# row col re im\n")
            for r, c, re, im in self.to_triplets():
                fh.write(f"{r} {c} {re!r} {im!r}\n")

    def __repr__(self):
        return f"QOperator(dim={self.space.dim}, nnz={self.matrix.nnz})"


class QState:
    """Pure state; construction checks the norm unless told otherwise."""

    def __init__(self, space: HilbertSpace, amplitudes, normalized: bool = True):
        v = np.asarray(amplitudes, dtype=complex).reshape(-1)
        if v.shape != (space.dim,):
            raise ValueError(f"amplitude vector length {v.size} != dim {space.dim}")
        if normalized:
            n = np.linalg.norm(v)
            if abs(n - 1.0) > 1e-9:
                raise ValueError(f"state norm {n!r} deviates from 1 beyond 1e-9")
        self.space = space
        self.amplitudes = v

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def overlap(self, other: "QState") -> complex:
        return complex(np.vdot(self.amplitudes, other.amplitudes))

    def density_matrix(self) -> np.ndarray:
        return np.outer(self.amplitudes, self.amplitudes.conj())

    def __repr__(self):
        return f"QState(dim={self.space.dim}, norm={self.norm():.6f})"


def _embed(space: HilbertSpace, factor: int, small) -> sp.csr_matrix:
    mats = []
    for i, d in enumerate(space._factor_dims):
        mats.append(small if i == factor else sp.identity(d, format="csr"))
    out = mats[0]
    for m in mats[1:]:
        out = sp.kron(out, m, format="csr")
    return out


def _ladder(fock_dim: int) -> sp.csr_matrix:
    n = np.arange(1, fock_dim)
    return sp.diags(np.sqrt(n), offsets=1, shape=(fock_dim, fock_dim)).tocsr()


def mode_annihilation(space: HilbertSpace, which: str) -> QOperator:
    """Truncated annihilation operator of cavity1, cavity2 or fiber."""
    if which not in _MODE_FACTOR:
        raise ValueError(f"unknown mode {which!r}; expected one of {sorted(_MODE_FACTOR)}")
    return QOperator(space, _embed(space, _MODE_FACTOR[which], _ladder(space.fock_dim)))


def atomic_projector(space: HilbertSpace, which_atom: int, bra: str, ket: str) -> QOperator:
    """|bra><ket| on the chosen atom, identity on everything else."""
    if which_atom not in (1, 2):
        raise ValueError(f"which_atom must be 1 or 2, got {which_atom!r}")
    try:
        i, j = LEVELS[bra], LEVELS[ket]
    except KeyError as e:
        raise ValueError(f"unknown level {e.args[0]!r}; expected g, f or e") from None
    small = sp.csr_matrix(([1.0], ([i], [j])), shape=(3, 3))
    return QOperator(space, _embed(space, which_atom - 1, small))


def normal_mode_coefficients(phi: float) -> np.ndarray:
    """Rows map (a1, a2, b) to (c0, c1, c2); unitary for any phi."""
    p = cmath.exp(1j * phi)
    s = 1.0 / math.sqrt(2.0)
    return np.array(
        [
            [s, -s * p, 0.0],
            [0.5, 0.5 * p, s],
            [0.5, 0.5 * p, -s],
        ],
        dtype=complex,
    )


def normal_mode(space: HilbertSpace, which: str, phi: float = 0.0) -> QOperator:
    """Collective modes: c0 = (a1 - e^{i phi} a2)/sqrt2, c1/c2 = (a1 + e^{i phi} a2 +- sqrt2 b)/2.

    The phase argument is the one appearing in these combinations. Callers
    diagonalizing a chain with fiber phase phi must pass -phi here: only the
    conjugate-phase modes decouple the antisymmetric combination for a
    general phase (either sign works at phi in {0, pi}).
    """
    names = ("c0", "c1", "c2")
    if which not in names:
        raise ValueError(f"unknown normal mode {which!r}; expected one of {names}")
    row = normal_mode_coefficients(phi)[names.index(which)]
    a1 = mode_annihilation(space, "cavity1")
    a2 = mode_annihilation(space, "cavity2")
    b = mode_annihilation(space, "fiber")
    return row[0] * a1 + row[1] * a2 + row[2] * b


def basis_state(space: HilbertSpace, a1: str, a2: str, n1: int, n2: int, nb: int) -> QState:
    for lv in (a1, a2):
        if lv not in LEVELS:
            raise ValueError(f"unknown level {lv!r}; expected g, f or e")
    idx = space.index_of(LEVELS[a1], LEVELS[a2], n1, n2, nb)
    v = np.zeros(space.dim, dtype=complex)
    v[idx] = 1.0
    return QState(space, v)


def interior_indices(space: HilbertSpace, per_mode: bool = False) -> np.ndarray:
    """Flat indices where truncation artifacts cannot appear.

    Default: total photon number <= n_max - 1, so any single raise stays
    representable. per_mode=True relaxes to every occupation <= n_max - 1.
    """
    keep = []
    for idx in range(space.dim):
        _, _, n1, n2, nb = space.unpack(idx)
        ok = (
            max(n1, n2, nb) < space.n_max
            if per_mode
            else n1 + n2 + nb < space.n_max
        )
        if ok:
            keep.append(idx)
    return np.array(keep, dtype=int)


def interior_projector(space: HilbertSpace, per_mode: bool = False) -> QOperator:
    idx = interior_indices(space, per_mode=per_mode)
    d = np.zeros(space.dim)
    d[idx] = 1.0
    return QOperator(space, sp.diags(d))
