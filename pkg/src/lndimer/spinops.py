"""Angular-momentum operator algebra on fixed-J multiplets.

Provides spin spaces with a fixed descending-m basis convention, the
Cartesian/ladder angular-momentum operators, the cosine-type Stevens
equivalent operators used in tetragonal crystal fields, and Kronecker
embedding of single-space operators into a composite product space.

Basis convention (used everywhere in the package): basis index 0 is
m = +J, index 2J is m = -J. All operators are dense complex matrices
wrapped in :class:`OperatorMatrix`, which remembers the tensor-product
space it acts on.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from functools import reduce

import numpy as np


class SpinKind(enum.Enum):
    ELECTRONIC = "electronic"
    NUCLEAR = "nuclear"


class UnsupportedStevensOperator(ValueError):
    """Raised for (k, q) pairs outside the implemented Stevens table."""


def _is_half_integer(x: float) -> bool:
    return abs(2 * x - round(2 * x)) < 1e-12


@dataclass(frozen=True)
class SpinSpace:
    """A single angular-momentum multiplet with descending-m basis.

    quantum_number must be a non-negative multiple of 1/2; dimension is
    2*quantum_number + 1.
    """

    quantum_number: float
    kind: SpinKind

    def __post_init__(self):
        q = self.quantum_number
        if q < 0 or not _is_half_integer(q):
            raise ValueError(
                f"quantum number must be a non-negative half-integer, got {q}"
            )
        object.__setattr__(self, "quantum_number", round(2 * q) / 2)

    @property
    def dimension(self) -> int:
        return int(round(2 * self.quantum_number)) + 1

    @property
    def m_values(self) -> np.ndarray:
        """Magnetic quantum numbers in basis order (+J down to -J)."""
        return self.quantum_number - np.arange(self.dimension)


def make_spin_space(quantum_number: float, kind: SpinKind | str) -> SpinSpace:
    if isinstance(kind, str):
        kind = SpinKind(kind)
    return SpinSpace(quantum_number, kind)


@dataclass(frozen=True)
class OperatorMatrix:
    """Dense complex matrix tagged with the spaces whose product it acts on.

    Hamiltonian-valued instances are expected Hermitian to 1e-12 relative
    Frobenius norm; use :meth:`hermiticity_defect` to check.
    """

    data: np.ndarray
    spaces: tuple[SpinSpace, ...] = field(default=())

    def __post_init__(self):
        data = np.asarray(self.data, dtype=complex)
        if data.ndim != 2 or data.shape[0] != data.shape[1]:
            raise ValueError(f"operator must be square, got shape {data.shape}")
        expected = int(np.prod([s.dimension for s in self.spaces])) if self.spaces else data.shape[0]
        if data.shape[0] != expected:
            raise ValueError(
                f"matrix dimension {data.shape[0]} != product of tagged space "
                f"dimensions {expected}"
            )
        data = data.copy()
        data.flags.writeable = False
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "spaces", tuple(self.spaces))

    @property
    def dimension(self) -> int:
        return self.data.shape[0]

    def hermiticity_defect(self) -> float:
        """Relative Frobenius-norm distance from the Hermitian part."""
        nrm = np.linalg.norm(self.data)
        if nrm == 0.0:
            return 0.0
        return float(np.linalg.norm(self.data - self.data.conj().T) / nrm)

    def is_hermitian(self, tol: float = 1e-12) -> bool:
        return self.hermiticity_defect() <= tol

    def real_data(self) -> np.ndarray:
        """Real view of the matrix if exactly real, else the complex data."""
        if np.all(self.data.imag == 0.0):
            return np.ascontiguousarray(self.data.real)
        return self.data


def angular_momentum_ops(space: SpinSpace) -> dict[str, OperatorMatrix]:
    """Jz, J+, J-, Jx, Jy for one multiplet (dimensionless).

    Jz is diagonal with entries m in descending order; <m+1|J+|m> =
    sqrt(J(J+1) - m(m+1)) sits on the superdiagonal in this ordering.
    """
    j = space.quantum_number
    m = space.m_values
    dim = space.dimension
    jz = np.diag(m).astype(complex)
    jp = np.zeros((dim, dim), dtype=complex)
    for col in range(1, dim):
        mm = m[col]
        jp[col - 1, col] = np.sqrt(j * (j + 1) - mm * (mm + 1))
    jm = jp.conj().T
    jx = 0.5 * (jp + jm)
    jy = (jp - jm) / 2j
    tag = (space,)
    return {
        "jz": OperatorMatrix(jz, tag),
        "jplus": OperatorMatrix(jp, tag),
        "jminus": OperatorMatrix(jm, tag),
        "jx": OperatorMatrix(jx, tag),
        "jy": OperatorMatrix(jy, tag),
    }


# Stevens equivalent operators, cosine (q >= 0) combinations, after the
# standard operator-equivalent tables. X = J(J+1).
_STEVENS_SUPPORTED = {(2, 0), (2, 2), (4, 0), (4, 2), (4, 4), (6, 0), (6, 2), (6, 4), (6, 6)}


def stevens_operator(space: SpinSpace, k: int, q: int) -> OperatorMatrix:
    """Stevens operator O_k^q as a polynomial in Jz and J±.

    Supports even k in {2, 4, 6} with cosine-type q in {0, 2, 4, 6}, q <= k.
    Diagonal for q = 0; couples only |Δm| = q otherwise. Always Hermitian.
    """
    if (k, q) not in _STEVENS_SUPPORTED:
        raise UnsupportedStevensOperator(f"Stevens operator O_{k}^{q} not supported")
    ops = angular_momentum_ops(space)
    jz = ops["jz"].data
    jp = ops["jplus"].data
    jm = ops["jminus"].data
    j = space.quantum_number
    x = j * (j + 1)
    eye = np.eye(space.dimension, dtype=complex)
    jz2 = jz @ jz

    def sym(a: np.ndarray, b: np.ndarray) -> np.ndarray:
        # 1/2 {A, B}, keeps products Hermitian when A, B are
        return 0.5 * (a @ b + b @ a)

    if (k, q) == (2, 0):
        m = 3 * jz2 - x * eye
    elif (k, q) == (2, 2):
        m = 0.5 * (_mpow(jp, 2) + _mpow(jm, 2))
    elif (k, q) == (4, 0):
        m = 35 * _mpow(jz, 4) - (30 * x - 25) * jz2 + (3 * x**2 - 6 * x) * eye
    elif (k, q) == (4, 2):
        f = 7 * jz2 - (x + 5) * eye
        m = 0.5 * sym(_mpow(jp, 2) + _mpow(jm, 2), f)
    elif (k, q) == (4, 4):
        m = 0.5 * (_mpow(jp, 4) + _mpow(jm, 4))
    elif (k, q) == (6, 0):
        m = (
            231 * _mpow(jz, 6)
            - (315 * x - 735) * _mpow(jz, 4)
            + (105 * x**2 - 525 * x + 294) * jz2
            + (-5 * x**3 + 40 * x**2 - 60 * x) * eye
        )
    elif (k, q) == (6, 2):
        f = (
            33 * _mpow(jz, 4)
            - (18 * x + 123) * jz2
            + (x**2 + 10 * x + 102) * eye
        )
        m = 0.5 * sym(_mpow(jp, 2) + _mpow(jm, 2), f)
    elif (k, q) == (6, 4):
        f = 11 * jz2 - (x + 38) * eye
        m = 0.5 * sym(_mpow(jp, 4) + _mpow(jm, 4), f)
    else:  # (6, 6)
        m = 0.5 * (_mpow(jp, 6) + _mpow(jm, 6))
    return OperatorMatrix(m, (space,))


def _mpow(m: np.ndarray, n: int) -> np.ndarray:
    return np.linalg.matrix_power(m, n)


def embed(op: OperatorMatrix, slot: int, composite: tuple[SpinSpace, ...] | list[SpinSpace]) -> OperatorMatrix:
    """Kronecker-embed a single-space operator into a composite space.

    Identity acts on every slot except `slot`; slot order is fixed by the
    composite tuple (the dimer convention is (J1, J2, I1, I2)).
    """
    composite = tuple(composite)
    if not 0 <= slot < len(composite):
        raise ValueError(f"slot {slot} outside composite of length {len(composite)}")
    if len(op.spaces) != 1 or op.spaces[0] != composite[slot]:
        raise ValueError(
            f"operator space {op.spaces} does not match composite slot {slot} "
            f"({composite[slot]})"
        )
    mats = [
        op.data if i == slot else np.eye(s.dimension, dtype=complex)
        for i, s in enumerate(composite)
    ]
    return OperatorMatrix(reduce(np.kron, mats), composite)


def product_basis_m_values(composite: tuple[SpinSpace, ...] | list[SpinSpace]) -> np.ndarray:
    """(dim, n_spaces) array of m quantum numbers labelling each basis state.

    Row ordering matches the Kronecker convention of :func:`embed`, so file
    outputs can label rows by (m_J1, m_J2, m_I1, m_I2).
    """
    composite = tuple(composite)
    grids = np.meshgrid(*[s.m_values for s in composite], indexing="ij")
    return np.stack([g.ravel() for g in grids], axis=1)
