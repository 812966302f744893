"""Three-mode Fock basis at fixed total particle number, and states over it.

Basis order is lexicographic in ``(N1, N2)``; ``N3 = N - N1 - N2`` is implied.
The order is frozen because every CSV export relies on it.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

__all__ = [
    "FockBasis3",
    "StateVector",
    "basis_new",
    "basis_ket",
    "state_noon",
    "state_gaussian",
    "inner",
    "norm",
    "normalize",
    "cyclic_permutation",
    "state_to_csv",
    "state_from_csv",
]


@dataclass(frozen=True, eq=False)
class FockBasis3:
    """Enumeration of ``|N1, N2, N - N1 - N2>`` for a fixed ``N``.

    Attributes:
        N: total particle count.
        states: ``(dim, 2)`` integer array of ``(N1, N2)`` pairs in basis order.
    """

    N: int
    states: np.ndarray = field(repr=False)
    _index: dict = field(repr=False)

    @property
    def dim(self) -> int:
        return len(self.states)

    @property
    def n1(self) -> np.ndarray:
        return self.states[:, 0]

    @property
    def n2(self) -> np.ndarray:
        return self.states[:, 1]

    @property
    def n3(self) -> np.ndarray:
        return self.N - self.states[:, 0] - self.states[:, 1]

    def occupations(self) -> np.ndarray:
        """``(dim, 3)`` array of ``(N1, N2, N3)``."""
        return np.column_stack([self.n1, self.n2, self.n3])

    def index_of(self, n1: int, n2: int) -> int:
        try:
            return self._index[(int(n1), int(n2))]
        except KeyError:
            raise KeyError(f"({n1}, {n2}) is not a valid occupation for N={self.N}") from None

    def contains(self, n1: int, n2: int) -> bool:
        return (int(n1), int(n2)) in self._index

    def state_of(self, index: int) -> tuple[int, int]:
        n1, n2 = self.states[index]
        return int(n1), int(n2)

    def edge_indices(self) -> tuple[int, int, int]:
        """Indices of ``|N,0,0>``, ``|0,N,0>`` and ``|0,0,N>``."""
        return self.index_of(self.N, 0), self.index_of(0, self.N), self.index_of(0, 0)


@lru_cache(maxsize=64)
def basis_new(N: int) -> FockBasis3:
    if N < 0:
        raise ValueError(f"N must be non-negative, got {N}")
    pairs = [(a, b) for a in range(N + 1) for b in range(N + 1 - a)]
    states = np.array(pairs, dtype=np.int64).reshape(-1, 2)
    states.setflags(write=False)
    return FockBasis3(N=N, states=states, _index={p: i for i, p in enumerate(pairs)})


@dataclass(frozen=True, eq=False)
class StateVector:
    """Complex amplitudes ``A[N1, N2]`` over a :class:`FockBasis3`."""

    basis: FockBasis3
    amplitudes: np.ndarray

    def __post_init__(self):
        amps = np.array(self.amplitudes, dtype=np.complex128)
        if amps.shape != (self.basis.dim,):
            raise ValueError(
                f"expected {self.basis.dim} amplitudes for N={self.basis.N}, got shape {amps.shape}"
            )
        amps.setflags(write=False)
        object.__setattr__(self, "amplitudes", amps)

    @property
    def N(self) -> int:
        return self.basis.N

    def probabilities(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2

    def amplitude(self, n1: int, n2: int) -> complex:
        return complex(self.amplitudes[self.basis.index_of(n1, n2)])

    def mean_occupations(self) -> np.ndarray:
        return self.probabilities() @ self.basis.occupations()

    def edge_population(self) -> float:
        """Total weight on the three all-in-one-mode kets."""
        p = self.probabilities()
        return float(sum(p[i] for i in set(self.basis.edge_indices())))

    def __mul__(self, scalar) -> "StateVector":
        return StateVector(self.basis, self.amplitudes * scalar)

    __rmul__ = __mul__


def _check_same_basis(a: StateVector, b: StateVector):
    if a.basis.N != b.basis.N:
        raise ValueError(f"states live on different bases (N={a.basis.N} vs N={b.basis.N})")


def inner(a: StateVector, b: StateVector) -> complex:
    """Hermitian inner product ``<a|b>``."""
    _check_same_basis(a, b)
    return complex(np.vdot(a.amplitudes, b.amplitudes))


def norm(a: StateVector) -> float:
    return float(np.linalg.norm(a.amplitudes))


def normalize(a: StateVector) -> StateVector:
    nrm = norm(a)
    if nrm == 0.0:
        raise ValueError("cannot normalize the zero vector")
    return StateVector(a.basis, a.amplitudes / nrm)


def basis_ket(basis: FockBasis3, n1: int, n2: int) -> StateVector:
    amps = np.zeros(basis.dim, dtype=np.complex128)
    amps[basis.index_of(n1, n2)] = 1.0
    return StateVector(basis, amps)


def state_noon(basis: FockBasis3, theta2: float = 0.0, theta3: float = 0.0) -> StateVector:
    """``(|N,0,0> + e^{i theta2}|0,N,0> + e^{i theta3}|0,0,N>) / sqrt(3)``.

    For ``N == 0`` the three kets coincide and the vacuum is returned.
    """
    amps = np.zeros(basis.dim, dtype=np.complex128)
    if basis.N == 0:
        amps[0] = 1.0
        return StateVector(basis, amps)
    i1, i2, i3 = basis.edge_indices()
    amps[i1] = 1.0
    amps[i2] = np.exp(1j * theta2)
    amps[i3] = np.exp(1j * theta3)
    return StateVector(basis, amps / math.sqrt(3.0))


def gaussian_weights(basis: FockBasis3) -> np.ndarray:
    """Unnormalized two-dimensional Gaussian occupation distribution centred at N/3 per mode."""
    N = basis.N
    if N < 1:
        raise ValueError("the Gaussian probe needs N >= 1")
    n1 = basis.n1.astype(float)
    n2 = basis.n2.astype(float)
    pref = 9.0 / (2.0 * math.sqrt(3.0) * math.pi * N)
    return pref * np.exp(
        -9.0 / (4.0 * N) * (n1 + n2 - 2.0 * N / 3.0) ** 2 - 3.0 / (4.0 * N) * (n1 - n2) ** 2
    )


def state_gaussian(basis: FockBasis3) -> StateVector:
    """Coherent-like probe: amplitudes ``sqrt(p)`` renormalized over the truncated simplex."""
    p = gaussian_weights(basis)
    return StateVector(basis, np.sqrt(p / p.sum()))


@lru_cache(maxsize=64)
def _cycle_index(N: int) -> np.ndarray:
    basis = basis_new(N)
    # (P psi)(N1, N2, N3) = psi(N3, N1, N2)
    src = np.array([basis.index_of(n3, n1) for n1, n2, n3 in basis.occupations()], dtype=np.int64)
    src.setflags(write=False)
    return src


def cyclic_permutation(state: StateVector, times: int = 1) -> StateVector:
    """Relabel modes cyclically ``times`` times.

    New mode 1 takes the occupation of old mode 2, new 2 that of old 3, and
    new 3 that of old 1.
    """
    src = _cycle_index(state.N)
    amps = state.amplitudes
    for _ in range(times % 3):
        amps = amps[src]
    return StateVector(state.basis, amps)


def state_to_csv(state: StateVector) -> str:
    """Serialize as ``N1,N2,re,im`` rows in basis order (shortest round-trip floats)."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["N1", "N2", "re", "im"])
    for (n1, n2), a in zip(state.basis.states, state.amplitudes):
        w.writerow([int(n1), int(n2), repr(float(a.real)), repr(float(a.imag))])
    return buf.getvalue()


def state_from_csv(text: str) -> StateVector:
    rows = list(csv.DictReader(io.StringIO(text)))
    if not rows:
        raise ValueError("empty state CSV")
    # dim = (N+1)(N+2)/2
    N = int(round((math.sqrt(8 * len(rows) + 1) - 3) / 2))
    basis = basis_new(N)
    if basis.dim != len(rows):
        raise ValueError(f"{len(rows)} rows is not a triangular basis size")
    amps = np.zeros(basis.dim, dtype=np.complex128)
    for row in rows:
        amps[basis.index_of(int(row["N1"]), int(row["N2"]))] = complex(float(row["re"]), float(row["im"]))
    return StateVector(basis, amps)
