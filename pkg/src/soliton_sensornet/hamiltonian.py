"""Quantized three-mode soliton Josephson junction (TMSJJ).

The matrix holds the dimensionless per-particle coefficients of the amplitude
equation ``i dA/dtau = H A`` with ``tau = 2 kappa t``.  An eigenvalue ``lam``
corresponds to the physical energy ``E / (kappa N) = 2 lam``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
import scipy.linalg
import scipy.sparse
import scipy.sparse.linalg

from .fock import FockBasis3, StateVector, basis_new, _cycle_index

__all__ = [
    "TmsjjParams",
    "SymmetricHamiltonian",
    "SpectrumResult",
    "GroundState",
    "NumericalError",
    "alpha",
    "beta",
    "build_hamiltonian",
    "spectrum",
    "ground_state",
    "rayleigh_quotient",
    "evolve",
    "noon_fidelity",
    "edge_population",
    "detect_lambda_cr",
    "DENSE_MAX_DIM",
]

# dim of the N = 80 basis; larger problems go to Lanczos
DENSE_MAX_DIM = 3321
SYMMETRY_TOL = 1e-12
DEGENERACY_TOL = 1e-10


class NumericalError(RuntimeError):
    """A solver failed to converge or an integrity check on a result failed."""


@dataclass(frozen=True)
class TmsjjParams:
    """``N`` particles, vital parameter ``lam`` (Lambda), tunneling rate ``kappa``.

    ``kappa`` only fixes the physical time scale, ``t = tau / (2 kappa)``.
    """

    N: int
    lam: float
    kappa: float = 1.0

    def __post_init__(self):
        if self.N < 1:
            raise ValueError(f"N must be >= 1, got {self.N}")
        if not self.lam >= 0:
            raise ValueError(f"Lambda must be >= 0, got {self.lam}")
        if not self.kappa > 0:
            raise ValueError(f"kappa must be > 0, got {self.kappa}")


def alpha(n1: int, n2: int, N: int, lam: float) -> float:
    """On-site interaction energy of ``|n1, n2, N - n1 - n2>``."""
    n3 = N - n1 - n2
    return -(lam / 3.0) * (n1**3 + n2**3 + n3**3) / N**3


def beta(ni: int, nj: int, N: int) -> float:
    """Tunneling coefficient for one particle hopping from mode i to mode j.

    The ``ni + nj == 0`` point is a removable 0/0 and evaluates to 0.
    """
    s = ni + nj
    if s == 0:
        return 0.0
    # sqrt(ni(ni-1)) vanishes for ni in {0, 1}; never feed sqrt a negative
    root_i = math.sqrt(ni * (ni - 1)) if ni > 1 else 0.0
    root_j = math.sqrt(nj * (nj + 1))
    first = (nj + 1) * root_i * (1.0 - 0.21 * ((nj - ni) / s) ** 2)
    second = ni * root_j * (1.0 - 0.21 * ((nj - ni + 2) / s) ** 2)
    return -(first + second) / (2.0 * N * s)


@dataclass(frozen=True, eq=False)
class SymmetricHamiltonian:
    basis: FockBasis3
    params: TmsjjParams
    matrix: scipy.sparse.csr_matrix

    @property
    def dim(self) -> int:
        return self.basis.dim

    def dense(self) -> np.ndarray:
        return self.matrix.toarray()

    def apply(self, amplitudes: np.ndarray) -> np.ndarray:
        return self.matrix @ amplitudes

    def norm_bound(self) -> float:
        """Gershgorin bound on the spectral radius."""
        return float(np.max(np.asarray(abs(self.matrix).sum(axis=1)).ravel()))

    def trace(self) -> float:
        return float(self.matrix.diagonal().sum())


def build_hamiltonian(params: TmsjjParams) -> SymmetricHamiltonian:
    """Assemble the TMSJJ matrix in the fixed-N Fock basis.

    Row ``(N1, N2)`` couples to its six single-hop neighbours with the
    coefficients in the order they appear in the amplitude equation.
    Raises :class:`NumericalError` if the result is not symmetric.
    """
    N, lam = params.N, params.lam
    basis = basis_new(N)
    rows, cols, vals = [], [], []
    for i, (n1, n2, n3) in enumerate(basis.occupations().tolist()):
        rows.append(i)
        cols.append(i)
        vals.append(alpha(n1, n2, N, lam))
        hops = (
            ((n1 - 1, n2 + 1), beta(n1, n2, N)),
            ((n1 + 1, n2 - 1), beta(n2, n1, N)),
            ((n1, n2 - 1), beta(n2, n3, N)),
            ((n1, n2 + 1), beta(n3, n2, N)),
            ((n1 + 1, n2), beta(n3, n1, N)),
            ((n1 - 1, n2), beta(n1, n3, N)),
        )
        for (m1, m2), b in hops:
            if b != 0.0 and basis.contains(m1, m2):
                rows.append(i)
                cols.append(basis.index_of(m1, m2))
                vals.append(b)
    mat = scipy.sparse.csr_matrix((vals, (rows, cols)), shape=(basis.dim, basis.dim))
    asym = abs(mat - mat.T).max() if mat.nnz else 0.0
    scale = abs(mat).max() if mat.nnz else 1.0
    if asym > SYMMETRY_TOL * max(scale, 1e-300):
        raise NumericalError(f"assembled Hamiltonian is not symmetric: max |H - H^T| = {asym:.3e}")
    return SymmetricHamiltonian(basis=basis, params=params, matrix=mat)


class SpectrumResult(NamedTuple):
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray | None
    lam: float

    @property
    def energies_per_particle(self) -> np.ndarray:
        """Eigenvalues on the physical ``E / (kappa N)`` axis."""
        return 2.0 * self.eigenvalues


def spectrum(H: SymmetricHamiltonian, want_vectors: bool = False) -> SpectrumResult:
    """Full spectrum by Householder tridiagonalization and implicit QL/QR (LAPACK ``dsyev``)."""
    try:
        if want_vectors:
            w, v = scipy.linalg.eigh(H.dense(), driver="ev")
        else:
            w, v = scipy.linalg.eigh(H.dense(), eigvals_only=True, driver="ev"), None
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"eigensolver failed: {exc}") from exc
    return SpectrumResult(w, v, H.params.lam)


@dataclass(frozen=True)
class GroundState:
    """Lowest eigenpair.

    ``degenerate`` is set when other eigenvalues lie within
    ``DEGENERACY_TOL`` of ``energy``; ``cluster`` then lists all of them and
    ``state`` is the cyclically symmetric member of the cluster.
    """

    energy: float
    state: StateVector
    degenerate: bool
    cluster: tuple[float, ...]
    gap: float

    @property
    def energy_per_particle(self) -> float:
        return 2.0 * self.energy


def _symmetric_projection(vectors: np.ndarray, N: int) -> np.ndarray:
    src = _cycle_index(N)
    p1 = vectors[src]
    p2 = p1[src]
    return (vectors + p1 + p2) / 3.0


def _fix_phase(v: np.ndarray) -> np.ndarray:
    k = int(np.argmax(np.abs(v)))
    return v * (abs(v[k]) / v[k])


def ground_state(H: SymmetricHamiltonian, n_cluster: int = 4) -> GroundState:
    """Ground energy and state; dense solver up to ``DENSE_MAX_DIM``, Lanczos beyond."""
    dim = H.dim
    try:
        if dim <= DENSE_MAX_DIM:
            k = min(n_cluster, dim)
            w, v = scipy.linalg.eigh(H.dense(), subset_by_index=[0, k - 1])
        else:
            k = min(n_cluster, dim - 1)
            w, v = scipy.sparse.linalg.eigsh(H.matrix, k=k, which="SA", tol=1e-13)
            order = np.argsort(w)
            w, v = w[order], v[:, order]
    except (np.linalg.LinAlgError, scipy.sparse.linalg.ArpackNoConvergence) as exc:
        raise NumericalError(f"ground-state solve failed: {exc}") from exc

    in_cluster = w - w[0] < DEGENERACY_TOL
    cluster = w[in_cluster]
    if len(cluster) > 1:
        # the true ground state is the unique nodeless vector; it lives in the
        # cyclically symmetric sector while its near-degenerate partners do not
        proj = _symmetric_projection(v[:, in_cluster], H.basis.N)
        u, _, _ = np.linalg.svd(proj, full_matrices=False)
        vec = u[:, 0]
        lam0 = float(vec @ H.apply(vec))
    else:
        vec = v[:, 0]
        lam0 = float(w[0])
    vec = _fix_phase(vec.astype(np.complex128))
    vec = vec / np.linalg.norm(vec)
    gap = float(w[1] - w[0]) if len(w) > 1 else math.inf
    return GroundState(
        energy=lam0,
        state=StateVector(H.basis, vec),
        degenerate=len(cluster) > 1,
        cluster=tuple(float(x) for x in cluster),
        gap=gap,
    )


def rayleigh_quotient(H: SymmetricHamiltonian, psi: StateVector) -> float:
    a = psi.amplitudes
    return float(np.vdot(a, H.apply(a)).real / np.vdot(a, a).real)


def evolve(
    psi: StateVector,
    params: TmsjjParams | SymmetricHamiltonian,
    tau_end: float,
    tol: float = 1e-9,
    max_steps: int = 10_000_000,
) -> StateVector:
    """Integrate ``i dA/dtau = H A`` to ``tau_end`` with classic RK4.

    The step is the largest one whose accumulated truncation error, estimated
    from the spectral-radius bound ``r``, stays below ``tol`` over the run:
    RK4 on a linear system has local error ``(h r)^5 / 120``.
    """
    H = params if isinstance(params, SymmetricHamiltonian) else build_hamiltonian(params)
    if H.basis.N != psi.N:
        raise ValueError("state and Hamiltonian have different particle numbers")
    if tau_end == 0:
        return psi
    r = max(H.norm_bound(), 1e-300)
    span = abs(tau_end)
    h = (120.0 * tol / (span * r**5)) ** 0.25
    h = min(h, 0.5 / r, span)
    n_steps = int(math.ceil(span / h))
    if n_steps > max_steps:
        raise NumericalError(f"step size underflow: {n_steps} steps needed for tol={tol}")
    h = math.copysign(span / n_steps, tau_end)

    M = H.matrix * (-1j)
    y = psi.amplitudes.copy()
    for _ in range(n_steps):
        k1 = M @ y
        k2 = M @ (y + 0.5 * h * k1)
        k3 = M @ (y + 0.5 * h * k2)
        k4 = M @ (y + h * k3)
        y = y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return StateVector(psi.basis, y)


def noon_fidelity(psi: StateVector) -> float:
    """``|<N00N|psi>|^2`` against the in-phase balanced three-mode N00N state."""
    if psi.N == 0:
        return float(abs(psi.amplitudes[0]) ** 2)
    idx = psi.basis.edge_indices()
    overlap = psi.amplitudes[list(idx)].sum() / math.sqrt(3.0)
    return float(abs(overlap) ** 2)


def edge_population(N: int, lam: float) -> float:
    """Order parameter: ground-state weight on the three edge kets."""
    gs = ground_state(build_hamiltonian(TmsjjParams(N, lam)))
    return gs.state.edge_population()


def detect_lambda_cr(N: int, lam_lo: float, lam_hi: float, tol_lam: float = 1e-5) -> float:
    """Bisect for the Lambda where the ground-state edge population crosses 1/2."""
    if not lam_lo < lam_hi:
        raise ValueError("need lam_lo < lam_hi")
    f_lo = edge_population(N, lam_lo) - 0.5
    f_hi = edge_population(N, lam_hi) - 0.5
    if f_lo * f_hi > 0:
        raise ValueError(
            f"no crossing of the edge population through 1/2 in [{lam_lo}, {lam_hi}]"
        )
    lo, hi = lam_lo, lam_hi
    while hi - lo > tol_lam:
        mid = 0.5 * (lo + hi)
        f_mid = edge_population(N, mid) - 0.5
        if f_mid == 0:
            return mid
        if (f_mid < 0) == (f_lo < 0):
            lo, f_lo = mid, f_mid
        else:
            hi = mid
    return 0.5 * (lo + hi)
