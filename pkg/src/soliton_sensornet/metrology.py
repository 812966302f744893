"""Lossless multiparameter phase estimation with N00N-type probes.

Covers the analytic QFI matrix of the unbalanced (d+1)-mode N00N family, the
overall quantum Cramer-Rao accuracy ``sqrt(Tr F^-1)``, closed-form benchmark
limits, a finite-difference QFI used as an independent oracle, and
single-parameter estimation of ``chi = Lambda / N^2`` with the in- and
out-of-phase soliton N00N states.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from typing import Callable, NamedTuple, Sequence

import numpy as np
import scipy.linalg

from .fock import StateVector, basis_new, state_noon
from .semiclassical import stationary_phase_in, stationary_phase_out

__all__ = [
    "NoonFamily",
    "QfiMatrix",
    "SingularFisherError",
    "noon_family_amplitudes",
    "qfi_noon_multi",
    "qfi_phase_shift",
    "crb_overall",
    "ghl",
    "balanced_bound",
    "optimized_bound",
    "optimized_eps",
    "sensitivity",
    "qfi_numeric",
    "noon_pm_state",
    "dtheta_dlambda",
    "ChiAccuracy",
    "chi_qfi_pm",
    "bound_table",
    "bound_table_csv",
]

QfiMatrix = np.ndarray

# evaluation point standing in for Lambda -> 0+
LAMBDA_ZERO = 1e-9


class SingularFisherError(ValueError):
    """The Fisher matrix cannot be inverted, so no finite bound exists."""


@dataclass(frozen=True)
class NoonFamily:
    """``sqrt(1 - d eps^2)|N,0..0> + eps * sum_j e^{i chi_j N^k}|0..N_j..0>``."""

    d: int
    eps: float
    N: int
    k: int = 1
    chi: tuple[float, ...] | None = None

    def __post_init__(self):
        if self.d < 1:
            raise ValueError("d must be >= 1")
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if not 0.0 < self.eps**2 <= 1.0 / self.d + 1e-15:
            raise ValueError(f"need 0 < eps^2 <= 1/d, got eps^2 = {self.eps ** 2}")
        if self.chi is not None and len(self.chi) != self.d:
            raise ValueError(f"need {self.d} parameters, got {len(self.chi)}")

    @property
    def phase_scale(self) -> float:
        """``N^k``, the phase accumulated per unit of each parameter."""
        return float(self.N) ** self.k


def noon_family_amplitudes(fam: NoonFamily, chi: Sequence[float] | None = None) -> np.ndarray:
    """Amplitudes on the d+1 kets: reference mode first, then the estimated channels.

    Other Fock kets carry zero amplitude and do not affect the QFI, so the
    state is represented on this (d+1)-dimensional span only.
    """
    chi = np.zeros(fam.d) if chi is None else np.asarray(chi, dtype=float)
    ref = math.sqrt(max(0.0, 1.0 - fam.d * fam.eps**2))
    return np.concatenate([[ref], fam.eps * np.exp(1j * chi * fam.phase_scale)])


def qfi_noon_multi(fam: NoonFamily) -> QfiMatrix:
    """Closed form ``F_ij = 4 N^{2k} eps^2 (delta_ij - eps^2)``."""
    e2 = fam.eps**2
    return 4.0 * fam.phase_scale**2 * e2 * (np.eye(fam.d) - e2)


def qfi_phase_shift(psi: StateVector, k: int = 1) -> QfiMatrix:
    """Pure-state QFI for the phase imprint ``exp(i chi1 N1^k + i chi2 N2^k)``.

    Equals four times the covariance of ``(N1^k, N2^k)`` under ``|A|^2``.
    """
    p = psi.probabilities()
    g = np.column_stack([psi.basis.n1, psi.basis.n2]).astype(float) ** k
    mean = p @ g
    return 4.0 * ((g.T * p) @ g - np.outer(mean, mean))


def crb_overall(F: QfiMatrix) -> float:
    """Overall accuracy ``sqrt(Tr F^-1)`` from a Cholesky factorization."""
    F = np.atleast_2d(np.asarray(F, dtype=float))
    try:
        c = scipy.linalg.cho_factor(F)
    except np.linalg.LinAlgError as exc:
        raise SingularFisherError(f"Fisher matrix is not positive definite: {exc}") from None
    diag = np.abs(np.diag(c[0]))
    if diag.min() <= 1e-12 * diag.max():
        raise SingularFisherError("Fisher matrix is numerically singular")
    inv = scipy.linalg.cho_solve(c, np.eye(len(F)))
    return math.sqrt(float(np.trace(inv)))


def ghl(N: float, k: int = 1) -> float:
    """Generalized Heisenberg limit ``1 / N^k``."""
    return 1.0 / float(N) ** k


def balanced_bound(d: int, N: float, k: int = 1) -> float:
    return math.sqrt(d * (d + 1) / 2.0) / float(N) ** k


def optimized_bound(d: int, N: float, k: int = 1) -> float:
    return math.sqrt(d) * (math.sqrt(d) + 1.0) / (2.0 * float(N) ** k)


def optimized_eps(d: int) -> float:
    return 1.0 / math.sqrt(d + math.sqrt(d))


def sensitivity(sigma_chi: float, N: float, nu: int = 1) -> float:
    """Phase super-sensitivity ``S = 1 / (sqrt(nu N) sigma)``.

    Classical probes satisfy ``S <= 1``; the generalized Heisenberg limit
    caps it at ``N^(k - 1/2)``.
    """
    if sigma_chi <= 0:
        raise ValueError("sigma must be positive")
    if nu < 1:
        raise ValueError("need at least one trial")
    return 1.0 / (math.sqrt(nu * N) * sigma_chi)


def _amplitudes(x) -> np.ndarray:
    if isinstance(x, StateVector):
        return x.amplitudes
    return np.asarray(x, dtype=np.complex128)


def qfi_numeric(
    generator: Callable[[np.ndarray], StateVector | np.ndarray],
    chi0,
    h: float = 1e-5,
    richardson: bool = True,
    norm_tol: float = 1e-10,
) -> QfiMatrix:
    """Pure-state QFI from central differences of ``generator`` around ``chi0``.

    ``F_ij = 4 Re[<d_i psi|d_j psi> - <d_i psi|psi><psi|d_j psi>]``.  One
    Richardson step cancels the ``h^2`` error term.  Every generated state
    is renormalized; a norm that drifts from the norm at ``chi0`` by more
    than ``norm_tol`` raises ``ValueError``.
    """
    chi0 = np.atleast_1d(np.asarray(chi0, dtype=float))
    d = len(chi0)
    base = _amplitudes(generator(chi0.copy()))
    base_norm = np.linalg.norm(base)

    def state(chi):
        a = _amplitudes(generator(chi))
        nrm = np.linalg.norm(a)
        if abs(nrm - base_norm) > norm_tol:
            raise ValueError(f"generator norm drifted by {abs(nrm - base_norm):.2e}")
        return a / nrm

    def central(i, step):
        e = np.zeros(d)
        e[i] = step
        return (state(chi0 + e) - state(chi0 - e)) / (2.0 * step)

    psi = base / base_norm
    derivs = []
    for i in range(d):
        di = central(i, h)
        if richardson:
            di = (4.0 * central(i, h / 2.0) - di) / 3.0
        derivs.append(di)
    D = np.array(derivs)
    overlaps = D.conj() @ psi
    G = D.conj() @ D.T - np.outer(overlaps, overlaps.conj())
    F = 4.0 * G.real
    return 0.5 * (F + F.T)


def _branch_theta(lam: float, branch: str) -> float:
    if branch == "in":
        return stationary_phase_in(lam)
    if branch == "out":
        return stationary_phase_out(lam)
    raise ValueError(f"branch must be 'in' or 'out', got {branch!r}")


def noon_pm_state(N: int, lam: float, branch: str) -> StateVector:
    """Soliton N00N state with phases ``(0, N Theta, +/- N Theta)``.

    ``branch='in'`` gives equal phases on modes 2 and 3, ``'out'`` opposite ones.
    """
    theta = _branch_theta(lam, branch)
    sign = 1.0 if branch == "in" else -1.0
    return state_noon(basis_new(N), N * theta, sign * N * theta)


def dtheta_dlambda(lam: float, branch: str) -> float:
    """Slope of the stationary phase along its branch, by implicit differentiation."""
    theta = _branch_theta(lam, branch)
    s = math.sin(theta)
    if s < 1e-12:
        raise ValueError(f"dTheta/dLambda is singular at Lambda={lam} (sin Theta = {s:.1e})")
    if branch == "in":
        return -1.0 / (1.58 * s)
    return -1.0 / (2.0 * math.sqrt(1.124 + lam) * s)


class ChiAccuracy(NamedTuple):
    F: float
    sigma: float
    theta: float
    dtheta_dlambda: float
    near_singular: bool


def chi_qfi_pm(N: int, lam: float = LAMBDA_ZERO, branch: str = "out") -> ChiAccuracy:
    """QFI and accuracy for ``chi = Lambda / N^2`` carried by the branch phase.

    The phases ``N Theta`` on modes 2 and ``+/- N Theta`` on mode 3 move with
    ``d/dchi = N^2 d/dLambda``; ``F = 4 Var`` of those phase rates.
    """
    theta = _branch_theta(lam, branch)
    slope = dtheta_dlambda(lam, branch)
    rate = N**3 * slope  # d(N Theta)/dchi
    phase_rates = np.array([0.0, rate, rate if branch == "in" else -rate])
    weights = np.full(3, 1.0 / 3.0)
    mean = weights @ phase_rates
    F = 4.0 * float(weights @ (phase_rates - mean) ** 2)
    return ChiAccuracy(
        F=F,
        sigma=1.0 / math.sqrt(F),
        theta=theta,
        dtheta_dlambda=slope,
        near_singular=math.sin(theta) < 1e-3,
    )


def bound_table(d: int, N: int, k: int) -> list[dict]:
    """Benchmark accuracies for ``d`` phases; classical baselines for the d = 2 scheme."""
    from .loss import nql, sql

    rows = [
        {"d": d, "N": N, "k": k, "eps": "", "sigma": ghl(N, k), "label": "GHL"},
        {"d": d, "N": N, "k": k, "eps": 1.0 / math.sqrt(d + 1), "sigma": balanced_bound(d, N, k),
         "label": "balanced"},
        {"d": d, "N": N, "k": k, "eps": optimized_eps(d), "sigma": optimized_bound(d, N, k),
         "label": "optimized"},
    ]
    if d == 2 and k == 1:
        rows.append({"d": d, "N": N, "k": k, "eps": "", "sigma": sql(N), "label": "SQL"})
    if d == 2 and k == 3:
        rows.append({"d": d, "N": N, "k": k, "eps": "", "sigma": nql(N), "label": "NQL"})
    return rows


def bound_table_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["d", "N", "k", "eps", "sigma", "label"])
    for r in rows:
        eps = r["eps"] if r["eps"] == "" else repr(float(r["eps"]))
        w.writerow([r["d"], r["N"], r["k"], eps, repr(float(r["sigma"])), r["label"]])
    return buf.getvalue()
