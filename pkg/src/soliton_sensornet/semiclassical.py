"""Hartree (variational) model of three tunnel-coupled bright solitons.

State variables are the population fractions ``n_j`` and the relative phases
``Theta_ij = theta_j - theta_i`` for the cyclic pairs (12, 23, 31).  Energies
are per particle in units of ``2 kappa``; time is ``tau = 2 kappa t``.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import solve_ivp, trapezoid

__all__ = [
    "PhysicalParams",
    "SemiclassicalState",
    "SingularStateError",
    "LAMBDA_MAX_STATIONARY",
    "heff",
    "heff_raw",
    "eom_rhs",
    "eom_rhs_raw",
    "integrate",
    "stationary_phase_out",
    "stationary_phase_in",
    "phase_consistency",
    "reduced_residual",
    "soliton_waveform",
    "waveform_norm",
    "trajectory_to_csv",
]

# upper end of the existence range of both stationary N00N branches
LAMBDA_MAX_STATIONARY = 2.08

_PAIRS = ((0, 1), (1, 2), (2, 0))


class SingularStateError(ValueError):
    """Some pair population ``n_i + n_j`` vanished, so ``z_ij`` is undefined."""


@dataclass(frozen=True)
class PhysicalParams:
    """Nonlinearity ``u``, tunneling ``kappa``, particle number ``N``."""

    u: float
    kappa: float
    N: int

    def __post_init__(self):
        if self.u < 0:
            raise ValueError("u must be >= 0")
        if self.kappa <= 0:
            raise ValueError("kappa must be > 0")
        if self.N < 1:
            raise ValueError("N must be >= 1")

    @property
    def lam(self) -> float:
        return self.u**2 * (self.N - 1) ** 2 / (16.0 * self.kappa)

    @property
    def chi(self) -> float:
        """The estimand ``Lambda / N^2``."""
        return self.lam / self.N**2

    @classmethod
    def from_lambda(cls, lam: float, kappa: float, N: int) -> "PhysicalParams":
        if N < 2:
            raise ValueError("Lambda does not determine u for N = 1")
        return cls(u=math.sqrt(16.0 * kappa * lam) / (N - 1), kappa=kappa, N=N)


@dataclass(frozen=True)
class SemiclassicalState:
    n: tuple[float, float, float]
    theta: tuple[float, float, float]  # (Theta12, Theta23, Theta31)

    def __post_init__(self):
        n = tuple(float(x) for x in self.n)
        th = tuple(float(x) for x in self.theta)
        if len(n) != 3 or len(th) != 3:
            raise ValueError("need three populations and three relative phases")
        object.__setattr__(self, "n", n)
        object.__setattr__(self, "theta", th)

    def check(self, tol: float = 1e-10) -> None:
        """Raise if the normalization or phase-closure constraint is broken."""
        if min(self.n) < -tol:
            raise ValueError(f"negative population in {self.n}")
        if abs(sum(self.n) - 1.0) > tol:
            raise ValueError(f"populations sum to {sum(self.n)}, not 1")
        s = sum(self.theta)
        if abs(math.remainder(s, 2 * math.pi)) > tol:
            raise ValueError(f"relative phases sum to {s}, not 0 mod 2pi")

    @classmethod
    def from_absolute(cls, n, theta_abs) -> "SemiclassicalState":
        t1, t2, t3 = theta_abs
        return cls(tuple(n), (t2 - t1, t3 - t2, t1 - t3))

    def absolute_phases(self) -> np.ndarray:
        """Phases with ``theta_1 = 0`` (mode 1 as reference)."""
        t12, t23, _ = self.theta
        return np.array([0.0, t12, t12 + t23])

    def as_array(self) -> np.ndarray:
        return np.array(self.n + self.theta)

    @classmethod
    def from_array(cls, y) -> "SemiclassicalState":
        return cls(tuple(y[:3]), tuple(y[3:]))

    def imbalance(self, i: int, j: int) -> float:
        """``z_ij = (n_j - n_i) / (n_i + n_j)``, 0 on an empty pair."""
        s = self.n[i] + self.n[j]
        return 0.0 if s == 0 else (self.n[j] - self.n[i]) / s


def _overlap(nij: float, z: float) -> float:
    return nij * (1.0 - z * z) * (1.0 - 0.21 * z * z)


def heff_raw(n, theta_abs, lam: float) -> float:
    """Energy per particle for unconstrained populations and absolute phases.

    Used directly for gradient checks; empty pairs contribute nothing.
    """
    total = 0.0
    for j in range(3):
        total += lam / 3.0 * n[j] ** 3
        for i in range(3):
            if i == j:
                continue
            nij = n[i] + n[j]
            if nij == 0:
                continue
            z = (n[j] - n[i]) / nij
            total += 0.25 * _overlap(nij, z) * math.cos(theta_abs[j] - theta_abs[i])
    return -total


def heff(s: SemiclassicalState, lam: float) -> float:
    return heff_raw(s.n, s.absolute_phases(), lam)


def eom_rhs_raw(y: np.ndarray, lam: float) -> np.ndarray:
    """Time derivatives of ``(n1, n2, n3, Theta12, Theta23, Theta31)``.

    Written for the pair (1, 2) with mode 3 as the spectator and rotated
    cyclically for the other two pairs.
    """
    n = y[:3]
    th = y[3:]
    out = np.empty(6)
    nn = [n[a] + n[b] for a, b in _PAIRS]
    if min(nn) <= 0:
        raise SingularStateError(f"empty soliton pair in populations {tuple(n)}")
    z = [(n[b] - n[a]) / s for (a, b), s in zip(_PAIRS, nn)]
    # w[p] = (1 - z^2)(1 - 0.21 z^2);  g[p] = 1.21 - 0.42 z^2
    w = [(1 - zz * zz) * (1 - 0.21 * zz * zz) for zz in z]
    g = [1.21 - 0.42 * zz * zz for zz in z]
    for r in range(3):
        # pair indices for (12), (23), (31) rotated by r
        p12, p23, p31 = r, (r + 1) % 3, (r + 2) % 3
        spectator = (r + 2) % 3  # mode "3" in the rotated frame
        out[r] = (
            0.5 * nn[p31] * w[p31] * math.sin(th[p31])
            - 0.5 * nn[p12] * w[p12] * math.sin(th[p12])
        )
        out[3 + r] = (
            lam * nn[p12] ** 2 * z[p12]
            - 2.0 * z[p12] * g[p12] * math.cos(th[p12])
            + (0.5 * w[p23] + 2.0 * n[spectator] * z[p23] / nn[p23] * g[p23]) * math.cos(th[p23])
            - (0.5 * w[p31] - 2.0 * n[spectator] * z[p31] / nn[p31] * g[p31]) * math.cos(th[p31])
        )
    return out


def eom_rhs(s: SemiclassicalState, lam: float) -> SemiclassicalState:
    """Derivatives wrapped in a state container (fields hold ``d/dtau`` values)."""
    d = eom_rhs_raw(s.as_array(), lam)
    return SemiclassicalState(tuple(d[:3]), tuple(d[3:]))


def integrate(
    s0: SemiclassicalState,
    lam: float,
    tau_end: float,
    tol: float = 1e-8,
    n_out: int = 101,
) -> list[tuple[float, SemiclassicalState]]:
    """Adaptive Runge-Kutta trajectory sampled at ``n_out`` evenly spaced times.

    The integrator runs two to three orders of magnitude tighter than ``tol``
    so energy and normalization drift over the run stay below it.  Phases are
    not wrapped.
    """
    s0.check(1e-8)
    y0 = s0.as_array()
    t_eval = np.linspace(0.0, tau_end, n_out)
    rt = min(tol * 1e-3, 1e-6)

    def rhs(_t, y):
        return eom_rhs_raw(y, lam)

    def near_singular(_t, y):
        return min(y[0] + y[1], y[1] + y[2], y[2] + y[0]) - 1e-12

    near_singular.terminal = True
    sol = solve_ivp(
        rhs, (0.0, tau_end), y0, method="DOP853", t_eval=t_eval,
        rtol=rt, atol=rt * 1e-2, events=near_singular,
    )
    if sol.status == 1:
        raise SingularStateError(f"a soliton pair emptied at tau = {sol.t_events[0][0]:.6g}")
    if sol.status != 0:
        raise RuntimeError(f"semiclassical integration failed: {sol.message}")
    return [(float(t), SemiclassicalState.from_array(sol.y[:, i])) for i, t in enumerate(sol.t)]


def _check_branch_range(lam: float) -> None:
    if not 0.0 <= lam <= LAMBDA_MAX_STATIONARY:
        raise ValueError(
            f"stationary N00N branches exist only for 0 <= Lambda <= {LAMBDA_MAX_STATIONARY}, got {lam}"
        )


def _acos_clipped(c: float) -> float:
    # rounded constants push cos slightly past 1 at the branch end
    return math.acos(min(1.0, max(-1.0, c)))


def stationary_phase_out(lam: float) -> float:
    """Out-of-phase branch ``Theta_-``: ``cos = sqrt(1.124 + Lambda) - 0.79``."""
    _check_branch_range(lam)
    return _acos_clipped(math.sqrt(1.124 + lam) - 0.79)


def stationary_phase_in(lam: float) -> float:
    """In-phase branch ``Theta_+``: ``cos = (Lambda - 0.5) / 1.58``."""
    _check_branch_range(lam)
    return _acos_clipped((lam - 0.5) / 1.58)


def phase_consistency(lam: float, theta23: float) -> float:
    """``cos Theta12 = cos Theta31`` implied by ``Theta23`` in the one-soliton limit."""
    return (lam - 0.5 * math.cos(theta23)) / 1.58


def branch_state(lam: float, branch: str, delta: float) -> SemiclassicalState:
    """Stationary candidate with ``n = (1 - 2 delta, delta, delta)`` on a branch."""
    if branch == "in":
        t = stationary_phase_in(lam)
        theta = (t, 0.0, -t)
    elif branch == "out":
        t = stationary_phase_out(lam)
        theta = (t, -2.0 * t, t)
    else:
        raise ValueError(f"branch must be 'in' or 'out', got {branch!r}")
    return SemiclassicalState((1.0 - 2.0 * delta, delta, delta), theta)


def reduced_residual(lam: float, branch: str, delta: float = 1e-6) -> float:
    """Largest ``|d/dtau|`` at a branch point, Richardson-extrapolated to ``delta -> 0``."""
    r1 = eom_rhs_raw(branch_state(lam, branch, delta).as_array(), lam)
    r2 = eom_rhs_raw(branch_state(lam, branch, delta / 2).as_array(), lam)
    return float(np.max(np.abs(2.0 * r2 - r1)))


def soliton_waveform(n_j: float, theta_j: float, u: float, N: int, x) -> np.ndarray:
    """Sampled sech soliton of one well at population fraction ``n_j``."""
    x = np.asarray(x, dtype=float)
    if n_j == 0:
        return np.zeros_like(x, dtype=np.complex128)
    a = u * (N - 1) / 2.0
    amp = n_j * math.sqrt(u * (N - 1)) / 2.0
    return amp / np.cosh(a * n_j * x) * np.exp(1j * theta_j)


def waveform_norm(psi: np.ndarray, x: np.ndarray) -> float:
    """Trapezoidal ``int |psi|^2 dx`` on the sample grid."""
    return float(trapezoid(np.abs(psi) ** 2, x))


def trajectory_to_csv(traj, lam: float) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["tau", "n1", "n2", "n3", "Theta12", "Theta23", "Theta31", "Heff"])
    for t, s in traj:
        w.writerow([repr(t), *map(repr, s.n), *map(repr, s.theta), repr(heff(s, lam))])
    return buf.getvalue()
