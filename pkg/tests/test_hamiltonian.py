import math

import numpy as np
import pytest

from soliton_sensornet.fock import basis_ket, basis_new, cyclic_permutation, state_noon
from soliton_sensornet.hamiltonian import (
    TmsjjParams,
    alpha,
    beta,
    build_hamiltonian,
    detect_lambda_cr,
    edge_population,
    evolve,
    ground_state,
    noon_fidelity,
    rayleigh_quotient,
    spectrum,
)

from conftest import random_state


def jacobi_eigenvalues(a, tol=1e-15, max_sweeps=100):
    """Cyclic Jacobi rotations; independent of LAPACK, used only as an oracle."""
    a = np.array(a, dtype=float)
    n = len(a)
    for _ in range(max_sweeps):
        off = math.sqrt(sum(a[p, q] ** 2 for p in range(n) for q in range(n) if p != q))
        if off < tol:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                if a[p, q] == 0.0:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * a[p, q])
                t = math.copysign(1.0, theta) / (abs(theta) + math.sqrt(theta * theta + 1.0))
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c
                rot = np.eye(n)
                rot[p, p] = rot[q, q] = c
                rot[p, q] = s
                rot[q, p] = -s
                a = rot.T @ a @ rot
    return np.sort(np.diag(a))


def test_alpha_examples():
    assert alpha(20, 0, 20, 1.7) == pytest.approx(-1.7 / 3, rel=1e-15)
    assert alpha(1, 1, 3, 2.0) == pytest.approx(-2.0 / 27, rel=1e-15)
    assert alpha(7, 7, 20, 3.3) == pytest.approx(-0.124025, rel=1e-12)


def test_beta_examples():
    assert beta(2, 0, 2) == pytest.approx(-math.sqrt(2) * 0.79 / 8, rel=1e-14)
    assert beta(1, 1, 3) == pytest.approx(-math.sqrt(2) * 0.79 / 12, rel=1e-14)
    assert beta(0, 0, 5) == 0.0
    # nothing to hop out of an empty mode
    assert beta(0, 3, 5) == 0.0


@pytest.mark.parametrize("N", [1, 2, 3, 7, 20, 40])
def test_matrix_is_exactly_symmetric(N):
    H = build_hamiltonian(TmsjjParams(N, 2.3)).dense()
    assert np.array_equal(H, H.T)


def test_sparsity_at_most_seven_per_row():
    H = build_hamiltonian(TmsjjParams(20, 1.0))
    per_row = np.diff(H.matrix.indptr)
    assert per_row.max() <= 7
    assert H.matrix.nnz < 7 * H.dim


def test_n1_circulant():
    # N=1: constant diagonal -Lambda/3 and equal hops b; eigenvalues -L/3 + 2b, -L/3 - b (twice)
    lam = 0.8
    H = build_hamiltonian(TmsjjParams(1, lam)).dense()
    b = H[0, 1]
    assert np.allclose(H[~np.eye(3, dtype=bool)], b)
    assert np.allclose(np.diag(H), -lam / 3)
    w = spectrum(build_hamiltonian(TmsjjParams(1, lam))).eigenvalues
    assert np.allclose(w, sorted([-lam / 3 + 2 * b, -lam / 3 - b, -lam / 3 - b]), atol=1e-14)
    sym = state_noon(basis_new(1))
    H1 = build_hamiltonian(TmsjjParams(1, lam))
    assert rayleigh_quotient(H1, sym) == pytest.approx(w[0], abs=1e-15)


@pytest.mark.parametrize("lam", [0.0, 1.3, 3.5, 7.0])
def test_n2_matches_jacobi_oracle(lam):
    H = build_hamiltonian(TmsjjParams(2, lam)).dense()
    assert np.max(np.abs(spectrum(build_hamiltonian(TmsjjParams(2, lam))).eigenvalues - jacobi_eigenvalues(H))) < 1e-10


def test_commutes_with_cyclic_relabeling(rng):
    H = build_hamiltonian(TmsjjParams(9, 2.1))
    psi = random_state(rng, 9)
    lhs = cyclic_permutation(psi).amplitudes
    Hp = H.apply(lhs)
    pH = cyclic_permutation(type(psi)(psi.basis, H.apply(psi.amplitudes))).amplitudes
    assert np.allclose(Hp, pH, atol=1e-14)


def test_trace_identity():
    # the trace is the sum of the diagonal alphas
    N, lam = 12, 2.5
    H = build_hamiltonian(TmsjjParams(N, lam))
    expected = sum(alpha(a, b, N, lam) for a, b in basis_new(N).states.tolist())
    assert H.trace() == pytest.approx(expected, rel=1e-13)
    assert spectrum(H).eigenvalues.sum() == pytest.approx(expected, rel=1e-12)


def test_spectrum_vectors_are_eigenpairs():
    H = build_hamiltonian(TmsjjParams(8, 1.9))
    res = spectrum(H, want_vectors=True)
    D = H.dense()
    assert np.allclose(D @ res.eigenvectors, res.eigenvectors * res.eigenvalues, atol=1e-12)
    assert np.all(np.diff(res.eigenvalues) >= 0)
    assert np.allclose(res.energies_per_particle, 2 * res.eigenvalues)


def test_n00n_energy_is_exact():
    for lam in (0.5, 2.0, 5.0):
        H = build_hamiltonian(TmsjjParams(20, lam))
        e = rayleigh_quotient(H, state_noon(basis_new(20)))
        assert 2 * e == pytest.approx(-2 * lam / 3, rel=1e-12)


def test_ground_state_is_variational_minimum(rng):
    H = build_hamiltonian(TmsjjParams(10, 2.0))
    gs = ground_state(H)
    for _ in range(20):
        assert rayleigh_quotient(H, random_state(rng, 10)) >= gs.energy - 1e-12
    a = gs.state.amplitudes
    assert np.linalg.norm(H.apply(a) - gs.energy * a) < 1e-9


def test_ground_state_residual_small_random_lambda(rng):
    for lam in rng.uniform(0, 6, size=5):
        H = build_hamiltonian(TmsjjParams(6, float(lam)))
        gs = ground_state(H)
        a = gs.state.amplitudes
        assert np.linalg.norm(H.apply(a) - gs.energy * a) <= 1e-9


def test_ground_state_lambda0_gaussian_like(ground_n20_l0):
    p = ground_n20_l0.probabilities()
    peak = ground_n20_l0.basis.state_of(int(np.argmax(p)))
    assert max(abs(peak[0] - 20 / 3), abs(peak[1] - 20 / 3)) < 1.5
    assert noon_fidelity(ground_n20_l0) < 0.05
    # Perron-Frobenius: nonnegative after the phase convention
    assert np.all(ground_n20_l0.amplitudes.real > -1e-12)


def test_ground_state_energy_lambda0():
    gs = ground_state(build_hamiltonian(TmsjjParams(20, 0.0)))
    assert gs.energy_per_particle == pytest.approx(-1.911, rel=5e-3)


def test_ground_state_above_transition_on_edges():
    gs = ground_state(build_hamiltonian(TmsjjParams(20, 3.305)))
    assert gs.state.edge_population() >= 0.5
    gs = ground_state(build_hamiltonian(TmsjjParams(20, 3.5)))
    assert gs.state.edge_population() >= 0.9


def test_ground_state_is_cyclically_symmetric_when_degenerate():
    gs = ground_state(build_hamiltonian(TmsjjParams(20, 6.0)))
    assert gs.degenerate
    assert len(gs.cluster) >= 2
    moved = cyclic_permutation(gs.state).amplitudes
    assert np.allclose(moved, gs.state.amplitudes, atol=1e-8)
    assert noon_fidelity(gs.state) > 0.99


def test_lanczos_path_agrees_with_dense(monkeypatch):
    import soliton_sensornet.hamiltonian as ham

    H = build_hamiltonian(TmsjjParams(15, 1.2))
    dense = ground_state(H)
    monkeypatch.setattr(ham, "DENSE_MAX_DIM", 10)
    sparse = ground_state(H)
    assert sparse.energy == pytest.approx(dense.energy, abs=1e-10)
    assert abs(abs(np.vdot(sparse.state.amplitudes, dense.state.amplitudes)) - 1) < 1e-8


def test_evolve_eigenvector_picks_up_phase():
    H = build_hamiltonian(TmsjjParams(6, 1.5))
    gs = ground_state(H)
    tau = 3.0
    out = evolve(gs.state, H, tau, tol=1e-10)
    expected = gs.state.amplitudes * np.exp(-1j * gs.energy * tau)
    assert np.max(np.abs(out.amplitudes - expected)) < 1e-8


def test_evolve_conserves_norm_and_energy(rng):
    H = build_hamiltonian(TmsjjParams(6, 2.0))
    psi = random_state(rng, 6)
    out = evolve(psi, H, 5.0, tol=1e-10)
    assert np.linalg.norm(out.amplitudes) == pytest.approx(1.0, abs=1e-8)
    assert rayleigh_quotient(H, out) == pytest.approx(rayleigh_quotient(H, psi), abs=1e-8)
    back = evolve(out, H, -5.0, tol=1e-10)
    assert np.max(np.abs(back.amplitudes - psi.amplitudes)) < 1e-7


def test_evolve_rejects_mismatched_n(rng):
    with pytest.raises(ValueError):
        evolve(random_state(rng, 3), TmsjjParams(4, 1.0), 1.0)


def test_noon_fidelity_examples():
    b = basis_new(20)
    assert noon_fidelity(state_noon(b)) == pytest.approx(1.0, abs=1e-14)
    assert noon_fidelity(basis_ket(b, 20, 0)) == pytest.approx(1 / 3, abs=1e-14)


def test_params_validation():
    with pytest.raises(ValueError):
        TmsjjParams(0, 1.0)
    with pytest.raises(ValueError):
        TmsjjParams(5, -0.1)
    with pytest.raises(ValueError):
        TmsjjParams(5, 1.0, kappa=0.0)


def test_edge_population_increases_through_transition():
    pops = [edge_population(20, lam) for lam in (2.5, 3.0, 3.3, 3.6, 4.0)]
    assert all(b > a for a, b in zip(pops, pops[1:]))


def test_detect_lambda_cr_no_crossing():
    with pytest.raises(ValueError, match="no crossing"):
        detect_lambda_cr(20, 0.0, 1.0)


def test_detect_lambda_cr_small_n():
    lam_cr = detect_lambda_cr(8, 1.0, 8.0, tol_lam=1e-4)
    assert edge_population(8, lam_cr - 1e-3) < 0.5 < edge_population(8, lam_cr + 1e-3)


def test_superposition_regime_at_transition():
    # the crossover is sharp: edge weight goes 0.11 -> 0.81 between 3.30272 and 3.303
    gs = ground_state(build_hamiltonian(TmsjjParams(20, 3.30272)))
    centre = gs.state.basis.index_of(7, 7)
    assert gs.state.edge_population() > 0.05
    assert gs.state.probabilities()[centre] > 0.01


def test_ground_line_joins_noon_line_near_transition():
    def excess(lam):
        # how far the ground line sits below the N00N energy -2 Lambda / 3
        return -2 * lam / 3 - 2 * ground_state(build_hamiltonian(TmsjjParams(20, lam))).energy

    below = (excess(3.0) - excess(3.25)) / 0.25
    above = (excess(3.35) - excess(3.6)) / 0.25
    # steep approach before the transition, parallel (dressed edge states) after
    assert below > 0.5
    assert abs(above) < 0.01
    assert 0 < excess(3.6) < 0.02
