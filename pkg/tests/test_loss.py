import math
from itertools import product

import numpy as np
import pytest

from soliton_sensornet.fock import StateVector, basis_ket, basis_new, state_noon
from soliton_sensornet.loss import (
    LossModel,
    b_coeff,
    classical_limit,
    fbs_apply_mode,
    loss_decompose,
    loss_triples,
    nil,
    nql,
    phase_shift,
    qfi_upper_bound,
    sigma_k,
    sigma_sweep,
    sil,
    sql,
    sweep_to_csv,
)
from soliton_sensornet.metrology import NoonFamily, qfi_noon_multi, qfi_numeric

from conftest import random_state


def brute_force_bound(psi, eta, k):
    """Convex-roof bound by explicit enumeration of every branch.

    Each branch vector is built from binomial amplitudes with math.comb, its
    QFI from the pure-state covariance formula, and the bound is the
    probability-weighted sum.  Shares no code with the vectorized path.
    """
    N = psi.N
    occ = [tuple(map(int, o)) for o in psi.basis.occupations()]
    amps = psi.amplitudes
    total = np.zeros((2, 2))
    p_sum = 0.0
    for l1, l2, l3 in product(range(N + 1), repeat=3):
        if l1 + l2 + l3 > N:
            continue
        vec = {}
        for (n1, n2, n3), a in zip(occ, amps):
            if l1 > n1 or l2 > n2 or l3 > n3:
                continue
            w = 1.0
            for n, l in ((n1, l1), (n2, l2), (n3, l3)):
                w *= math.comb(n, l) * eta ** (n - l) * (1 - eta) ** l
            vec[(n1, n2)] = a * math.sqrt(w)
        p = sum(abs(v) ** 2 for v in vec.values())
        p_sum += p
        if p == 0:
            continue
        g = np.array([[n1**k, n2**k] for n1, n2 in vec], dtype=float)
        q = np.array([abs(v) ** 2 for v in vec.values()]) / p
        mean = q @ g
        total += p * 4 * ((g.T * q) @ g - np.outer(mean, mean))
    return total, p_sum


def test_fbs_weights():
    assert np.allclose(fbs_apply_mode(2, 0.5), [0.25, 0.5, 0.25])
    assert np.array_equal(fbs_apply_mode(5, 1.0), [1, 0, 0, 0, 0, 0])
    for m in (0, 1, 7, 40):
        for eta in (0.1, 0.5, 0.97):
            assert fbs_apply_mode(m, eta).sum() == pytest.approx(1.0, abs=1e-14)


def test_b_coeff_examples():
    assert b_coeff(3, 2, 1, 0, 0, 0, 1.0) == 1.0
    assert b_coeff(2, 0, 0, 1, 0, 0, 0.5) == pytest.approx(0.5)
    assert b_coeff(2, 0, 0, 3, 0, 0, 0.5) == 0.0
    assert b_coeff(2, 0, 0, 1, 0, 0, 1.0) == 0.0


def test_b_coeff_large_n_stays_finite():
    # direct factorials overflow long before this
    v = b_coeff(400, 300, 300, 200, 150, 150, 0.5)
    assert 0 < v < 1


def test_loss_model_validation():
    for bad in (0.0, -0.2, 1.5):
        with pytest.raises(ValueError):
            LossModel(bad)


def test_phase_shift_examples(rng):
    psi = random_state(rng, 5)
    assert np.array_equal(phase_shift(psi, 0.0, 0.0).amplitudes, psi.amplitudes)
    chi = 0.37
    out = phase_shift(psi, chi, chi, 1)
    assert np.allclose(np.abs(out.amplitudes), np.abs(psi.amplitudes))
    n12 = psi.basis.n1 + psi.basis.n2
    assert np.allclose(out.amplitudes, psi.amplitudes * np.exp(1j * chi * n12))


def test_loss_triples_count():
    assert len(loss_triples(20)) == 1771
    assert len(loss_triples(2)) == 10
    assert loss_triples(1).tolist() == [[0, 0, 0], [0, 0, 1], [0, 1, 0], [1, 0, 0]]


def test_lossless_single_branch(rng):
    psi = random_state(rng, 4)
    dec = loss_decompose(psi, 1.0, 0.2, -0.4, 2)
    live = [b for b in dec.branches if b.p > 0]
    assert len(live) == 1 and live[0].lost == (0, 0, 0)
    assert live[0].p == pytest.approx(1.0, abs=1e-14)
    assert np.allclose(live[0].xi.amplitudes, phase_shift(psi, 0.2, -0.4, 2).amplitudes)


def test_single_ket_is_pure_binomial():
    N, eta = 9, 0.7
    dec = loss_decompose(basis_ket(basis_new(N), N, 0), eta)
    for l1 in range(N + 1):
        expected = math.comb(N, l1) * eta ** (N - l1) * (1 - eta) ** l1
        assert dec.branch(l1, 0, 0).p == pytest.approx(expected, rel=1e-12)
    assert dec.branch(0, 1, 0).p == 0.0
    with pytest.raises(KeyError):
        dec.branch(N, 1, 0)


@pytest.mark.parametrize("eta", [0.5, 0.9, 0.99])
def test_branch_normalization_random_states(rng, eta):
    for N in (1, 3, 8, 20):
        dec = loss_decompose(random_state(rng, N), eta, 0.3, 0.1)
        assert abs(dec.probabilities().sum() - 1) < 1e-12
        for b in dec.branches:
            if b.xi is not None:
                assert abs(np.linalg.norm(b.xi.amplitudes) - 1) < 1e-10
                assert b.xi.N == N - sum(b.lost)


def test_ground_state_branch_normalization(ground_n20_l35):
    dec = loss_decompose(ground_n20_l35, 0.9)
    assert len(dec.branches) == 1771
    assert abs(dec.probabilities().sum() - 1) < 1e-12


def test_upper_bound_lossless_equals_pure_qfi(rng):
    worst = 0.0
    for _ in range(50):
        N = int(rng.integers(1, 13))
        k = int(rng.integers(1, 4))
        psi = random_state(rng, N)
        F = qfi_upper_bound(psi, 1.0, k)
        ref = qfi_numeric(lambda chi: phase_shift(psi, chi[0], chi[1], k), [0.0, 0.0], h=1e-3 / N**k)
        worst = max(worst, np.max(np.abs(F - ref)) / max(np.abs(ref).max(), 1e-300))
    assert worst < 1e-8


def test_upper_bound_balanced_noon():
    N = 20
    F = qfi_upper_bound(state_noon(basis_new(N)), 1.0, 1)
    assert np.allclose(F, qfi_noon_multi(NoonFamily(2, 1 / math.sqrt(3), N)), rtol=1e-12)
    assert sigma_k(F) == pytest.approx(math.sqrt(3) / N, rel=1e-12)


def test_upper_bound_matches_decomposition(rng):
    # the phase is imprinted before loss, so each branch is differentiated in chi
    # directly rather than through the post-loss occupations
    psi = random_state(rng, 4)
    eta, k = 0.8, 2
    dec = loss_decompose(psi, eta, k=k)
    F = np.zeros((2, 2))
    for b in dec.branches:
        if b.xi is None:
            continue

        def gen(chi, lost=b.lost):
            return loss_decompose(psi, eta, chi[0], chi[1], k).branch(*lost).xi

        F += b.p * qfi_numeric(gen, [0.0, 0.0], h=1e-3 / 4**k)
    assert np.allclose(qfi_upper_bound(psi, eta, k), F, rtol=1e-8, atol=1e-8)


@pytest.mark.parametrize("eta", [0.3, 0.75, 0.95])
@pytest.mark.parametrize("k", [1, 3])
def test_n2_brute_force_oracle(rng, eta, k):
    psi = random_state(rng, 2)
    oracle, p_sum = brute_force_bound(psi, eta, k)
    assert p_sum == pytest.approx(1.0, abs=1e-14)
    assert np.max(np.abs(qfi_upper_bound(psi, eta, k) - oracle)) < 1e-8


def test_upper_bound_does_not_depend_on_imprinted_phase(rng):
    psi = random_state(rng, 5)
    a = qfi_upper_bound(psi, 0.7, 2)
    b = qfi_upper_bound(phase_shift(psi, 0.9, -1.3, 2), 0.7, 2)
    assert np.allclose(a, b, rtol=1e-12)


def test_accuracy_degrades_with_loss(ground_n20_l35):
    sig = [sigma_k(qfi_upper_bound(ground_n20_l35, eta, 1)) for eta in (1.0, 0.99, 0.9, 0.8, 0.6)]
    assert all(b > a for a, b in zip(sig, sig[1:]))


def test_sigma_k_examples():
    assert sigma_k(np.diag([8.0, 8.0])) == pytest.approx(0.5)


def test_classical_limits():
    assert sil(20, 0.9) == pytest.approx(0.40825, abs=1e-5)
    assert nil(20, 0.9) == pytest.approx(3.0619e-3, rel=1e-4)
    assert sql(20) == pytest.approx(math.sqrt(3 / 20))
    assert nql(20) == pytest.approx(math.sqrt(27 / 20**5))
    assert classical_limit(20, 0.9, 1) == sil(20, 0.9)
    assert classical_limit(20, 0.9, 3) == nil(20, 0.9)
    # the general-k expression agrees with the NIL at k = 3
    assert sil(20, 0.9) * (3 / 20) ** 2 / 3 == pytest.approx(nil(20, 0.9), rel=1e-12)


def test_sigma_sweep_rows():
    rows = sigma_sweep(6, 1, [0.0, 4.0], [1.0, 0.9], workers=1)
    assert [(r["Lambda"], r["eta"]) for r in rows] == [(0.0, 1.0), (0.0, 0.9), (4.0, 1.0), (4.0, 0.9)]
    assert all(r["error"] is None and np.isfinite(r["sigma"]) for r in rows)
    assert rows[1]["sigma"] > rows[0]["sigma"]
    text = sweep_to_csv(rows)
    assert text.splitlines()[0] == "Lambda,eta,N,k,sigma,sigma_GHL,sigma_OS,sigma_classical"
    assert len(text.splitlines()) == 5


def test_sigma_sweep_parallel_matches_serial():
    serial = sigma_sweep(5, 3, [0.0, 2.0, 5.0], [0.9], workers=1)
    parallel = sigma_sweep(5, 3, [0.0, 2.0, 5.0], [0.9], workers=2)
    assert sweep_to_csv(serial) == sweep_to_csv(parallel)


def test_sigma_sweep_rejects_bad_grid():
    with pytest.raises(ValueError):
        sigma_sweep(5, 1, [], [1.0])
    with pytest.raises(ValueError):
        sigma_sweep(5, 1, [1.0], [1.2])


def test_sigma_sweep_records_point_errors(monkeypatch):
    import soliton_sensornet.loss as loss

    def boom(psi, eta, k):
        raise loss.SingularFisherError("singular")

    monkeypatch.setattr(loss, "sigma_point", boom)
    rows = sigma_sweep(3, 1, [0.0, 1.0], [0.9], workers=1)
    assert len(rows) == 2
    assert all(math.isnan(r["sigma"]) and "singular" in r["error"] for r in rows)
    assert "nan" in sweep_to_csv(rows)


def test_statevector_roundtrip_through_branch():
    psi = StateVector(basis_new(1), np.array([0.6, 0.8, 0.0]))
    dec = loss_decompose(psi, 0.5)
    assert dec.branch(0, 0, 0).xi.N == 1
    assert dec.branch(0, 0, 1).xi.N == 0
