import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bosonic_ot.fock import trace_norm
from bosonic_ot.qubit import (
    PAULI_I,
    PAULI_X,
    PAULI_Z,
    LocalRecoveryScheme,
    QubitSystem,
    decay_bound,
    decay_threshold,
    depolarize,
    depolarize_apply,
    depolarizing_threshold,
    embed_qubit_op,
    identity_gadget,
    parity_refresh_gadget,
    partial_trace_qubit,
    qubit_lipschitz,
    random_local_channel,
    random_scheme,
    noisy_recovery_experiment,
    recovery_apply,
    reset_gadget,
    w1_dual,
)


def random_density(n, rng, rank=None):
    d = 2**n
    rank = d if rank is None else rank
    G = rng.normal(size=(d, rank)) + 1j * rng.normal(size=(d, rank))
    rho = G @ G.conj().T
    return rho / np.trace(rho).real


def random_hermitian(n, rng):
    A = rng.normal(size=(2**n, 2**n)) + 1j * rng.normal(size=(2**n, 2**n))
    return (A + A.conj().T) / 2


def test_system_limits():
    assert QubitSystem(3).dim == 8
    with pytest.raises(ValueError):
        QubitSystem(5)
    with pytest.raises(ValueError):
        QubitSystem(0)


def test_embedding_and_partial_trace_ordering():
    Z0 = embed_qubit_op(PAULI_Z, [0], 2)
    assert np.allclose(Z0, np.kron(PAULI_I, PAULI_Z))
    # the first listed site is the fast factor of the local operator
    XZ = embed_qubit_op(np.kron(PAULI_X, PAULI_Z), [1, 0], 3)
    assert np.allclose(XZ, np.kron(PAULI_I, np.kron(PAULI_Z, PAULI_X)))
    rng = np.random.default_rng(0)
    a, b = random_density(1, rng), random_density(1, rng)
    assert np.allclose(partial_trace_qubit(np.kron(b, a), 0, 2), b)
    assert np.allclose(partial_trace_qubit(np.kron(b, a), 1, 2), a)


def test_lipschitz_single_qubit_z():
    rep = qubit_lipschitz(PAULI_Z, QubitSystem(1))
    assert rep.lipschitz_hi == pytest.approx(2.0)
    assert rep.lipschitz_lo == pytest.approx(2.0)


def test_lipschitz_identity_is_zero():
    rep = qubit_lipschitz(np.eye(4), QubitSystem(2))
    assert rep.lipschitz_hi <= 1e-8


def test_lipschitz_of_local_observable():
    X = embed_qubit_op(PAULI_Z, [1], 2)
    rep = qubit_lipschitz(X, QubitSystem(2))
    assert rep.hi[0] <= 1e-6
    assert rep.lo[1] == pytest.approx(1.0, abs=1e-4) and rep.hi[1] == pytest.approx(1.0, abs=1e-4)
    assert rep.lipschitz_hi == pytest.approx(2.0, abs=2e-4)


def test_lipschitz_rejects_non_hermitian():
    with pytest.raises(ValueError):
        qubit_lipschitz(np.triu(np.ones((4, 4))), QubitSystem(2))


def test_lipschitz_single_qubit_matches_scalar_search():
    rng = np.random.default_rng(1)
    X = random_hermitian(1, rng)
    cs = np.linspace(-5, 5, 200001)
    w = np.linalg.eigvalsh(X)
    brute = np.min(np.maximum(np.abs(w[0] - cs), np.abs(w[1] - cs)))
    assert qubit_lipschitz(X, QubitSystem(1)).hi[0] == pytest.approx(brute, abs=1e-4)


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(2, 3))
def test_lipschitz_brackets_are_consistent(seed, n):
    rng = np.random.default_rng(seed)
    X = random_hermitian(n, rng)
    rep = qubit_lipschitz(X, QubitSystem(n))
    scale = max(1.0, np.abs(np.linalg.eigvalsh(X)).max())
    assert np.all(rep.lo <= rep.hi + 1e-12)
    assert np.all(rep.gaps <= 1e-4 * scale)
    for site, W in enumerate(rep.witnesses):
        # witnesses are dual feasible: unit trace norm and vanishing partial trace
        assert trace_norm(W) == pytest.approx(1.0, abs=1e-9)
        assert np.abs(partial_trace_qubit(W, site, n)).max() <= 1e-9


def test_w1_equal_states():
    rho = random_density(2, np.random.default_rng(2))
    assert w1_dual(rho, rho, QubitSystem(2)).lower_bound == 0.0


def test_w1_orthogonal_single_qubit():
    rho, sigma = np.diag([1.0, 0]).astype(complex), np.diag([0, 1.0]).astype(complex)
    est = w1_dual(rho, sigma, QubitSystem(1))
    assert est.lower_bound >= 0.999


def test_w1_two_qubit_pure_pair_in_sandwich():
    rng = np.random.default_rng(3)
    rho, sigma = random_density(2, rng, rank=1), random_density(2, rng, rank=1)
    tn = trace_norm(rho - sigma)
    est = w1_dual(rho, sigma, QubitSystem(2), iters=10)
    assert 0.5 * tn - 1e-6 <= est.lower_bound <= 1.5 * tn + 1e-6


def test_w1_dimension_mismatch():
    with pytest.raises(ValueError):
        w1_dual(np.eye(2) / 2, np.eye(4) / 4, QubitSystem(1))


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_w1_sandwich_property(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 3))
    rho, sigma = random_density(n, rng), random_density(n, rng)
    tn = trace_norm(rho - sigma)
    est = w1_dual(rho, sigma, QubitSystem(n), iters=3)
    gap = 2e-4 * max(1.0, tn)
    assert 0.5 * tn - gap <= est.lower_bound + gap
    assert est.lower_bound <= 0.75 * n * tn + gap


def test_depolarize_examples():
    rho = np.diag([1.0, 0]).astype(complex)
    assert np.allclose(depolarize_apply(0.4, rho), np.diag([0.8, 0.2]))
    rng = np.random.default_rng(4)
    r2 = random_density(2, rng)
    assert np.allclose(depolarize_apply(1.0, r2), np.eye(4) / 4)
    assert np.allclose(depolarize_apply(0.0, r2), r2)
    assert np.allclose(depolarize(0.3, 2)(r2), depolarize_apply(0.3, r2))
    with pytest.raises(ValueError):
        depolarize(1.5, 1)


def test_recovery_identity_layer():
    rho = random_density(2, np.random.default_rng(5))
    scheme = LocalRecoveryScheme(2, 1, [[((0,), identity_gadget()), ((1,), identity_gadget())]])
    assert np.allclose(recovery_apply(scheme, 0, rho), rho)


def test_recovery_reset_marginal():
    rho = random_density(2, np.random.default_rng(6))
    scheme = LocalRecoveryScheme(2, 1, [[((1,), reset_gadget())]])
    out = recovery_apply(scheme, 0, rho)
    assert np.allclose(partial_trace_qubit(out, 0, 2), np.diag([1.0, 0]))


def test_parity_refresh_is_cptp():
    K = parity_refresh_gadget()
    assert np.abs(sum(k.conj().T @ k for k in K) - np.eye(4)).max() <= 1e-10
    scheme = LocalRecoveryScheme(2, 2, [[((0, 1), K)]])
    out = recovery_apply(scheme, 0, np.eye(4) / 4)
    assert np.allclose(np.diag(out).real, [0.5, 0, 0, 0.5])


def test_scheme_validation():
    with pytest.raises(ValueError):
        LocalRecoveryScheme(2, 1, [[((0,), reset_gadget()), ((0,), reset_gadget())]])
    with pytest.raises(ValueError):
        LocalRecoveryScheme(2, 1, [[((0, 1), parity_refresh_gadget())]])
    with pytest.raises(ValueError):
        LocalRecoveryScheme(1, 1, [[((0,), 0.5 * identity_gadget())]])


def test_layer_channel_matches_apply():
    rng = np.random.default_rng(7)
    scheme = random_scheme(3, 2, 2, rng)
    rho = random_density(3, rng)
    assert np.allclose(scheme.layer_channel(1)(rho), recovery_apply(scheme, 1, rho))


def test_thresholds_and_bound_arithmetic():
    assert depolarizing_threshold(2) == pytest.approx(0.5)
    assert decay_threshold(2) == pytest.approx(2 / 3)
    assert decay_bound(4, 2, 0.8, 5) == pytest.approx(12 * 0.6**5, abs=1e-12)
    assert decay_bound(4, 2, 0.8, 5) == pytest.approx(0.93312, abs=1e-12)


def test_full_noise_erases_distinguishability():
    rng = np.random.default_rng(8)
    scheme = random_scheme(2, 2, 1, rng)
    traj = noisy_recovery_experiment(2, 2, 1.0, 1, scheme, random_density(2, rng), random_density(2, rng), w1=False)
    assert traj.trace_distance[1] <= 1e-10


def test_noisy_recovery_rejects_bad_parameters():
    scheme = random_scheme(2, 2, 1, np.random.default_rng(0))
    rho = np.eye(4) / 4
    with pytest.raises(ValueError):
        noisy_recovery_experiment(2, 2, 0.0, 1, scheme, rho, rho)
    with pytest.raises(ValueError):
        noisy_recovery_experiment(2, 2, 0.5, 0, scheme, rho, rho)


def test_depolarizing_contracts_lipschitz_constant():
    rng = np.random.default_rng(9)
    n = 2
    for p in (0.2, 0.5, 0.8):
        for _ in range(3):
            X = random_hermitian(n, rng)
            lo = qubit_lipschitz(X, QubitSystem(n)).lipschitz_lo
            hi = qubit_lipschitz(depolarize(p, n).adjoint_apply(X), QubitSystem(n)).lipschitz_hi
            assert hi <= (1 - p) * lo * (1 + 2e-4)


@pytest.mark.parametrize("locality", [1, 2])
def test_local_recovery_growth(locality):
    rng = np.random.default_rng(10 + locality)
    n = 2
    for _ in range(4):
        scheme = random_scheme(n, locality, 1, rng)
        X = random_hermitian(n, rng)
        lo = qubit_lipschitz(X, QubitSystem(n)).lipschitz_lo
        hi = qubit_lipschitz(scheme.layer_channel(0).adjoint_apply(X), QubitSystem(n)).lipschitz_hi
        assert hi <= 1.5 * locality * lo * (1 + 2e-4)


def test_end_to_end_decay_above_threshold():
    rng = np.random.default_rng(11)
    for _ in range(50):
        n = int(rng.integers(1, 4))
        ell = int(rng.integers(1, min(n, 2) + 1))
        T = int(rng.integers(1, 9))
        p = float(rng.uniform(decay_threshold(ell) + 1e-3, 0.999))
        scheme = random_scheme(n, ell, T, rng)
        rho, sigma = random_density(n, rng), random_density(n, rng)
        traj = noisy_recovery_experiment(n, ell, p, T, scheme, rho, sigma, w1=False)
        assert np.all(traj.trace_distance <= traj.analytic_bound + 1e-12)


def test_random_local_channel_is_cptp():
    K = random_local_channel(2, np.random.default_rng(12))
    assert np.abs(sum(k.conj().T @ k for k in K) - np.eye(4)).max() <= 1e-10
    assert math.isclose(K.shape[0], 4)
