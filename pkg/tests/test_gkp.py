import math

import numpy as np
import pytest
from numpy.polynomial import hermite as H

from bosonic_ot.channels import QualityGateError, loss_channel
from bosonic_ot.fock import ModeSystem, displacement, expm_hermitian, operator_norm, quadratures, random_state
from bosonic_ot.gkp import (
    SQRT_PI,
    EncodedRecoverySpec,
    GKPParams,
    MeasurementSpec,
    cnot_unitary,
    completeness_defect,
    encoded_recovery,
    gamma_constant,
    gkp_wavefunction,
    hermite_functions,
    logical_pauli_measure,
    logical_paulis,
    logical_projectors,
    make_gkp_state,
    povm_commutator_bound,
    steane_channel,
    unsharp_povm_density,
    zz_demo_spec,
)
from bosonic_ot.transport import contraction_probe

GKP = GKPParams(0.3, 40)


@pytest.fixture(scope="module")
def codewords():
    return {k: make_gkp_state(GKP, k) for k in ("0", "1", "+")}


@pytest.fixture(scope="module")
def raw_steane():
    return steane_channel(20, GKPParams(0.35, 32), MeasurementSpec(0.1, 0.1, 10.0, 401, "raw"))


def interior(op, system):
    idx = system.interior_indices()
    return op[np.ix_(idx, idx)]


def low_levels(op, system, n_max):
    idx = np.flatnonzero(system.level_array().max(axis=1) <= n_max)
    return op[np.ix_(idx, idx)]


def test_hermite_functions_match_numpy_polynomials():
    x = np.linspace(-6, 6, 101)
    psi = hermite_functions(x, 12)
    for n in range(12):
        coef = np.zeros(n + 1)
        coef[n] = 1
        ref = H.hermval(x, coef) * np.exp(-x**2 / 2) / math.sqrt(2**n * math.factorial(n) * math.sqrt(math.pi))
        assert np.allclose(psi[n], ref, atol=1e-10)


def test_codewords_are_normalised(codewords):
    for st in codewords.values():
        assert np.linalg.norm(st.vector) == pytest.approx(1.0, abs=1e-12)
        assert st.truncation_weight <= 1e-4
        assert st.energy > 0


def test_codewords_nearly_orthogonal(codewords):
    assert abs(np.vdot(codewords["0"].vector, codewords["1"].vector)) <= 0.1
    # independent overlap from the position wavefunctions
    x = np.linspace(-40, 40, 40001)
    a, b = gkp_wavefunction(GKP, "0", x), gkp_wavefunction(GKP, "1", x)
    assert abs(np.sum(a * b)) / math.sqrt(np.sum(a * a) * np.sum(b * b)) <= 0.1


def test_plus_state_is_xbar_eigenstate(codewords):
    X, _, _ = logical_paulis(40)
    v = codewords["+"].vector
    assert np.real(np.vdot(v, X @ v)) >= 0.9


def test_truncation_gate_and_validation():
    with pytest.raises(QualityGateError):
        make_gkp_state(GKPParams(0.3, 12))
    with pytest.raises(ValueError):
        GKPParams(0.0)
    with pytest.raises(ValueError):
        GKPParams(0.3, comb_range=2)
    with pytest.raises(ValueError):
        make_gkp_state(GKP, "2")


def test_logical_paulis_are_unitary():
    for U in logical_paulis(40):
        assert operator_norm(U.conj().T @ U - np.eye(40)) <= 1e-10


@pytest.mark.xfail(strict=True, reason="guard band 8 leaves interior levels whose lattice shifts leave the cutoff")
def test_pauli_algebra_at_guard_band_8():
    s = ModeSystem(1, 40, guard_band=8)
    X, Z, _ = logical_paulis(40)
    assert operator_norm(interior(X @ Z + Z @ X, s)) <= 1e-6
    assert operator_norm(interior(X @ X @ Z - Z @ X @ X, s)) <= 1e-6


def test_pauli_algebra_with_wide_guard_band():
    s = ModeSystem(1, 40, guard_band=24)
    X, Z, _ = logical_paulis(40)
    assert operator_norm(interior(X @ Z + Z @ X, s)) <= 1e-6
    assert operator_norm(interior(X @ X @ Z - Z @ X @ X, s)) <= 1e-6


def _cnot_setup(d, g=-1):
    s = ModeSystem(2, d, guard_band=g)
    U = cnot_unitary(s, 0, 1)
    Q0, P0 = quadratures(s, 0)
    Q1, P1 = quadratures(s, 1)
    return s, U, Q0, P0, Q1, P1


def test_cnot_unitary_and_additive():
    s, U, Q0, _, _, P1 = _cnot_setup(16, 4)
    assert operator_norm(U.conj().T @ U - np.eye(s.dim)) <= 1e-10
    QP = Q0 @ P1
    assert operator_norm(U @ U - expm_hermitian((QP + QP.conj().T) / 2, -2j)) <= 1e-10


def test_cnot_leaves_control_position_and_target_momentum():
    s, U, Q0, _, _, P1 = _cnot_setup(16, 4)
    assert operator_norm(interior(U.conj().T @ Q0 @ U - Q0, s)) <= 1e-6
    assert operator_norm(interior(U.conj().T @ P1 @ U - P1, s)) <= 1e-6


@pytest.mark.xfail(strict=True, reason="shifts by the truncated control quadrature leave the cutoff at d = 16")
def test_cnot_shift_relations_on_small_interior():
    s, U, Q0, P0, Q1, P1 = _cnot_setup(16, 4)
    assert operator_norm(interior(U.conj().T @ Q1 @ U - (Q0 + Q1), s)) <= 1e-6
    assert operator_norm(interior(U.conj().T @ P0 @ U - (P0 - P1), s)) <= 1e-6


def test_cnot_shift_relations_at_low_occupation():
    s, U, Q0, P0, Q1, P1 = _cnot_setup(40)
    assert operator_norm(low_levels(U.conj().T @ Q1 @ U - (Q0 + Q1), s, 2)) <= 1e-6
    assert operator_norm(low_levels(U.conj().T @ P0 @ U - (P0 - P1), s, 2)) <= 1e-6


def test_cnot_rejects_single_mode():
    with pytest.raises(ValueError):
        cnot_unitary(ModeSystem(1, 6))


@pytest.mark.parametrize("x", [-3.0, 0.0, 1.7])
def test_povm_density_is_positive(x):
    assert np.linalg.eigvalsh(unsharp_povm_density(0.5, x, 24)).min() >= -1e-12
    with pytest.raises(ValueError):
        unsharp_povm_density(0.0, x, 24)


@pytest.mark.xfail(strict=True, reason="a grid of half-width 8 misses Q eigenvalue tails at alpha = 1 for d = 24")
def test_grid_completeness_half_range_8():
    assert completeness_defect(1.0, MeasurementSpec(1.0, 1.0, 8.0, 321), 24) <= 1e-3


def test_grid_completeness_half_range_10():
    assert completeness_defect(1.0, MeasurementSpec(1.0, 1.0, 10.0, 401), 24) <= 1e-3


def test_measurement_spec_validation():
    with pytest.raises(ValueError):
        MeasurementSpec(alpha_q=0)
    with pytest.raises(ValueError):
        MeasurementSpec(points=320)
    with pytest.raises(ValueError):
        MeasurementSpec(correction_mode="floor")


@pytest.mark.parametrize("alpha", [0.05, 0.1])
def test_povm_commutator_bound(alpha):
    s = ModeSystem(1, 32)
    _, P = quadratures(s, 0)
    for proj in logical_projectors(32, "Z", alpha):
        assert operator_norm(interior(P @ proj - proj @ P, s)) <= povm_commutator_bound(alpha) + 1e-3


def test_logical_readout(codewords):
    z0 = logical_pauli_measure(codewords["0"].vector, "Z")
    z1 = logical_pauli_measure(codewords["1"].vector, "Z")
    assert z0.p_plus >= 0.99 and z0.most_likely == 1
    assert z1.p_minus >= 0.99 and z1.most_likely == -1
    s = ModeSystem(1, 40)
    mixed = s.interior_projector() / len(s.interior_indices())
    for basis in "XYZ":
        out = logical_pauli_measure(mixed, basis)
        assert out.p_plus + out.p_minus == pytest.approx(1.0, abs=1e-6)
    with pytest.raises(ValueError):
        logical_pauli_measure(mixed, "W")


def test_steane_trace_preservation(raw_steane):
    s = ModeSystem(1, 20)
    rng = np.random.default_rng(0)
    assert max(raw_steane.completeness.values()) <= 1e-3
    for _ in range(20):
        out = raw_steane(random_state(s, rng))
        assert abs(np.trace(out).real - 1) <= 1e-3


def test_steane_factor_two(raw_steane):
    s = ModeSystem(1, 20)
    assert contraction_probe(raw_steane, s, trials=30, seed=1) <= 2 + 0.1
    combined = raw_steane.compose(loss_channel(0.25, cutoff=20))
    assert contraction_probe(combined, s, trials=30, seed=2) <= 1 + 0.1


def test_raw_and_mod_agree_inside_half_cell():
    anc = GKPParams(0.35, 32)
    # a grid this short is far from complete, so both gates are opened
    kw = dict(completeness_tol=2.0, tp_tol=2.0)
    raw = steane_channel(12, anc, MeasurementSpec(0.1, 0.1, 0.8, 41, "raw"), **kw)
    mod = steane_channel(12, anc, MeasurementSpec(0.1, 0.1, 0.8, 41, "mod_sqrt_pi"), **kw)
    assert np.abs(raw.liouville - mod.liouville).max() <= 1e-12


def test_steane_completeness_gate():
    with pytest.raises(QualityGateError):
        steane_channel(12, GKPParams(0.35, 32), MeasurementSpec(0.1, 0.1, 2.0, 11, "raw"))


def _shifted_zero_readout():
    s = ModeSystem(1, 40)
    chan = steane_channel(40, GKP, MeasurementSpec(0.05, 0.05, 10.0, 401))
    zero = make_gkp_state(GKP, "0").vector
    v = displacement(s, 0, 0.1) @ zero
    return logical_pauli_measure(chan(np.outer(v, v.conj())), "Z").p_plus


@pytest.mark.slow
@pytest.mark.xfail(strict=True, reason="finite-width ancillas leave about 14% logical error per round at delta = 0.3")
def test_mod_steane_corrects_small_shift():
    assert _shifted_zero_readout() >= 0.95


def test_trivial_encoded_recovery_is_identity():
    s = ModeSystem(2, 6)
    chan = encoded_recovery(EncodedRecoverySpec(2, [], {}), s)
    rho = random_state(s, np.random.default_rng(3))
    assert np.allclose(chan(rho), rho)


@pytest.fixture(scope="module")
def zz_recovery():
    spec = zz_demo_spec(GKP)
    return spec, encoded_recovery(spec, ModeSystem(2, 10))


def test_encoded_recovery_syndrome_zero_branch(zz_recovery):
    spec, chan = zz_recovery
    bare = EncodedRecoverySpec(2, spec.stabilizers, {}, spec.partition, spec.ancilla, spec.alpha)
    plain = encoded_recovery(bare, chan.system).kraus
    flip = chan.system.embed(logical_paulis(10)[0], 0)
    same = [np.allclose(k, p, atol=1e-12) for k, p in zip(chan.kraus, plain)]
    # syndrome 0 Kraus operators are untouched; the odd branch picks up the position shift
    assert 0 < sum(same) < len(same)
    for k, p, untouched in zip(chan.kraus, plain, same):
        if not untouched:
            assert np.allclose(k, flip.conj().T @ p, atol=1e-10) or np.allclose(k, flip @ p, atol=1e-10)
    assert chan.tp_defect(chan.system.interior_projector()) <= 1e-3


def test_encoded_recovery_growth(zz_recovery):
    spec, chan = zz_recovery
    assert contraction_probe(chan, chan.system, trials=10, seed=4) <= spec.gamma() + 0.5


def test_correction_bound_enforced():
    big = np.zeros((2, 2))
    big[0, 0] = 1.01 * SQRT_PI
    with pytest.raises(ValueError):
        EncodedRecoverySpec(2, [(0, 1)], {(1,): big}, [((0,), (0,))], GKP)
    with pytest.raises(ValueError):
        EncodedRecoverySpec(2, [(0, 1)], {}, [((0,), (0,)), ((0,), (0, 1))], GKP)
    stray = np.zeros((2, 2))
    stray[1, 1] = 0.5
    with pytest.raises(ValueError):
        EncodedRecoverySpec(2, [(0, 1)], {(1,): stray}, [((0,), (0,))], GKP)


def test_every_demo_syndrome_respects_bound():
    spec = zz_demo_spec(GKP)
    for shifts in spec.corrections.values():
        assert np.abs(shifts).max() <= SQRT_PI + 1e-12


@pytest.mark.xfail(strict=True, reason="2 + 128/sqrt(pi) evaluates to 74.2163")
def test_gamma_two_local_spot_value():
    assert gamma_constant(2, 1, 1, 1) == pytest.approx(74.2201, abs=1e-3)


def test_gamma_values():
    assert gamma_constant(2, 1, 1, 1) == pytest.approx(2 + 128 / math.sqrt(math.pi), abs=1e-12)
    assert gamma_constant(1, 1, 1, 1) == pytest.approx(5.5138, abs=1e-3)
    for args in [(1, 1, 1), (2, 1, 1), (3, 2, 1)]:
        g1, g4 = gamma_constant(*args, 0.3), gamma_constant(*args, 1.2)
        assert g4 - args[0] == pytest.approx((g1 - args[0]) / 2, rel=1e-12)
    with pytest.raises(ValueError):
        gamma_constant(0, 1, 1, 1)
    with pytest.raises(ValueError):
        gamma_constant(1, 1, 1, -0.1)
