"""Square-lattice GKP codewords, unsharp quadrature measurements and the
Steane error-correction channel on a truncated oscillator.

Lattice spacing is ``sqrt(pi)``.  Logical operators are
``Xbar = exp(-i sqrt(pi) P)``, ``Zbar = exp(i sqrt(pi) Q)`` and
``Ybar = exp(i sqrt(pi) (Q - P))``.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import erf

from .channels import DEFAULT_TP_TOL, ChannelRep, QualityGateError
from .fock import ModeSystem, expm_hermitian, operator_norm, single_mode_ladder

SQRT_PI = math.sqrt(math.pi)
TRUNCATION_TOL = 1e-4
COMPLETENESS_TOL = 1e-3


def _single_quadratures(cutoff: int) -> tuple[np.ndarray, np.ndarray]:
    a = single_mode_ladder(cutoff)
    return (a + a.conj().T) / math.sqrt(2), -1j * (a - a.conj().T) / math.sqrt(2)


def hermite_functions(x: np.ndarray, count: int) -> np.ndarray:
    """Normalised oscillator eigenfunctions ``psi_n(x)``, ``n < count``, by the stable three-term recurrence."""
    psi = np.zeros((count, x.size))
    psi[0] = math.pi**-0.25 * np.exp(-(x**2) / 2)
    if count > 1:
        psi[1] = math.sqrt(2) * x * psi[0]
    for n in range(2, count):
        psi[n] = math.sqrt(2 / n) * x * psi[n - 1] - math.sqrt((n - 1) / n) * psi[n - 2]
    return psi


@dataclass(frozen=True)
class GKPParams:
    """Approximate square-code GKP states.

    ``comb_range`` is the number of lattice sites ``k sqrt(pi)`` kept on each
    side of the origin; each codeword uses the sites of its own parity.
    """

    delta: float
    cutoff: int = 40
    comb_range: int = 4
    grid_points: int = 2001
    truncation_tol: float = TRUNCATION_TOL

    def __post_init__(self):
        if not self.delta > 0:
            raise ValueError(f"delta must be positive, got {self.delta}")
        if self.comb_range < 3:
            raise ValueError(f"comb_range must be at least 3, got {self.comb_range}")
        if self.cutoff < 2 or self.grid_points < 11:
            raise ValueError("cutoff and grid size are too small")


@dataclass
class GKPState:
    vector: np.ndarray
    energy: float
    truncation_weight: float
    logical: str


def gkp_wavefunction(params: GKPParams, logical: str, x: np.ndarray) -> np.ndarray:
    """Unnormalised position wavefunction: Gaussian peaks of density width ``delta`` under ``exp(-delta^2 x^2/2)``."""
    parities = {"0": (0,), "1": (1,), "+": (0, 1)}
    if logical not in parities:
        raise ValueError(f"logical state must be one of 0, 1, +; got {logical!r}")
    S = params.comb_range
    sites = [k for k in range(-S, S + 1) if k % 2 in parities[logical]]
    d2 = params.delta**2
    psi = sum(np.exp(-((x - k * SQRT_PI) ** 2) / (4 * d2)) for k in sites)
    return psi * np.exp(-d2 * x**2 / 2)


def make_gkp_state(params: GKPParams, logical: str = "0") -> GKPState:
    """Project the grid wavefunction onto the Fock basis; raises if too much weight falls above the cutoff."""
    half = (2 * params.comb_range + 2) * SQRT_PI
    x = np.linspace(-half, half, params.grid_points)
    dx = x[1] - x[0]
    psi = gkp_wavefunction(params, logical, x)
    psi /= math.sqrt(np.sum(psi**2) * dx)
    coeffs = hermite_functions(x, params.cutoff) @ psi * dx
    weight = float(max(0.0, 1.0 - np.sum(coeffs**2)))
    if weight > params.truncation_tol:
        raise QualityGateError(
            f"GKP |{logical}> at delta={params.delta} loses weight {weight:.2e} above cutoff {params.cutoff}"
        )
    vec = coeffs.astype(complex) / np.linalg.norm(coeffs)
    energy = float(np.sum(np.arange(params.cutoff) * np.abs(vec) ** 2))
    return GKPState(vec, energy, weight, logical)


def logical_paulis(cutoff: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """``(Xbar, Zbar, Ybar)`` as exact exponentials of the truncated quadratures."""
    Q, P = _single_quadratures(cutoff)
    X = expm_hermitian(P, -1j * SQRT_PI)
    Z = expm_hermitian(Q, 1j * SQRT_PI)
    Y = expm_hermitian(Q - P, 1j * SQRT_PI)
    return X, Z, Y


def cnot_unitary(system: ModeSystem, control: int = 0, target: int = 1) -> np.ndarray:
    """``exp(-i Q_control P_target)``: shifts ``Q_target`` by ``Q_control`` and ``P_control`` by ``-P_target``."""
    if system.n_modes < 2 or control == target:
        raise ValueError("CNOT needs two distinct modes")
    Q, P = _single_quadratures(system.cutoff)
    wq, Vq = np.linalg.eigh(Q)
    wp, Vp = np.linalg.eigh(P)
    # Q_c (x) P_t is diagonal in the product eigenbasis
    Vc = system.embed(Vq, control) @ system.embed(Vp, target)
    levels = system.level_array()
    phase = np.exp(-1j * wq[levels[:, control]] * wp[levels[:, target]])
    return (Vc * phase) @ Vc.conj().T


@dataclass(frozen=True)
class MeasurementSpec:
    """Unsharp quadrature measurements with variances ``alpha_q`` / ``alpha_p`` on a uniform outcome grid."""

    alpha_q: float = 0.05
    alpha_p: float = 0.05
    half_range: float = 8.0
    points: int = 321
    correction_mode: str = "mod_sqrt_pi"

    def __post_init__(self):
        if not (self.alpha_q > 0 and self.alpha_p > 0):
            raise ValueError("measurement variances must be positive")
        if self.points < 3 or self.points % 2 == 0:
            raise ValueError(f"grid point count must be odd and >= 3, got {self.points}")
        if not self.half_range > 0:
            raise ValueError("grid half-range must be positive")
        if self.correction_mode not in ("raw", "mod_sqrt_pi"):
            raise ValueError(f"unknown correction mode {self.correction_mode!r}")

    @property
    def alpha_min(self) -> float:
        return min(self.alpha_q, self.alpha_p)

    def grid(self) -> tuple[np.ndarray, float]:
        x = np.linspace(-self.half_range, self.half_range, self.points)
        return x, float(x[1] - x[0])


def gaussian_density(z: np.ndarray, alpha: float) -> np.ndarray:
    return np.exp(-(z**2) / (2 * alpha)) / math.sqrt(2 * math.pi * alpha)


def unsharp_povm_density(alpha: float, x: float, cutoff: int, quadrature: str = "Q") -> np.ndarray:
    """``m(x) = (2 pi alpha)^(-1/2) exp(-(R - x)^2 / (2 alpha))`` for the truncated quadrature ``R``."""
    if not alpha > 0:
        raise ValueError(f"measurement variance must be positive, got {alpha}")
    R = _single_quadratures(cutoff)[{"Q": 0, "P": 1}[quadrature]]
    w, V = np.linalg.eigh(R)
    return (V * gaussian_density(w - x, alpha)) @ V.conj().T


def completeness_defect(alpha: float, spec: MeasurementSpec, cutoff: int, quadrature: str = "Q",
                        guard_band: int | None = None) -> float:
    """``||Pi (sum_k w m(x_k) - I) Pi||_inf`` on the interior of the measured mode."""
    R = _single_quadratures(cutoff)[{"Q": 0, "P": 1}[quadrature]]
    w, V = np.linalg.eigh(R)
    x, h = spec.grid()
    total = h * gaussian_density(w[None, :] - x[:, None], alpha).sum(axis=0)
    dev = (V * (total - 1.0)) @ V.conj().T
    keep = ModeSystem(1, cutoff, -1 if guard_band is None else guard_band).interior_levels
    return operator_norm(dev[:keep, :keep])


def _even_odd_weights(values: np.ndarray, alpha: float) -> tuple[np.ndarray, np.ndarray]:
    """Probability that ``value + N(0, alpha)`` rounds to an even / odd multiple of ``sqrt(pi)``."""
    span = np.abs(values).max() + 12 * math.sqrt(alpha) + SQRT_PI
    kmax = int(math.ceil(span / SQRT_PI)) + 1
    s = math.sqrt(2 * alpha)
    even = np.zeros_like(values, dtype=float)
    odd = np.zeros_like(values, dtype=float)
    for k in range(-kmax, kmax + 1):
        lo, hi = (k - 0.5) * SQRT_PI, (k + 0.5) * SQRT_PI
        mass = 0.5 * (erf((hi - values) / s) - erf((lo - values) / s))
        if k % 2 == 0:
            even += mass
        else:
            odd += mass
    return even, odd


def _logical_quadrature(cutoff: int, basis: str) -> np.ndarray:
    Q, P = _single_quadratures(cutoff)
    if basis == "Z":
        return Q
    if basis == "X":
        return -P
    if basis == "Y":
        return Q - P
    raise ValueError(f"basis must be X, Y or Z, got {basis!r}")


def logical_projectors(cutoff: int, basis: str, alpha: float) -> tuple[np.ndarray, np.ndarray]:
    """POVM elements ``(Pbar(0), Pbar(1))`` for outcomes +1 and -1 of a logical Pauli readout."""
    R = _logical_quadrature(cutoff, basis)
    w, V = np.linalg.eigh(R)
    even, odd = _even_odd_weights(w, alpha)
    return (V * even) @ V.conj().T, (V * odd) @ V.conj().T


@dataclass
class LogicalOutcome:
    p_plus: float
    p_minus: float

    @property
    def most_likely(self) -> int:
        return 1 if self.p_plus >= self.p_minus else -1


def logical_pauli_measure(state: np.ndarray, basis: str, alpha: float = 0.01) -> LogicalOutcome:
    """Measure the logical quadrature with an unsharp POVM and round to the lattice.

    ``state`` may be a vector or a density matrix.
    """
    state = np.asarray(state, dtype=complex)
    rho = np.outer(state, state.conj()) if state.ndim == 1 else state
    plus, minus = logical_projectors(rho.shape[0], basis, alpha)
    return LogicalOutcome(float(np.real(np.trace(plus @ rho))), float(np.real(np.trace(minus @ rho))))


def _kron_conj_left(A: np.ndarray, S: np.ndarray) -> np.ndarray:
    """``(A kron conj(A)) @ S`` using the tensor structure."""
    d = A.shape[0]
    T = S.reshape(A.shape[1], A.shape[1], -1)
    T = np.tensordot(A, T, axes=(1, 0))
    T = np.tensordot(A.conj(), T, axes=(1, 1)).transpose(1, 0, 2)
    return T.reshape(d * d, -1)


def _kron_conj_right(S: np.ndarray, B: np.ndarray) -> np.ndarray:
    """``S @ (B kron conj(B))``."""
    d = B.shape[1]
    T = S.reshape(-1, B.shape[0], B.shape[0])
    T = np.tensordot(T, B, axes=(1, 0))
    T = np.tensordot(T, B.conj(), axes=(1, 0))
    return T.reshape(-1, d * d)


def _lattice_residual(x: np.ndarray) -> np.ndarray:
    return x - SQRT_PI * np.round(x / SQRT_PI)


@dataclass
class _Eigen:
    values: np.ndarray
    vectors: np.ndarray


def _eig(op: np.ndarray) -> _Eigen:
    w, V = np.linalg.eigh(op)
    return _Eigen(w, V)


def _steane_stage(coupling_data: _Eigen, corr_data: _Eigen, coupling_anc: _Eigen, measured_anc: _Eigen,
                  ancilla: np.ndarray, alpha: float, spec: MeasurementSpec, corr_sign: float) -> np.ndarray:
    """Liouville matrix of one ancilla round.

    The coupling ``exp(-i C_anc (x) D_data)`` is diagonal in the eigenbasis of
    ``D_data``, so each measurement branch acts entrywise there; the
    correction ``exp(i corr_sign s R_data)`` is entrywise in the eigenbasis of
    ``R_data``.  Outcome weights are renormalised per ancilla eigenvalue so
    the round is exactly trace preserving on the truncated space.
    """
    amp = (measured_anc.vectors.conj().T @ coupling_anc.vectors) * (coupling_anc.vectors.conj().T @ ancilla)[None, :]
    a = amp @ np.exp(-1j * np.outer(coupling_anc.values, coupling_data.values))  # (outcome eig k, data eig j)
    x, h = spec.grid()
    g = gaussian_density(measured_anc.values[None, :] - x[:, None], alpha)
    g = g / (h * g.sum(axis=0, keepdims=True))
    d = a.shape[1]
    pair = (a[:, :, None] * a.conj()[:, None, :]).reshape(a.shape[0], d * d)
    G = (h * g) @ pair
    shift = x if spec.correction_mode == "raw" else _lattice_residual(x)
    diff = (corr_data.values[:, None] - corr_data.values[None, :]).reshape(-1)
    H = np.exp(1j * corr_sign * np.outer(shift, diff))
    T = corr_data.vectors.conj().T @ coupling_data.vectors
    mid = np.kron(T, T.conj()) * (H.T @ G)
    S = _kron_conj_left(corr_data.vectors, mid)
    return _kron_conj_right(S, coupling_data.vectors.conj().T)


class SteaneChannel(ChannelRep):
    """Steane-type error correction of one data mode with ancillas ``|0~>`` (momentum readout) and ``|+~>`` (position readout)."""

    def __init__(self, liouville: np.ndarray, system: ModeSystem, ancilla_params: GKPParams,
                 measurement: MeasurementSpec, completeness: dict, truncation: dict):
        super().__init__(liouville=liouville, system=system, name=f"steane[{measurement.correction_mode}]")
        self.ancilla_params = ancilla_params
        self.measurement = measurement
        self.completeness = completeness
        self.truncation = truncation


def steane_channel(cutoff: int, ancilla_params: GKPParams, measurement: MeasurementSpec | None = None,
                   tp_tol: float = DEFAULT_TP_TOL, completeness_tol: float = COMPLETENESS_TOL) -> SteaneChannel:
    """Build the Steane channel on a data mode of the given cutoff.

    Round 1: ``|0~>`` ancilla, coupling ``exp(-i Q_anc P_data)``, unsharp ``P_anc`` readout ``p``,
    correction ``exp(-i p Q_data)``.  Round 2: ``|+~>`` ancilla, coupling
    ``exp(-i Q_data P_anc)``, unsharp ``Q_anc`` readout ``q``, correction
    ``exp(i q P_data)``.  In ``mod_sqrt_pi`` mode the corrections use the
    outcomes reduced to ``[-sqrt(pi)/2, sqrt(pi)/2)``.
    """
    spec = MeasurementSpec() if measurement is None else measurement
    zero = make_gkp_state(ancilla_params, "0")
    plus = make_gkp_state(ancilla_params, "+")
    dc = ancilla_params.cutoff
    completeness = {
        "P": completeness_defect(spec.alpha_p, spec, dc, "P"),
        "Q": completeness_defect(spec.alpha_q, spec, dc, "Q"),
    }
    worst = max(completeness.values())
    if worst > completeness_tol:
        raise QualityGateError(f"measurement grid completeness defect {worst:.2e} exceeds {completeness_tol:.1e}")
    Qd, Pd = _single_quadratures(cutoff)
    Qa, Pa = _single_quadratures(dc)
    eq_d, ep_d, eq_a, ep_a = _eig(Qd), _eig(Pd), _eig(Qa), _eig(Pa)
    round_b = _steane_stage(ep_d, eq_d, eq_a, ep_a, zero.vector, spec.alpha_p, spec, corr_sign=-1.0)
    round_c = _steane_stage(eq_d, ep_d, ep_a, eq_a, plus.vector, spec.alpha_q, spec, corr_sign=+1.0)
    chan = SteaneChannel(round_c @ round_b, ModeSystem(1, cutoff), ancilla_params, spec, completeness,
                         {"0": zero.truncation_weight, "+": plus.truncation_weight})
    system = chan.system
    chan.require_tp(tp_tol, system.interior_projector())
    return chan


def gamma_constant(l_meas: float, l_corr: float, l_corr_support: float, alpha_min: float) -> float:
    """Lipschitz growth constant of the GKP-encoded local recovery map."""
    if min(l_meas, l_corr, l_corr_support, alpha_min) <= 0:
        raise ValueError("all arguments of the growth constant must be positive")
    return l_meas + l_meas * 2.0 ** (1 + l_meas * (1 + l_corr)) * l_meas * l_corr_support / math.sqrt(
        alpha_min * math.pi)


def povm_commutator_bound(alpha: float) -> float:
    """``sqrt(2/pi)/sqrt(alpha)``: bound on ``||[P, Pbar(s)]||`` for the normalised Gaussian POVM."""
    return math.sqrt(2 / math.pi) / math.sqrt(alpha)


@dataclass
class EncodedRecoverySpec:
    """Stabilizer readout on GKP-encoded data modes followed by local displacement corrections.

    ``stabilizers`` lists the data modes of each ``Zbar``-type product.  Each
    entry of ``partition`` is ``(syndrome bits F_j, corrected modes F'_j)``;
    ``corrections`` maps a syndrome tuple to per-mode ``(shift_q, shift_p)``.
    """

    n_modes: int
    stabilizers: list
    corrections: dict
    partition: list = field(default_factory=list)
    ancilla: GKPParams | None = None
    alpha: float = 0.05

    def __post_init__(self):
        if not self.stabilizers:
            return
        if self.ancilla is None:
            raise ValueError("stabilizer readout needs ancilla parameters")
        for sup in self.stabilizers:
            if not sup or any(not 0 <= j < self.n_modes for j in sup):
                raise ValueError(f"stabilizer support {sup} out of range")
        supports = [set(fp) for _, fp in self.partition]
        for i, j in itertools.combinations(range(len(supports)), 2):
            if supports[i] & supports[j]:
                raise ValueError("correction supports must be pairwise disjoint")
        r = len(self.stabilizers)
        for s in itertools.product((0, 1), repeat=r):
            shifts = np.asarray(self.corrections.get(s, np.zeros((self.n_modes, 2))), dtype=float)
            if shifts.shape != (self.n_modes, 2):
                raise ValueError(f"correction for syndrome {s} must have shape ({self.n_modes}, 2)")
            if np.abs(shifts).max(initial=0.0) > SQRT_PI + 1e-12:
                raise ValueError(f"correction for syndrome {s} exceeds sqrt(pi) in sup norm")
            moved = {j for j in range(self.n_modes) if np.any(shifts[j] != 0)}
            allowed = set().union(*supports) if supports else set()
            if moved - allowed:
                raise ValueError(f"correction for syndrome {s} moves modes {moved - allowed} outside the partition")

    @property
    def l_meas(self) -> int:
        return max((len(s) for s in self.stabilizers), default=0)

    @property
    def l_corr(self) -> int:
        return max((len(f) for f, _ in self.partition), default=0)

    @property
    def l_corr_support(self) -> int:
        return max((len(fp) for _, fp in self.partition), default=0)

    def gamma(self) -> float:
        return gamma_constant(self.l_meas, max(self.l_corr, 1), max(self.l_corr_support, 1), self.alpha)


def zz_demo_spec(ancilla: GKPParams, alpha: float = 0.05) -> EncodedRecoverySpec:
    """Two data modes, one ``Zbar Zbar`` check; odd syndrome shifts mode 0 by ``sqrt(pi)`` in position."""
    flip = np.zeros((2, 2))
    flip[0, 0] = SQRT_PI
    return EncodedRecoverySpec(
        n_modes=2,
        stabilizers=[(0, 1)],
        corrections={(0,): np.zeros((2, 2)), (1,): flip},
        partition=[((0,), (0,))],
        ancilla=ancilla,
        alpha=alpha,
    )


def _displacement_unitary(system: ModeSystem, shifts: np.ndarray) -> np.ndarray:
    """``prod_j exp(i (p_j Q_j - q_j P_j))``: shifts ``Q_j`` by ``q_j`` and ``P_j`` by ``p_j``."""
    Q, P = _single_quadratures(system.cutoff)
    U = np.eye(system.dim, dtype=complex)
    for j, (sq, spp) in enumerate(shifts):
        if sq == 0 and spp == 0:
            continue
        U = system.embed(expm_hermitian(spp * Q - sq * P, 1j), j) @ U
    return U


def encoded_recovery(spec: EncodedRecoverySpec, system: ModeSystem, tp_tol: float = DEFAULT_TP_TOL) -> ChannelRep:
    """Kraus form of syndrome readout plus correction for codes with at most one stabilizer."""
    if system.n_modes != spec.n_modes:
        raise ValueError("system and code have different numbers of modes")
    if not spec.stabilizers:
        return ChannelRep(kraus=[np.eye(system.dim, dtype=complex)], system=system, name="identity")
    if len(spec.stabilizers) > 1 or spec.n_modes > 2:
        raise ValueError("only a single stabilizer on at most two data modes is supported")
    support = spec.stabilizers[0]
    anc = make_gkp_state(spec.ancilla, "0").vector
    Qa, Pa = _single_quadratures(spec.ancilla.cutoff)
    yp, Vp = np.linalg.eigh(Pa)
    # coupling exp(-i (sum_j Q_j) (x) P_anc), diagonal in the eigenbasis of sum_j Q_j
    Qd, _ = _single_quadratures(system.cutoff)
    total_q = sum(system.embed(Qd, j) for j in support)
    wq, Wq = np.linalg.eigh(total_q)
    branch_kraus = []
    for s, proj in zip((0, 1), logical_projectors(spec.ancilla.cutoff, "Z", spec.alpha)):
        lam, U = np.linalg.eigh(proj)
        lam = np.clip(lam, 0.0, None)
        V = _displacement_unitary(system, np.asarray(spec.corrections.get((s,), np.zeros((spec.n_modes, 2)))))
        coef = (U.conj().T @ Vp) * (Vp.conj().T @ anc)[None, :]  # (povm eigvec k, coupling eig i)
        diag = coef @ np.exp(-1j * np.outer(yp, wq))
        for k in np.flatnonzero(lam > 1e-14):
            K = (Wq * (math.sqrt(lam[k]) * diag[k])) @ Wq.conj().T
            branch_kraus.append(V @ K)
    chan = ChannelRep(kraus=branch_kraus, system=system, name="encoded-recovery")
    return chan.require_tp(tp_tol, system.interior_projector())
