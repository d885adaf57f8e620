"""Wasserstein-1 tools for qubit systems.

Qubit ``i`` is tensor factor ``i`` in little-endian order (qubit 0 varies
fastest), matching the bosonic mode ordering.  The Lipschitz constant of an
observable is

    ||X||_L = 2 max_i min_Y ||X - Y (x) I_i||_inf,

and every solver here returns a certified bracket for the inner minimum.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.optimize import minimize

from .channels import ChannelRep
from .fock import is_hermitian, trace_norm

MAX_QUBITS = 4
PAULI_I = np.eye(2, dtype=complex)
PAULI_X = np.array([[0, 1], [1, 0]], dtype=complex)
PAULI_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
PAULI_Z = np.array([[1, 0], [0, -1]], dtype=complex)


@dataclass(frozen=True)
class QubitSystem:
    n: int

    def __post_init__(self):
        if not 1 <= self.n <= MAX_QUBITS:
            raise ValueError(f"supported qubit counts are 1..{MAX_QUBITS}, got {self.n}")

    @property
    def dim(self) -> int:
        return 2**self.n


def _axis(site: int, n: int) -> int:
    return n - 1 - site


def embed_qubit_op(op: np.ndarray, sites: Sequence[int], n: int) -> np.ndarray:
    """Lift an operator on ``sites`` (little-endian within ``sites``) to ``n`` qubits."""
    sites = list(sites)
    k = len(sites)
    if len(set(sites)) != k or any(not 0 <= s < n for s in sites):
        raise ValueError(f"invalid site list {sites} for {n} qubits")
    op = np.asarray(op, dtype=complex)
    if op.shape != (2**k, 2**k):
        raise ValueError(f"operator on {k} qubits must be {2**k}x{2**k}, got {op.shape}")
    rest = [s for s in range(n) if s not in sites]
    full = np.kron(np.eye(2 ** len(rest)), op)  # op on the fast factors, identity on the slow ones
    # current factor order, slow to fast: rest reversed, then sites reversed
    order = list(reversed(rest)) + list(reversed(sites))
    t = full.reshape((2,) * (2 * n))
    # axis currently holding qubit q -> target axis n-1-q
    perm = [order.index(n - 1 - ax) for ax in range(n)]
    t = t.transpose(perm + [n + p for p in perm])
    return t.reshape(2**n, 2**n)


def partial_trace_qubit(op: np.ndarray, site: int, n: int) -> np.ndarray:
    """Trace out qubit ``site``."""
    t = np.asarray(op).reshape((2,) * (2 * n))
    ax = _axis(site, n)
    return np.trace(t, axis1=ax, axis2=ax + n).reshape(2 ** (n - 1), 2 ** (n - 1))


def _lift_without(Y: np.ndarray, site: int, n: int) -> np.ndarray:
    """``Y (x) I_site`` where ``Y`` acts on the other qubits in their natural order."""
    others = [s for s in range(n) if s != site]
    return embed_qubit_op(Y, others, n) if others else Y[0, 0] * np.eye(2, dtype=complex)


def _project_out_site(W: np.ndarray, site: int, n: int) -> np.ndarray:
    """Orthogonal projection onto ``{W : tr_site W = 0}``."""
    if n == 1:
        return W - np.trace(W) * np.eye(2) / 2
    return W - _lift_without(partial_trace_qubit(W, site, n), site, n) / 2


@dataclass
class QubitLipschitzReport:
    lo: np.ndarray
    hi: np.ndarray
    minimizers: list = field(default_factory=list)
    witnesses: list = field(default_factory=list)
    certified: bool = True

    @property
    def lipschitz_hi(self) -> float:
        return 2.0 * float(self.hi.max())

    @property
    def lipschitz_lo(self) -> float:
        return 2.0 * float(self.lo.max())

    @property
    def gaps(self) -> np.ndarray:
        return self.hi - self.lo


def _hermitian_basis(k: int) -> np.ndarray:
    """Orthonormal (Hilbert-Schmidt) basis of ``k x k`` Hermitian matrices."""
    basis = []
    for i in range(k):
        E = np.zeros((k, k), dtype=complex)
        E[i, i] = 1
        basis.append(E)
    for i in range(k):
        for j in range(i + 1, k):
            E = np.zeros((k, k), dtype=complex)
            E[i, j] = E[j, i] = 1 / math.sqrt(2)
            basis.append(E)
            F = np.zeros((k, k), dtype=complex)
            F[i, j], F[j, i] = -1j / math.sqrt(2), 1j / math.sqrt(2)
            basis.append(F)
    return np.array(basis)


def _softmax_abs(Z: np.ndarray, mu: float) -> tuple[float, np.ndarray]:
    """Smooth upper bound ``mu log tr(e^{Z/mu} + e^{-Z/mu})`` of ``||Z||_inf`` and its gradient."""
    w, V = np.linalg.eigh(Z)
    top = np.abs(w).max()
    ep = np.exp((w - top) / mu)
    em = np.exp((-w - top) / mu)
    total = ep.sum() + em.sum()
    val = top + mu * math.log(total)
    G = (V * ((ep - em) / total)) @ V.conj().T
    return val, G


def _site_bracket(X: np.ndarray, site: int, n: int, tol: float, y0: np.ndarray | None = None):
    """Bracket ``min_Y ||X - Y (x) I_site||`` by annealed smoothing.

    The primal point gives the upper bound; the smoothed gradient, projected
    onto ``tr_site W = 0`` and normalised in trace norm, is a dual witness
    and gives the lower bound.
    """
    k = 2 ** (n - 1)
    basis = _hermitian_basis(k)
    lifted = np.array([_lift_without(B, site, n) for B in basis])
    D = X.shape[0]
    scale = max(1.0, float(np.abs(np.linalg.eigvalsh(X)).max()))

    def primal(v):
        return X - np.tensordot(v, lifted, axes=1)

    def bounds(v, G):
        hi = float(np.abs(np.linalg.eigvalsh(primal(v))).max())
        W = _project_out_site(G, site, n)
        tn = trace_norm(W)
        lo = float(np.real(np.trace(X @ W))) / tn if tn > 1e-14 else 0.0
        return hi, max(lo, 0.0), W / tn if tn > 1e-14 else W

    # the diagonal shift by the mean eigenvalue is a good start
    v = np.zeros(len(basis)) if y0 is None else y0.copy()
    if y0 is None:
        v[:k] = np.real(np.trace(X)) / D
    mu = 0.1 * scale
    best_hi, best_lo, best_W, best_v = np.inf, 0.0, None, v
    while True:
        def f(vv):
            val, G = _softmax_abs(primal(vv), mu)
            return val, -np.real(np.einsum("bij,ji->b", lifted, G))

        res = minimize(f, v, jac=True, method="L-BFGS-B", options={"maxiter": 2000, "gtol": 1e-12, "ftol": 1e-15})
        v = res.x
        _, G = _softmax_abs(primal(v), mu)
        hi, lo, W = bounds(v, G)
        if hi < best_hi:
            best_hi, best_v = hi, v
        if lo > best_lo:
            best_lo, best_W = lo, W
        if best_hi - best_lo <= tol * scale or mu < 1e-9 * scale:
            break
        mu /= 8
    Y = np.tensordot(best_v, basis, axes=1)
    return best_lo, best_hi, Y, best_W, best_v


def qubit_lipschitz(X: np.ndarray, system: QubitSystem, gap_tol: float = 1e-4) -> QubitLipschitzReport:
    """Certified per-site brackets of ``min_Y ||X - Y (x) I_i||_inf``.

    ``gap_tol`` is relative to ``max(1, ||X||_inf)``.
    """
    X = np.asarray(X, dtype=complex)
    if X.shape != (system.dim, system.dim):
        raise ValueError(f"observable must be {system.dim}x{system.dim}, got {X.shape}")
    if not is_hermitian(X, rtol=1e-10):
        raise ValueError("Lipschitz constant is defined for Hermitian observables")
    X = (X + X.conj().T) / 2
    n = system.n
    lo, hi, mins, wits = [], [], [], []
    if n == 1:
        w = np.linalg.eigvalsh(X)
        half = (w[-1] - w[0]) / 2
        _, V = np.linalg.eigh(X)
        W = (np.outer(V[:, -1], V[:, -1].conj()) - np.outer(V[:, 0], V[:, 0].conj())) / 2
        report = QubitLipschitzReport(np.array([half]), np.array([half]),
                                      [np.array([[(w[-1] + w[0]) / 2]])], [W])
        return report
    certified = True
    scale = max(1.0, float(np.abs(np.linalg.eigvalsh(X)).max()))
    for site in range(n):
        l, h, Y, W, _ = _site_bracket(X, site, n, gap_tol)
        if h - l > gap_tol * scale:
            certified = False
        lo.append(l)
        hi.append(h)
        mins.append(Y)
        wits.append(W)
    if not certified:
        warnings.warn("Lipschitz bracket wider than the requested gap", RuntimeWarning, stacklevel=2)
    return QubitLipschitzReport(np.array(lo), np.array(hi), mins, wits, certified)


def lipschitz_subgradient(X: np.ndarray, system: QubitSystem, report: QubitLipschitzReport) -> np.ndarray:
    """Supergradient direction of ``-||X||_L``: twice the dual witness of the worst site."""
    i = int(np.argmax(report.hi))
    return 2.0 * report.witnesses[i]


@dataclass
class W1Estimate:
    lower_bound: float
    certificate: np.ndarray
    lipschitz_hi: float
    sandwich_lo: float
    sandwich_hi: float
    iterations: int


def w1_dual(rho: np.ndarray, sigma: np.ndarray, system: QubitSystem, iters: int = 30,
            gap_tol: float = 1e-4, step: float = 0.2) -> W1Estimate:
    """Certified lower bound on the quantum W1 distance by supergradient ascent on the dual.

    The objective is the scale-free ratio ``tr[X (rho - sigma)] / ||X||_L``;
    every candidate is certified with the upper end of its Lipschitz bracket.
    """
    rho, sigma = np.asarray(rho, dtype=complex), np.asarray(sigma, dtype=complex)
    if rho.shape != (system.dim, system.dim) or sigma.shape != rho.shape:
        raise ValueError("states must match the qubit system dimension")
    delta = (rho - sigma + (rho - sigma).conj().T) / 2
    tn = trace_norm(delta)
    lo_s, hi_s = 0.5 * tn, 0.75 * system.n * tn
    if tn < 1e-14:
        return W1Estimate(0.0, np.zeros_like(delta), 0.0, lo_s, hi_s, 0)
    w, V = np.linalg.eigh(delta)
    X = (V * np.where(w > 0, 0.5, -0.5)) @ V.conj().T

    def certify(X):
        rep = qubit_lipschitz(X, system, gap_tol)
        L = rep.lipschitz_hi
        if L < 1e-14:
            return -np.inf, X, rep
        return float(np.real(np.trace(X @ delta))) / L, X / L, rep

    best_val, best_X, rep = certify(X)
    it = 0
    if system.n > 1:
        Xc = best_X
        for it in range(1, iters + 1):
            L = rep.lipschitz_hi
            val = float(np.real(np.trace(Xc @ delta)))
            # gradient of val / L at the current point
            g = delta / L - val / L**2 * lipschitz_subgradient(Xc, system, rep)
            Xc = Xc + step / math.sqrt(it) * g
            Xc = (Xc + Xc.conj().T) / 2
            v, Xn, rep = certify(Xc)
            Xc = Xn
            if v > best_val:
                best_val, best_X = v, Xn
    if best_val > hi_s + 1e-9:
        raise RuntimeError(f"W1 lower bound {best_val} exceeds the sandwich upper bound {hi_s}")
    return W1Estimate(max(best_val, 0.0), best_X, qubit_lipschitz(best_X, system, gap_tol).lipschitz_hi,
                      lo_s, hi_s, it)


def depolarize(p: float, n: int) -> ChannelRep:
    """``N_p^{(x)n}`` with ``N_p(rho) = (1-p) rho + p tr(rho) I/2``."""
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"depolarizing parameter must lie in [0, 1], got {p}")
    single = [math.sqrt(1 - 3 * p / 4) * PAULI_I] + [math.sqrt(p / 4) * P for P in (PAULI_X, PAULI_Y, PAULI_Z)]
    kraus = [np.eye(1, dtype=complex)]
    for _ in range(n):
        kraus = [np.kron(k2, k1) for k2 in single for k1 in kraus]
    return ChannelRep(kraus=kraus, name=f"depolarize({p:g})")


def depolarize_apply(p: float, rho: np.ndarray) -> np.ndarray:
    """Apply single-qubit depolarizing noise to every qubit of ``rho``."""
    rho = np.asarray(rho, dtype=complex)
    n = int(round(math.log2(rho.shape[0])))
    if 2**n != rho.shape[0]:
        raise ValueError("state dimension is not a power of two")
    out = rho
    for site in range(n):
        if n == 1:
            mixed = np.trace(out) * np.eye(2) / 2
        else:
            mixed = _lift_without(partial_trace_qubit(out, site, n), site, n) / 2
        out = (1 - p) * out + p * mixed
    return out


def _check_cptp(kraus: np.ndarray, tol: float = 1e-10) -> None:
    k = kraus.shape[1]
    defect = np.abs(sum(K.conj().T @ K for K in kraus) - np.eye(k)).max()
    if defect > tol:
        raise ValueError(f"local channel is not trace preserving (defect {defect:.2e})")


@dataclass
class LocalRecoveryScheme:
    """Per time step, a list of ``(sites, kraus)`` pairs acting on pairwise disjoint site sets."""

    n: int
    locality: int
    layers: list

    def __post_init__(self):
        for t, layer in enumerate(self.layers):
            seen: set = set()
            for sites, kraus in layer:
                sites = tuple(sites)
                if len(sites) > self.locality:
                    raise ValueError(f"layer {t}: block {sites} exceeds locality {self.locality}")
                if seen & set(sites):
                    raise ValueError(f"layer {t}: block {sites} overlaps another block")
                if any(not 0 <= s < self.n for s in sites):
                    raise ValueError(f"layer {t}: block {sites} out of range")
                seen |= set(sites)
                kraus = np.asarray(kraus, dtype=complex)
                if kraus.shape[1:] != (2 ** len(sites), 2 ** len(sites)):
                    raise ValueError(f"layer {t}: Kraus shape {kraus.shape} does not fit block {sites}")
                _check_cptp(kraus)

    def layer(self, t: int) -> list:
        """Layers repeat cyclically when the run is longer than the stored schedule."""
        return self.layers[t % len(self.layers)]

    def layer_channel(self, t: int) -> ChannelRep:
        kraus = [np.eye(2**self.n, dtype=complex)]
        for sites, local in self.layer(t):
            lifted = [embed_qubit_op(K, sites, self.n) for K in local]
            kraus = [L @ K for L in lifted for K in kraus]
        return ChannelRep(kraus=kraus, name=f"recovery[{t}]")


def recovery_apply(scheme: LocalRecoveryScheme, t: int, rho: np.ndarray) -> np.ndarray:
    rho = np.asarray(rho, dtype=complex)
    for sites, local in scheme.layer(t):
        lifted = [embed_qubit_op(K, sites, scheme.n) for K in local]
        rho = sum(L @ rho @ L.conj().T for L in lifted)
    return rho


def identity_gadget(k: int = 1) -> np.ndarray:
    return np.eye(2**k, dtype=complex)[None]


def reset_gadget() -> np.ndarray:
    """Single-qubit reset to ``|0>``."""
    return np.array([[[1, 0], [0, 0]], [[0, 1], [0, 0]]], dtype=complex)


def parity_refresh_gadget() -> np.ndarray:
    """Two-qubit ``ZZ`` parity check that flips qubit 0 on odd parity, snapping onto span{|00>, |11>}."""
    even = np.diag([1, 0, 0, 1]).astype(complex)
    odd = np.diag([0, 1, 1, 0]).astype(complex)
    flip = np.kron(PAULI_I, PAULI_X)
    return np.array([even, flip @ odd])


def random_local_channel(k: int, rng: np.random.Generator, rank: int | None = None) -> np.ndarray:
    """Kraus set of a random channel on ``k`` qubits from a Haar-like random isometry."""
    d = 2**k
    rank = d if rank is None else rank
    G = rng.normal(size=(d * rank, d)) + 1j * rng.normal(size=(d * rank, d))
    V, _ = np.linalg.qr(G)
    return V.reshape(rank, d, d)


def random_scheme(n: int, locality: int, steps: int, rng: np.random.Generator) -> LocalRecoveryScheme:
    """Random partition of the qubits into blocks of size <= locality, each with a random channel."""
    layers = []
    for _ in range(steps):
        order = list(rng.permutation(n))
        layer = []
        while order:
            size = int(rng.integers(1, locality + 1))
            block, order = order[:size], order[size:]
            layer.append((tuple(int(s) for s in block), random_local_channel(len(block), rng)))
        layers.append(layer)
    return LocalRecoveryScheme(n, locality, layers)


def depolarizing_threshold(locality: int) -> float:
    """``1 - 1/l``."""
    return 1.0 - 1.0 / locality


def decay_threshold(locality: int) -> float:
    """``1 - 2/(3 l)``: above this noise rate the iterated bound decays."""
    return 1.0 - 2.0 / (3.0 * locality)


def decay_bound(n: int, locality: int, p: float, t: int) -> float:
    """``3n (3l(1-p)/2)^t``, a bound on the trace-norm distance after ``t`` noisy recovery steps."""
    return 3.0 * n * (1.5 * locality * (1.0 - p)) ** t


@dataclass
class QubitTrajectory:
    trace_distance: np.ndarray
    w1_lower: np.ndarray
    analytic_bound: np.ndarray
    threshold_depolarizing: float
    threshold_decay: float


def noisy_recovery_experiment(n: int, locality: int, p: float, T: int, scheme: LocalRecoveryScheme,
                              rho: np.ndarray, sigma: np.ndarray, w1: bool = True, w1_iters: int = 0) -> QubitTrajectory:
    """Alternate depolarizing noise and the recovery layers for ``T`` steps.

    Entry ``t`` of each array refers to the states after ``t`` steps.
    """
    if not 0.0 < p < 1.0 and p != 1.0:
        raise ValueError(f"noise rate must lie in (0, 1], got {p}")
    if T < 1 or scheme.n != n or scheme.locality > locality:
        raise ValueError("invalid horizon or scheme for this experiment")
    system = QubitSystem(n)
    td, wl, bd = [], [], []
    r, s = np.asarray(rho, dtype=complex), np.asarray(sigma, dtype=complex)
    for t in range(T + 1):
        if t > 0:
            r = recovery_apply(scheme, t - 1, depolarize_apply(p, r))
            s = recovery_apply(scheme, t - 1, depolarize_apply(p, s))
        td.append(trace_norm(r - s))
        wl.append(w1_dual(r, s, system, iters=w1_iters).lower_bound if w1 else np.nan)
        bd.append(decay_bound(n, locality, p, t))
    return QubitTrajectory(np.array(td), np.array(wl), np.array(bd),
                           depolarizing_threshold(locality), decay_threshold(locality))
