"""Quantum channels on truncated Fock spaces.

A :class:`ChannelRep` stores a channel as a list of Kraus operators, as a
Liouville (superoperator) matrix, or both.  The Liouville convention is
row-major vectorisation, ``vec(K rho K^dag) = (K kron conj(K)) vec(rho)``, so
the Hilbert-Schmidt adjoint is the conjugate transpose of the matrix.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .fock import (
    ModeSystem,
    check_state,
    expm_antihermitian,
    operator_norm,
    single_mode_ladder,
    tensor,
    trace_norm,
)

ENV_EIGEN_FLOOR = 1e-12
DEFAULT_TP_TOL = 1e-3


class QualityGateError(RuntimeError):
    """A numerical-quality gate (trace preservation, POVM completeness, truncation) failed."""


@dataclass(frozen=True)
class EnvironmentSpec:
    """Environment state fed into the beamsplitter: vacuum, thermal or a custom density matrix."""

    kind: str = "vacuum"
    beta: float | None = None
    state: np.ndarray | None = None

    def __post_init__(self):
        if self.kind not in ("vacuum", "thermal", "custom"):
            raise ValueError(f"unknown environment kind {self.kind!r}")
        if self.kind == "thermal" and (self.beta is None or not self.beta > 0):
            raise ValueError(f"thermal environment needs beta > 0, got {self.beta}")
        if self.kind == "custom":
            if self.state is None:
                raise ValueError("custom environment needs a density matrix")
            check_state(self.state)

    @classmethod
    def vacuum(cls) -> "EnvironmentSpec":
        return cls("vacuum")

    @classmethod
    def thermal(cls, beta: float) -> "EnvironmentSpec":
        return cls("thermal", beta=beta)

    @classmethod
    def custom(cls, state: np.ndarray) -> "EnvironmentSpec":
        return cls("custom", state=np.asarray(state, dtype=complex))

    def density(self, cutoff: int) -> np.ndarray:
        if self.kind == "vacuum":
            rho = np.zeros((cutoff, cutoff), dtype=complex)
            rho[0, 0] = 1.0
            return rho
        if self.kind == "thermal":
            return thermal_state(self.beta, cutoff)
        if self.state.shape != (cutoff, cutoff):
            raise ValueError(f"custom environment is {self.state.shape}, expected cutoff {cutoff}")
        return self.state


class ChannelRep:
    """A CP map between square operator spaces.

    Exactly one of ``kraus`` / ``liouville`` is required; the other form is
    computed lazily when needed.
    """

    def __init__(self, kraus: Sequence[np.ndarray] | None = None, liouville: np.ndarray | None = None,
                 system: ModeSystem | None = None, name: str = "channel"):
        if kraus is None and liouville is None:
            raise ValueError("need Kraus operators or a Liouville matrix")
        self._kraus = None if kraus is None else np.asarray(kraus, dtype=complex)
        self._liouville = None if liouville is None else np.asarray(liouville, dtype=complex)
        if self._kraus is not None:
            if self._kraus.ndim != 3 or self._kraus.shape[1] != self._kraus.shape[2]:
                raise ValueError(f"Kraus operators must be square and equal-sized, got {self._kraus.shape}")
            self.dim = self._kraus.shape[1]
        else:
            d = math.isqrt(self._liouville.shape[0])
            if self._liouville.shape != (d * d, d * d):
                raise ValueError(f"Liouville matrix has bad shape {self._liouville.shape}")
            self.dim = d
        if system is not None and system.dim != self.dim:
            raise ValueError(f"system dimension {system.dim} does not match channel dimension {self.dim}")
        self.system = system
        self.name = name
        self._tp_defect = None

    @property
    def kraus(self) -> np.ndarray:
        if self._kraus is None:
            self._kraus = liouville_to_kraus(self._liouville)
        return self._kraus

    @property
    def liouville(self) -> np.ndarray:
        if self._liouville is None:
            K = self._kraus
            self._liouville = sum(np.kron(k, k.conj()) for k in K)
        return self._liouville

    @property
    def has_liouville(self) -> bool:
        return self._liouville is not None

    def _check(self, op: np.ndarray) -> np.ndarray:
        op = np.asarray(op)
        if op.shape != (self.dim, self.dim):
            raise ValueError(f"operator shape {op.shape} does not match channel dimension {self.dim}")
        return op

    def apply(self, rho: np.ndarray) -> np.ndarray:
        rho = self._check(rho)
        if self._liouville is not None:
            return (self._liouville @ rho.reshape(-1)).reshape(self.dim, self.dim)
        K = self._kraus
        return np.einsum("kij,jl,kml->im", K, rho, K.conj(), optimize=True)

    def adjoint_apply(self, X: np.ndarray) -> np.ndarray:
        X = self._check(X)
        if self._liouville is not None:
            return (self._liouville.conj().T @ X.reshape(-1)).reshape(self.dim, self.dim)
        K = self._kraus
        return np.einsum("kji,jl,klm->im", K.conj(), X, K, optimize=True)

    __call__ = apply

    def tp_defect(self, projector: np.ndarray | None = None) -> float:
        """``||P (N^dag(I) - I) P||_inf``; with no projector the full space is used and cached."""
        if projector is None and self._tp_defect is not None:
            return self._tp_defect
        eye = np.eye(self.dim)
        dev = self.adjoint_apply(eye) - eye
        if projector is not None:
            return operator_norm(projector @ dev @ projector)
        self._tp_defect = operator_norm(dev)
        return self._tp_defect

    def require_tp(self, tol: float = DEFAULT_TP_TOL, projector: np.ndarray | None = None) -> "ChannelRep":
        defect = self.tp_defect(projector)
        if defect > tol:
            raise QualityGateError(f"{self.name}: trace-preservation defect {defect:.3e} exceeds {tol:.1e}")
        return self

    def compose(self, first: "ChannelRep") -> "ChannelRep":
        """``self after first``."""
        if first.dim != self.dim:
            raise ValueError("cannot compose channels of different dimension")
        name = f"{self.name}*{first.name}"
        if self.has_liouville or first.has_liouville:
            return ChannelRep(liouville=self.liouville @ first.liouville, system=self.system, name=name)
        K = np.einsum("aij,bjk->abik", self._kraus, first._kraus).reshape(-1, self.dim, self.dim)
        return ChannelRep(kraus=K, system=self.system, name=name)

    def tensor(self, other: "ChannelRep", system: ModeSystem | None = None) -> "ChannelRep":
        """``self`` on the fast (lower-index) factor, ``other`` on the slow factor."""
        K = np.array([tensor(k1, k2) for k2 in other.kraus for k1 in self.kraus])
        return ChannelRep(kraus=K, system=system, name=f"{self.name}(x){other.name}")


def identity_channel(system: ModeSystem) -> ChannelRep:
    return ChannelRep(kraus=[np.eye(system.dim, dtype=complex)], system=system, name="identity")


def liouville_to_kraus(S: np.ndarray, floor: float = 1e-13) -> np.ndarray:
    """Kraus operators from the Choi matrix of a row-major Liouville matrix."""
    d = math.isqrt(S.shape[0])
    # S[(i,k),(j,l)] = sum K_ij conj(K_kl); Choi[(i,j),(k,l)] is the same numbers reordered
    choi = S.reshape(d, d, d, d).transpose(0, 2, 1, 3).reshape(d * d, d * d)
    choi = (choi + choi.conj().T) / 2
    w, V = np.linalg.eigh(choi)
    keep = w > floor * max(w.max(), 1.0)
    return np.array([np.sqrt(wk) * V[:, k].reshape(d, d) for k, wk in zip(np.flatnonzero(keep), w[keep])])


def _check_transmissivity(lam: float) -> float:
    lam = float(lam)
    if not 0.0 <= lam <= 1.0:
        raise ValueError(f"transmissivity must lie in [0, 1], got {lam}")
    return lam


def beamsplitter_unitary(lam: float, system: ModeSystem) -> np.ndarray:
    """``exp(theta (a^dag b - b^dag a))`` with ``cos(theta) = sqrt(lam)``; ``a`` is mode 0, ``b`` mode 1.

    Heisenberg action on the interior: ``a -> sqrt(lam) a + sqrt(1-lam) b``.
    """
    lam = _check_transmissivity(lam)
    if system.n_modes != 2:
        raise ValueError("beamsplitter needs a two-mode system")
    if lam == 1.0:
        return np.eye(system.dim, dtype=complex)
    a1 = single_mode_ladder(system.cutoff)
    a = system.embed(a1, 0)
    b = system.embed(a1, 1)
    G = (a.conj().T @ b - b.conj().T @ a) * math.acos(math.sqrt(lam))
    return expm_antihermitian(G)


def thermal_state(beta: float, cutoff: int) -> np.ndarray:
    """Truncated Gibbs state ``exp(-beta N)/Z``."""
    if not beta > 0:
        raise ValueError(f"inverse temperature must be positive, got {beta}")
    logw = -beta * np.arange(cutoff)
    w = np.exp(logw - logw.max())
    return np.diag(w / w.sum()).astype(complex)


def stinespring_kraus(U: np.ndarray, env: np.ndarray, cutoff: int) -> np.ndarray:
    """Kraus set of ``rho -> tr_E[U (rho (x) env) U^dag]`` with system = mode 0, environment = mode 1."""
    p, vecs = np.linalg.eigh((env + env.conj().T) / 2)
    d = cutoff
    U4 = U.reshape(d, d, d, d)  # (env_out, sys_out, env_in, sys_in)
    kraus = []
    for pm, em in zip(p, vecs.T):
        if pm < ENV_EIGEN_FLOOR:
            continue
        Um = np.sqrt(pm) * np.einsum("kajb,j->kab", U4, em)
        kraus.extend(Um)
    return np.array(kraus)


def loss_channel(lam: float, env: EnvironmentSpec | None = None, cutoff: int = 24,
                 tp_tol: float = DEFAULT_TP_TOL) -> ChannelRep:
    """Single-mode beamsplitter channel with transmissivity ``lam`` and environment ``env``."""
    lam = _check_transmissivity(lam)
    env = EnvironmentSpec.vacuum() if env is None else env
    system = ModeSystem(1, cutoff)
    sigma = env.density(cutoff)
    if lam == 1.0:
        return ChannelRep(kraus=[np.eye(cutoff, dtype=complex)], system=system, name="identity")
    if lam == 0.0:
        # replacement channel: the output is the environment state itself
        p, vecs = np.linalg.eigh(sigma)
        kraus = [np.sqrt(pm) * np.outer(em, np.eye(cutoff)[k])
                 for pm, em in zip(p, vecs.T) if pm >= ENV_EIGEN_FLOOR for k in range(cutoff)]
        return ChannelRep(kraus=kraus, system=system, name="loss(0)").require_tp(tp_tol)
    U = beamsplitter_unitary(lam, ModeSystem(2, cutoff))
    chan = ChannelRep(kraus=stinespring_kraus(U, sigma, cutoff), system=system, name=f"loss({lam:g})")
    return chan.require_tp(tp_tol)


def product_channel(channels: Sequence[ChannelRep], system: ModeSystem) -> ChannelRep:
    """Tensor product with ``channels[j]`` acting on mode ``j``."""
    out = channels[0]
    for ch in channels[1:]:
        out = out.tensor(ch)
    return ChannelRep(kraus=out.kraus, system=system, name="(x)".join(c.name for c in channels))


def ou_transmissivity(beta: float, t: float) -> float:
    return math.exp(-2.0 * math.sinh(beta / 2.0) * t)


def ou_step(beta: float, t: float, cutoff: int) -> ChannelRep:
    """Ornstein-Uhlenbeck evolution for time ``t`` as a thermal-environment loss channel."""
    if not beta > 0:
        raise ValueError(f"inverse temperature must be positive, got {beta}")
    if t < 0:
        raise ValueError(f"time must be non-negative, got {t}")
    return loss_channel(ou_transmissivity(beta, t), EnvironmentSpec.thermal(beta), cutoff)


def ou_generator(beta: float, cutoff: int) -> np.ndarray:
    """Liouville matrix of the Schrodinger-picture OU generator on one truncated mode."""
    a = single_mode_ladder(cutoff)
    ad = a.conj().T
    eye = np.eye(cutoff)

    def dissipator(L):
        LdL = L.conj().T @ L
        return np.kron(L, L.conj()) - 0.5 * (np.kron(LdL, eye) + np.kron(eye, LdL.T))

    return math.exp(beta / 2) * dissipator(a) + math.exp(-beta / 2) * dissipator(ad)


def ou_lindblad_apply(beta: float, t: float, rho: np.ndarray, steps: int = 200,
                      trace_tol: float = 1e-6) -> np.ndarray:
    """Integrate the OU master equation with classical fourth-order Runge-Kutta."""
    if not beta > 0 or t < 0:
        raise ValueError(f"need beta > 0 and t >= 0, got beta={beta}, t={t}")
    rho = np.asarray(rho, dtype=complex)
    d = rho.shape[0]
    L = ou_generator(beta, d)
    h = t / steps
    v = rho.reshape(-1).copy()
    tr0 = np.trace(rho)
    for _ in range(steps):
        k1 = L @ v
        k2 = L @ (v + 0.5 * h * k1)
        k3 = L @ (v + 0.5 * h * k2)
        k4 = L @ (v + h * k3)
        v = v + (h / 6) * (k1 + 2 * k2 + 2 * k3 + k4)
    out = v.reshape(d, d)
    drift = abs(np.trace(out) - tr0)
    if drift > trace_tol:
        raise QualityGateError(f"OU integration drifted in trace by {drift:.2e}")
    return out


def kappa(lam: float, env: EnvironmentSpec | None = None, cutoff: int = 24) -> float:
    """Smoothing constant ``sqrt(lam/(1-lam)) * max(||[Q, env]||_1, ||[P, env]||_1)``."""
    lam = float(lam)
    if not 0.0 < lam < 1.0:
        raise ValueError(f"kappa needs 0 < lam < 1, got {lam}")
    env = EnvironmentSpec.vacuum() if env is None else env
    sigma = env.density(cutoff)
    a = single_mode_ladder(cutoff)
    Q = (a + a.conj().T) / math.sqrt(2)
    P = -1j * (a - a.conj().T) / math.sqrt(2)
    cq = trace_norm(Q @ sigma - sigma @ Q)
    cp = trace_norm(P @ sigma - sigma @ P)
    return math.sqrt(lam / (1 - lam)) * max(cq, cp)
