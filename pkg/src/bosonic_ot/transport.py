"""Bosonic Lipschitz seminorm, certified lower bounds on the bosonic Wasserstein
distance, diameter bounds and channel contraction probes."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse.linalg import LinearOperator, cg

from .channels import ChannelRep, EnvironmentSpec, kappa, loss_channel
from .fock import ModeSystem, all_quadratures, is_hermitian, operator_norm

DEGENERATE_SEMINORM = 1e-8


@dataclass
class LipschitzReport:
    """Commutator norms ``||[R_j, X]||`` for ``R = Q_0, P_0, Q_1, ...``."""

    raw_norms: np.ndarray
    interior_norms: np.ndarray

    @property
    def seminorm(self) -> float:
        return float(self.interior_norms.max())

    @property
    def raw_seminorm(self) -> float:
        return float(self.raw_norms.max())

    def entry(self, mode: int, quadrature: str) -> tuple[float, float]:
        j = 2 * mode + {"Q": 0, "P": 1}[quadrature]
        return float(self.raw_norms[j]), float(self.interior_norms[j])


def _interior_blocks(system: ModeSystem) -> tuple[np.ndarray, list[np.ndarray]]:
    idx = system.interior_indices()
    return idx, [R[np.ix_(idx, idx)] for R in all_quadratures(system)]


def lipschitz_seminorm(X: np.ndarray, system: ModeSystem) -> LipschitzReport:
    X = np.asarray(X)
    if not is_hermitian(X, rtol=1e-10):
        raise ValueError("Lipschitz seminorm is defined for Hermitian observables")
    idx = system.interior_indices()
    raw, inner = [], []
    for R in all_quadratures(system):
        C = R @ X - X @ R
        raw.append(operator_norm(C))
        inner.append(operator_norm(C[np.ix_(idx, idx)]))
    return LipschitzReport(np.array(raw), np.array(inner))


def interior_seminorm(X: np.ndarray, system: ModeSystem) -> float:
    """Fast path: only the interior-projected commutator norms."""
    X = np.asarray(X)
    idx = system.interior_indices()
    Xr, Xc = X[idx, :], X[:, idx]
    return max(operator_norm(R[idx, :] @ Xc - Xr @ R[:, idx]) for R in all_quadratures(system))


def random_observable(system: ModeSystem, rng: np.random.Generator, interior: bool = True) -> np.ndarray:
    """GUE matrix, optionally compressed to the interior subspace."""
    n = system.dim
    A = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    X = (A + A.conj().T) / 2
    if interior:
        mask = system.interior_mask()
        X = X * np.outer(mask, mask)
    return X


def contraction_probe(channel: ChannelRep, system: ModeSystem, trials: int = 50, seed: int = 0) -> float:
    """Largest observed ``||grad N^dag(X)|| / ||grad X||`` over random interior observables."""
    rng = np.random.default_rng(seed)
    best, used = -np.inf, 0
    for _ in range(trials):
        X = random_observable(system, rng)
        s = interior_seminorm(X, system)
        if s < DEGENERATE_SEMINORM:
            continue
        used += 1
        best = max(best, interior_seminorm(channel.adjoint_apply(X), system) / s)
    if used == 0:
        raise ValueError("every sampled observable had vanishing seminorm")
    return float(best)


def smoothing_probe(lam: float, env: EnvironmentSpec | None, system: ModeSystem, trials: int = 50,
                    seed: int = 0) -> float:
    """Largest ``||grad N_lam^dag(X)||`` over random interior observables with ``||X||_inf = 1``."""
    if system.n_modes != 1:
        raise ValueError("smoothing probe is defined for a single mode")
    chan = loss_channel(lam, env, system.cutoff)
    rng = np.random.default_rng(seed)
    best = 0.0
    for _ in range(trials):
        X = random_observable(system, rng)
        X /= operator_norm(X)
        best = max(best, interior_seminorm(chan.adjoint_apply(X), system))
    return best


def smoothing_constant(lam: float, env: EnvironmentSpec | None, cutoff: int) -> float:
    return kappa(lam, env, cutoff)


def diameter_bound(n: int, energy: float) -> float:
    """``4 sqrt(2n(n+E))``: bound on the distance between any two states of mean energy at most ``E``."""
    if n < 1 or energy < 0:
        raise ValueError(f"need n >= 1 and E >= 0, got n={n}, E={energy}")
    return 4.0 * math.sqrt(2.0 * n * (n + energy))


def diameter_bound_marginal(n_active: int, energy: float) -> float:
    """Same bound when the states agree on all but ``n_active`` modes."""
    if n_active < 0 or energy < 0:
        raise ValueError(f"need n_active >= 0 and E >= 0, got {n_active}, {energy}")
    return 4.0 * math.sqrt(2.0 * n_active * (n_active + energy))


@dataclass
class SplittingConfig:
    penalty: float = 1.0
    max_iters: int = 2000
    tol: float = 1e-6
    cg_tol: float = 1e-8
    seed: int = 0
    check_every: int = 25
    # stop early once the certified value improves by less than this over `stall_checks` checks
    stall_tol: float = 1e-7
    stall_checks: int = 8

    def __post_init__(self):
        for name in ("penalty", "max_iters", "tol", "cg_tol", "check_every", "stall_tol", "stall_checks"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")


@dataclass
class WBEstimate:
    lower_bound: float
    certificate: np.ndarray
    iterations: int
    primal_residual: float
    dual_residual: float
    repair_scale: float
    converged: bool
    stalled: bool = False
    swapped: bool = False
    history: list = field(default_factory=list)


def _project_unit_ball_antihermitian(Z: np.ndarray) -> np.ndarray:
    H = 1j * Z
    H = (H + H.conj().T) / 2
    w, V = np.linalg.eigh(H)
    return -1j * ((V * np.clip(w, -1.0, 1.0)) @ V.conj().T)


def wb_lower_bound(rho: np.ndarray, sigma: np.ndarray, system: ModeSystem,
                   config: SplittingConfig | None = None) -> WBEstimate:
    """Certified lower bound on the bosonic Wasserstein distance by ADMM on the dual problem.

    The observable is optimised on the interior block, where the constraint
    ``||[R_j, X]|| <= 1`` is exactly the interior seminorm.  Each ADMM sweep
    solves ``sum_j ad_j^2 X = rhs`` by conjugate gradients on traceless
    Hermitian matrices, then projects ``Y_j`` onto the spectral unit ball.
    """
    cfg = SplittingConfig() if config is None else config
    rho, sigma = np.asarray(rho), np.asarray(sigma)
    if rho.shape != (system.dim, system.dim) or sigma.shape != rho.shape:
        raise ValueError("states must match the system dimension")
    idx, R = _interior_blocks(system)
    full_delta = rho - sigma
    D = full_delta[np.ix_(idx, idx)]
    D = (D + D.conj().T) / 2
    # the certificate is scale free, so normalise the objective to keep tolerances meaningful
    tn = float(np.abs(np.linalg.eigvalsh(D)).sum())
    if tn > 0:
        D = D / tn
    m = idx.size
    eye = np.eye(m)
    D0 = D - np.trace(D) / m * eye  # constant shifts of X leave the certificate invariant
    rho_pen = cfg.penalty

    def ad(A, X):
        return A @ X - X @ A

    def seminorm(X):
        return max(operator_norm(ad(A, X)) for A in R)

    def certify(X):
        s = seminorm(X)
        if s < DEGENERATE_SEMINORM:
            return None
        Xf = X / s
        return Xf, s, float(np.real(np.sum(Xf.T * D)))

    def normal_op(v):
        X = v.reshape(m, m)
        out = sum(ad(A, ad(A, X)) for A in R)
        return (out - np.trace(out) / m * eye).reshape(-1)

    op = LinearOperator((m * m, m * m), matvec=normal_op, dtype=complex)

    # starting point: the better of the two quadrature certificates
    best = None
    for A in R:
        c = certify(A)
        if c is not None and (best is None or abs(c[2]) > abs(best[2])):
            best = c
    X = best[0] * np.sign(best[2]) if best[2] != 0 else best[0]
    Y = [_project_unit_ball_antihermitian(ad(A, X)) for A in R]
    U = [np.zeros((m, m), dtype=complex) for _ in R]
    best = certify(X)
    r_norm = s_norm = np.inf
    converged = stalled = False
    it = 0
    history = [best[2]]
    for it in range(1, cfg.max_iters + 1):
        rhs = D0 / rho_pen + sum(ad(A, y - u) for A, y, u in zip(R, Y, U))
        rhs = rhs - np.trace(rhs) / m * eye
        x, _ = cg(op, rhs.reshape(-1), x0=X.reshape(-1), rtol=cfg.cg_tol, atol=0.0, maxiter=500)
        X = x.reshape(m, m)
        X = (X + X.conj().T) / 2
        C = [ad(A, X) for A in R]
        Y_old = Y
        Y = [_project_unit_ball_antihermitian(c + u) for c, u in zip(C, U)]
        U = [u + c - y for u, c, y in zip(U, C, Y)]
        r_norm = math.sqrt(sum(np.linalg.norm(c - y) ** 2 for c, y in zip(C, Y)))
        s_norm = rho_pen * np.linalg.norm(sum(ad(A, y - yo) for A, y, yo in zip(R, Y, Y_old)))
        # residual balancing keeps the two residuals within a factor of ten
        if r_norm > 10 * s_norm:
            rho_pen *= 2
            U = [u / 2 for u in U]
        elif s_norm > 10 * r_norm:
            rho_pen /= 2
            U = [u * 2 for u in U]
        if it % cfg.check_every == 0:
            c = certify(X)
            if c is not None and c[2] > best[2]:
                best = c
            history.append(best[2])
            k = cfg.stall_checks
            if len(history) > k and history[-1] - history[-1 - k] <= cfg.stall_tol * max(1.0, abs(history[-1])):
                stalled = True
                break
        if r_norm < cfg.tol and s_norm < cfg.tol:
            converged = True
            break
    final = certify(X)
    if final is not None and final[2] > best[2]:
        best = final
    if not (converged or stalled):
        warnings.warn(f"ADMM stopped after {it} iterations (primal {r_norm:.2e}, dual {s_norm:.2e})",
                      RuntimeWarning, stacklevel=2)
    Xf, scale, value = best
    swapped = value < 0
    if swapped:
        Xf, value = -Xf, -value
    cert = np.zeros((system.dim, system.dim), dtype=complex)
    cert[np.ix_(idx, idx)] = Xf
    value = float(np.real(np.trace(cert @ full_delta)))
    return WBEstimate(lower_bound=value, certificate=cert, iterations=it, primal_residual=float(r_norm),
                      dual_residual=float(s_norm), repair_scale=float(scale), converged=converged,
                      stalled=stalled, swapped=swapped, history=history)
