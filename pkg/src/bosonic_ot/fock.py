"""Dense linear algebra on truncated multi-mode Fock spaces.

Conventions used throughout the package:

* each mode keeps Fock levels ``0 .. cutoff-1``;
* multi-mode basis ordering is little-endian: mode 0 varies fastest, so the
  flat index of ``|k_0, k_1, ...>`` is ``sum_j k_j * cutoff**j``;
* quadratures satisfy ``a = (Q + iP)/sqrt(2)``, i.e. ``Q = (a + a^dag)/sqrt(2)``
  and ``P = -i (a - a^dag)/sqrt(2)``;
* identities involving unbounded operators only hold on the *interior*
  subspace (per-mode levels ``0 .. cutoff-1-guard_band``), which is what
  :meth:`ModeSystem.interior_projector` selects.

Operators are plain complex :class:`numpy.ndarray` matrices; a
:class:`ModeSystem` carries the mode structure that gives them meaning.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

HERMITIAN_RTOL = 1e-12
UNITARY_TOL = 1e-10


def default_guard_band(cutoff: int) -> int:
    """``max(4, ceil(d/5))``, clamped so at least one interior level remains."""
    return min(max(4, math.ceil(cutoff / 5)), cutoff - 1)


@dataclass(frozen=True)
class ModeSystem:
    """``n_modes`` bosonic modes, each truncated to ``cutoff`` Fock levels."""

    n_modes: int
    cutoff: int
    guard_band: int = field(default=-1)

    def __post_init__(self):
        if self.n_modes < 1:
            raise ValueError(f"n_modes must be positive, got {self.n_modes}")
        if self.cutoff < 1:
            raise ValueError(f"cutoff must be positive, got {self.cutoff}")
        if self.guard_band == -1:
            object.__setattr__(self, "guard_band", default_guard_band(self.cutoff))
        if not 0 <= self.guard_band < self.cutoff:
            raise ValueError(
                f"guard_band must satisfy 0 <= g < cutoff, got g={self.guard_band}, d={self.cutoff}"
            )

    @property
    def dim(self) -> int:
        return self.cutoff**self.n_modes

    @property
    def shape(self) -> tuple[int, ...]:
        """Tensor shape of a state vector, slowest mode first (C order)."""
        return (self.cutoff,) * self.n_modes

    @property
    def interior_levels(self) -> int:
        return self.cutoff - self.guard_band

    def _check_mode(self, mode: int) -> None:
        if not 0 <= mode < self.n_modes:
            raise ValueError(f"mode {mode} out of range for {self.n_modes}-mode system")

    def level_array(self) -> np.ndarray:
        """``(dim, n_modes)`` integer array; row ``i`` holds the occupations of basis state ``i``."""
        idx = np.arange(self.dim)
        return np.stack([(idx // self.cutoff**j) % self.cutoff for j in range(self.n_modes)], axis=1)

    def index(self, levels: Sequence[int]) -> int:
        if len(levels) != self.n_modes:
            raise ValueError(f"expected {self.n_modes} occupation numbers, got {len(levels)}")
        if any(not 0 <= k < self.cutoff for k in levels):
            raise ValueError(f"occupation numbers {tuple(levels)} exceed cutoff {self.cutoff}")
        return int(sum(k * self.cutoff**j for j, k in enumerate(levels)))

    def basis_vector(self, levels: Sequence[int]) -> np.ndarray:
        v = np.zeros(self.dim, dtype=complex)
        v[self.index(levels)] = 1.0
        return v

    def interior_mask(self) -> np.ndarray:
        return np.all(self.level_array() < self.interior_levels, axis=1)

    def interior_projector(self) -> np.ndarray:
        return np.diag(self.interior_mask().astype(complex))

    def interior_indices(self) -> np.ndarray:
        return np.flatnonzero(self.interior_mask())

    def embed(self, op: np.ndarray, mode: int) -> np.ndarray:
        """Lift a single-mode ``cutoff x cutoff`` operator to act on ``mode``."""
        self._check_mode(mode)
        op = np.asarray(op)
        if op.shape != (self.cutoff, self.cutoff):
            raise ValueError(f"single-mode operator must be {self.cutoff}x{self.cutoff}, got {op.shape}")
        out = np.eye(1, dtype=complex)
        # kron(A, B): B varies fastest, so build from the slowest mode down.
        for j in reversed(range(self.n_modes)):
            out = np.kron(out, op if j == mode else np.eye(self.cutoff))
        return out


def single_mode_ladder(cutoff: int) -> np.ndarray:
    return np.diag(np.sqrt(np.arange(1, cutoff)), 1).astype(complex)


def ladder(system: ModeSystem, mode: int) -> np.ndarray:
    """Truncated annihilation operator of ``mode``: ``<k-1|a|k> = sqrt(k)``."""
    return system.embed(single_mode_ladder(system.cutoff), mode)


def quadratures(system: ModeSystem, mode: int) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(Q, P)`` for ``mode`` with ``a = (Q + iP)/sqrt(2)``."""
    a = ladder(system, mode)
    ad = a.conj().T
    return (a + ad) / np.sqrt(2), -1j * (a - ad) / np.sqrt(2)


def all_quadratures(system: ModeSystem) -> list[np.ndarray]:
    """``[Q_0, P_0, Q_1, P_1, ...]``."""
    out = []
    for j in range(system.n_modes):
        out.extend(quadratures(system, j))
    return out


def number_operator(system: ModeSystem) -> np.ndarray:
    return np.diag(system.level_array().sum(axis=1).astype(complex))


def expm_hermitian(H: np.ndarray, t: complex = 1.0) -> np.ndarray:
    """``exp(t H)`` for Hermitian ``H`` through its eigendecomposition.

    With ``t`` purely imaginary the result is unitary to machine precision,
    which is why every Gaussian unitary in the package is built this way.
    """
    w, V = np.linalg.eigh(H)
    return (V * np.exp(t * w)) @ V.conj().T


def expm_antihermitian(G: np.ndarray) -> np.ndarray:
    """``exp(G)`` for anti-Hermitian ``G`` (unitary output)."""
    return expm_hermitian(1j * G, -1j)


def displacement(system: ModeSystem, mode: int, alpha: complex) -> np.ndarray:
    """``exp(alpha a^dag - conj(alpha) a)`` on ``mode``, exponentiated in the truncated space."""
    alpha = complex(alpha)
    if not np.isfinite(alpha):
        raise ValueError(f"displacement amplitude must be finite, got {alpha}")
    a = single_mode_ladder(system.cutoff)
    G = alpha * a.conj().T - np.conj(alpha) * a
    return system.embed(expm_antihermitian(G), mode)


def coherent_state(system: ModeSystem, alphas: Sequence[complex]) -> np.ndarray:
    """Vector ``D(alpha)|0>`` built mode by mode (truncated displacement applied to vacuum)."""
    if len(alphas) != system.n_modes:
        raise ValueError(f"need {system.n_modes} amplitudes, got {len(alphas)}")
    vec = system.basis_vector([0] * system.n_modes)
    for j, alpha in enumerate(alphas):
        vec = displacement(system, j, alpha) @ vec
    return vec


def projector(vec: np.ndarray) -> np.ndarray:
    vec = np.asarray(vec, dtype=complex)
    return np.outer(vec, vec.conj())


def is_hermitian(op: np.ndarray, rtol: float = HERMITIAN_RTOL) -> bool:
    scale = max(np.abs(op).max(), 1.0)
    return bool(np.abs(op - op.conj().T).max() <= rtol * scale)


def check_state(rho: np.ndarray, tol: float = 1e-10) -> np.ndarray:
    """Validate a density matrix: Hermitian, unit trace, PSD to ``tol``."""
    rho = np.asarray(rho, dtype=complex)
    if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
        raise ValueError(f"density matrix must be square, got shape {rho.shape}")
    if not is_hermitian(rho, rtol=max(tol, HERMITIAN_RTOL)):
        raise ValueError("density matrix is not Hermitian")
    if abs(np.trace(rho) - 1) > tol:
        raise ValueError(f"density matrix trace is {np.trace(rho).real:.3e}, expected 1")
    if np.linalg.eigvalsh(rho).min() < -tol:
        raise ValueError("density matrix has negative eigenvalues")
    return rho


def energy(rho: np.ndarray, system: ModeSystem) -> float:
    """Mean total photon number ``tr[rho N]``."""
    return float(np.real(np.diag(rho) @ system.level_array().sum(axis=1)))


def partial_trace(op: np.ndarray, system: ModeSystem, keep: Sequence[int]) -> np.ndarray:
    """Trace out every mode not in ``keep``; the result lives on the kept modes (same ordering)."""
    keep = sorted(set(keep))
    if not keep:
        raise ValueError("keep must name at least one mode")
    for j in keep:
        system._check_mode(j)
    n, d = system.n_modes, system.cutoff
    t = np.asarray(op).reshape(system.shape * 2)
    # tensor axis n-1-j indexes mode j on the row side, 2n-1-j on the column side
    rows = list(range(n))
    cols = [n + i if (n - 1 - i) in keep else i for i in range(n)]
    out = [i for i in range(n) if (n - 1 - i) in keep] + [n + i for i in range(n) if (n - 1 - i) in keep]
    k = len(keep)
    return np.einsum(t, rows + cols, out).reshape(d**k, d**k)


def norms(op: np.ndarray) -> tuple[float, float]:
    """``(trace norm, operator norm)`` from the singular values."""
    s = np.linalg.svd(np.asarray(op), compute_uv=False)
    return float(s.sum()), float(s.max()) if s.size else 0.0


def trace_norm(op: np.ndarray) -> float:
    return float(np.linalg.svd(np.asarray(op), compute_uv=False).sum())


def operator_norm(op: np.ndarray) -> float:
    return float(np.linalg.norm(np.asarray(op), 2))


def trace_distance(rho: np.ndarray, sigma: np.ndarray) -> float:
    """``||rho - sigma||_1`` (no factor 1/2)."""
    diff = np.asarray(rho) - np.asarray(sigma)
    return float(np.abs(np.linalg.eigvalsh((diff + diff.conj().T) / 2)).sum())


def tensor(*ops: np.ndarray) -> np.ndarray:
    """Tensor product in little-endian mode order: ``tensor(A0, A1)`` puts ``A0`` on mode 0."""
    out = np.eye(1, dtype=complex)
    for op in reversed(ops):
        out = np.kron(out, op)
    return out


def random_state(system: ModeSystem, rng: np.random.Generator, rank: int | None = None,
                 interior: bool = True, max_level: int | None = None) -> np.ndarray:
    """Random density matrix (Ginibre construction) supported on low levels.

    ``interior`` restricts support to the interior subspace; ``max_level``
    further restricts every mode to occupations ``<= max_level``.
    """
    mask = system.interior_mask() if interior else np.ones(system.dim, dtype=bool)
    if max_level is not None:
        mask &= np.all(system.level_array() <= max_level, axis=1)
    idx = np.flatnonzero(mask)
    k = idx.size
    rank = k if rank is None else rank
    G = rng.normal(size=(k, rank)) + 1j * rng.normal(size=(k, rank))
    sub = G @ G.conj().T
    sub /= np.trace(sub).real
    rho = np.zeros((system.dim, system.dim), dtype=complex)
    rho[np.ix_(idx, idx)] = sub
    return rho
