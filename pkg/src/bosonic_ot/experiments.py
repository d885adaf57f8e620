"""Experiment runners behind the command line tool.

Each runner takes a validated :class:`RunConfig` and returns a
:class:`RunResult` holding one CSV table, a list of inequality checks and a
few summary values.  Analytic columns are evaluated from closed forms only.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Any, Callable

import numpy as np

from .channels import EnvironmentSpec, kappa, loss_channel, product_channel
from .fock import (
    ModeSystem,
    coherent_state,
    energy,
    projector,
    quadratures,
    random_state,
    displacement,
    number_operator,
    trace_norm,
)
from .gkp import (
    GKPParams,
    MeasurementSpec,
    encoded_recovery,
    gamma_constant,
    make_gkp_state,
    steane_channel,
    zz_demo_spec,
)
from .qubit import (
    QubitSystem,
    decay_bound,
    decay_threshold,
    depolarizing_threshold,
    random_scheme,
    noisy_recovery_experiment,
    recovery_apply,
)
from .transport import (
    SplittingConfig,
    contraction_probe,
    diameter_bound,
    lipschitz_seminorm,
    wb_lower_bound,
)

EXPERIMENTS = ("bounds", "steane-decay", "contraction-probe", "qubit-threshold", "wb-estimate", "lipschitz")
CHANNEL_NAMES = ("loss", "steane", "loss_tensor", "steane_loss", "encoded_recovery")


class ConfigError(ValueError):
    """Invalid or incomplete run configuration."""


# key -> (default, accepted types); None default means "not set"
_SCHEMA: dict[str, tuple[Any, tuple]] = {
    "experiment": (None, (str,)),
    "seed": (None, (int,)),
    "lam": (0.04, (int, float, list)),
    "p": ([0.5, 0.7, 0.9], (int, float, list)),
    "T": (5, (int, list)),
    "n": (1, (int,)),
    "cutoff": (24, (int,)),
    "guard_band": (None, (int,)),
    "tensor_cutoff": (12, (int,)),
    "recovery_cutoff": (10, (int,)),
    "delta": (0.3, (int, float)),
    "ancilla_cutoff": (40, (int,)),
    "comb_range": (4, (int,)),
    "alpha_q": (0.05, (int, float)),
    "alpha_p": (0.05, (int, float)),
    "grid_half_range": (10.0, (int, float)),
    "grid_points": (401, (int,)),
    "correction_mode": ("mod_sqrt_pi", (str,)),
    "l_meas": (1, (int, float)),
    "l_corr": (1, (int, float)),
    "l_corr_support": (1, (int, float)),
    "alpha_min": (None, (int, float)),
    "locality": (2, (int,)),
    "E": (None, (int, float)),
    "env": ("vacuum", (str, dict)),
    "outer_code": ("trivial", (str,)),
    "C": (None, (int, float)),
    "channels": (list(CHANNEL_NAMES[:4]), (list,)),
    "trials": (50, (int,)),
    "slack": (None, (int, float, dict)),
    "tp_tol": (1e-3, (int, float)),
    "penalty": (1.0, (int, float)),
    "max_iters": (400, (int,)),
    "tol": (1e-6, (int, float)),
    "cg_tol": (1e-8, (int, float)),
    "wb": (True, (bool,)),
    "w1": (True, (bool,)),
    "w1_iters": (0, (int,)),
    "rho": ({"kind": "coherent", "alpha": 1.0}, (dict,)),
    "sigma": ({"kind": "coherent", "alpha": 0.0}, (dict,)),
    "observable": ({"kind": "displacement", "alpha": 1.0}, (dict,)),
    "out": (None, (str,)),
}

DEFAULT_SLACK = {"loss": 0.05, "loss_tensor": 0.05, "steane": 0.1, "steane_loss": 0.1, "encoded_recovery": 0.5}


@dataclass
class RunConfig:
    """Validated run parameters; ``values`` holds every schema key with defaults filled in."""

    values: dict

    @classmethod
    def from_dict(cls, raw: dict, experiment: str | None = None) -> "RunConfig":
        if not isinstance(raw, dict):
            raise ConfigError("configuration must be a JSON object")
        unknown = sorted(set(raw) - set(_SCHEMA))
        if unknown:
            raise ConfigError(f"unknown configuration keys: {', '.join(unknown)}")
        values = {k: v for k, (v, _) in _SCHEMA.items()}
        for key, val in raw.items():
            types = _SCHEMA[key][1]
            if isinstance(val, bool) and bool not in types:
                raise ConfigError(f"{key}: expected {_type_names(types)}, got a boolean")
            if val is not None and not isinstance(val, types):
                raise ConfigError(f"{key}: expected {_type_names(types)}, got {type(val).__name__}")
            values[key] = val
        if experiment is not None:
            if values["experiment"] not in (None, experiment):
                raise ConfigError(f"config is for {values['experiment']!r}, command is {experiment!r}")
            values["experiment"] = experiment
        if values["experiment"] not in EXPERIMENTS:
            raise ConfigError(f"experiment must be one of {', '.join(EXPERIMENTS)}")
        if values["seed"] is None:
            raise ConfigError("seed is mandatory")
        if not 0 <= values["seed"] < 2**64:
            raise ConfigError("seed must be an unsigned 64-bit integer")
        cfg = cls(values)
        cfg._validate_ranges()
        return cfg

    def __getitem__(self, key: str):
        return self.values[key]

    def to_dict(self) -> dict:
        return dict(self.values)

    def floats(self, key: str) -> list[float]:
        v = self.values[key]
        return [float(x) for x in (v if isinstance(v, list) else [v])]

    def _validate_ranges(self) -> None:
        v = self.values
        for lam in self.floats("lam"):
            if not 0.0 < lam < 1.0:
                raise ConfigError(f"lam must lie in (0, 1), got {lam}")
        for p in self.floats("p"):
            if not 0.0 <= p <= 1.0:
                raise ConfigError(f"p must lie in [0, 1], got {p}")
        for t in self.floats("T"):
            if t < 0 or t != int(t):
                raise ConfigError(f"T must be a non-negative integer, got {t}")
        positive = ("delta", "alpha_q", "alpha_p", "grid_half_range", "tp_tol", "penalty", "tol", "cg_tol",
                    "l_meas", "l_corr", "l_corr_support")
        for key in positive:
            if not v[key] > 0:
                raise ConfigError(f"{key} must be positive, got {v[key]}")
        for key in ("n", "cutoff", "tensor_cutoff", "recovery_cutoff", "ancilla_cutoff", "trials", "max_iters",
                    "locality"):
            if v[key] < 1:
                raise ConfigError(f"{key} must be at least 1, got {v[key]}")
        if v["alpha_min"] is not None and not v["alpha_min"] > 0:
            raise ConfigError("alpha_min must be positive")
        if v["E"] is not None and v["E"] < 0:
            raise ConfigError("E must be non-negative")
        if v["C"] is not None and not v["C"] > 0:
            raise ConfigError("C must be positive")
        if v["outer_code"] not in ("trivial", "zz"):
            raise ConfigError(f"outer_code must be 'trivial' or 'zz', got {v['outer_code']!r}")
        if v["correction_mode"] not in ("raw", "mod_sqrt_pi"):
            raise ConfigError(f"correction_mode must be 'raw' or 'mod_sqrt_pi', got {v['correction_mode']!r}")
        bad = [c for c in v["channels"] if c not in CHANNEL_NAMES]
        if bad:
            raise ConfigError(f"unknown channels {bad}; choose from {', '.join(CHANNEL_NAMES)}")
        if isinstance(v["slack"], dict) and set(v["slack"]) - set(CHANNEL_NAMES):
            raise ConfigError("slack keys must be channel names")
        if v["guard_band"] is not None and not 0 <= v["guard_band"] < v["cutoff"]:
            raise ConfigError("guard_band must satisfy 0 <= g < cutoff")
        if v["grid_points"] < 3 or v["grid_points"] % 2 == 0:
            raise ConfigError("grid_points must be odd and at least 3")
        self.environment()

    def environment(self) -> EnvironmentSpec:
        env = self.values["env"]
        if env == "vacuum":
            return EnvironmentSpec.vacuum()
        if isinstance(env, dict) and set(env) == {"thermal"} and isinstance(env["thermal"], (int, float)):
            if not env["thermal"] > 0:
                raise ConfigError("thermal environment needs beta > 0")
            return EnvironmentSpec.thermal(float(env["thermal"]))
        raise ConfigError("env must be 'vacuum' or {\"thermal\": beta}")

    def system(self, cutoff: int | None = None, n_modes: int = 1) -> ModeSystem:
        g = self.values["guard_band"]
        return ModeSystem(n_modes, cutoff or self.values["cutoff"], -1 if g is None else g)

    def gkp_params(self) -> GKPParams:
        v = self.values
        try:
            return GKPParams(float(v["delta"]), v["ancilla_cutoff"], v["comb_range"])
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def measurement(self) -> MeasurementSpec:
        v = self.values
        return MeasurementSpec(float(v["alpha_q"]), float(v["alpha_p"]), float(v["grid_half_range"]),
                               v["grid_points"], v["correction_mode"])

    def splitting(self) -> SplittingConfig:
        v = self.values
        return SplittingConfig(penalty=float(v["penalty"]), max_iters=v["max_iters"], tol=float(v["tol"]),
                               cg_tol=float(v["cg_tol"]), seed=v["seed"])


def _type_names(types: tuple) -> str:
    return " or ".join(t.__name__ for t in types)


def parse_override(text: str) -> tuple[str, Any]:
    """``key=value`` where the value is parsed as JSON, falling back to a bare string."""
    import json

    key, sep, raw = text.partition("=")
    if not sep or not key:
        raise ConfigError(f"override must look like key=value, got {text!r}")
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return key.strip(), value


@dataclass
class Check:
    name: str
    measured: float
    bound: float
    tolerance: float
    passed: bool

    def __post_init__(self):
        self.measured, self.bound = float(self.measured), float(self.bound)
        self.tolerance, self.passed = float(self.tolerance), bool(self.passed)

    def to_dict(self) -> dict:
        return {"name": self.name, "measured": self.measured, "bound": self.bound,
                "tolerance": self.tolerance, "pass": self.passed}


@dataclass
class RunResult:
    columns: list[str]
    rows: list[list]
    checks: list[Check] = field(default_factory=list)
    summary: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)


def stream(seed: int, index: int) -> np.random.Generator:
    """Sampling stream for grid point ``index``; independent of evaluation order."""
    return np.random.default_rng([seed, index])


def oscillator_decay_bound(kappa_value: float, C: float, lam: float, t: int, n: int, E: float) -> float:
    """``4 kappa (C sqrt(lam))^t sqrt(2 n (n + E))``."""
    return 4.0 * kappa_value * (C * math.sqrt(lam)) ** t * math.sqrt(2.0 * n * (n + E))


def _alpha_min(cfg: RunConfig) -> float:
    a = cfg["alpha_min"]
    return float(a) if a is not None else min(float(cfg["alpha_q"]), float(cfg["alpha_p"]))


def recovery_constant(cfg: RunConfig) -> tuple[float, float | None]:
    """``(C, Gamma)``: explicit ``C`` wins, else 2 for the trivial outer code and ``2 Gamma`` for the demo code."""
    gamma = gamma_constant(cfg["l_meas"], cfg["l_corr"], cfg["l_corr_support"], _alpha_min(cfg))
    if cfg["C"] is not None:
        return float(cfg["C"]), gamma
    return (2.0, gamma) if cfg["outer_code"] == "trivial" else (2.0 * gamma, gamma)


def _horizon(cfg: RunConfig) -> list[int]:
    T = cfg["T"]
    return sorted({int(t) for t in T}) if isinstance(T, list) else list(range(int(T) + 1))


def run_bounds(cfg: RunConfig) -> RunResult:
    C, gamma = recovery_constant(cfg)
    E = 0.0 if cfg["E"] is None else float(cfg["E"])
    n, ell = cfg["n"], cfg["locality"]
    rows = []
    for lam in cfg.floats("lam"):
        k = kappa(lam, cfg.environment(), cfg["cutoff"])
        for t in _horizon(cfg):
            rows.append([lam, t, k, C, oscillator_decay_bound(k, C, lam, t, n, E)])
    summary = {
        "gamma": gamma,
        "C": C,
        "lambda_star": 1.0 / C**2,
        "qubit_threshold_depolarizing": depolarizing_threshold(ell),
        "qubit_threshold_decay": decay_threshold(ell),
        "diameter_bound": diameter_bound(n, E),
    }
    return RunResult(["lam", "t", "kappa", "C", "decay_bound"], rows, [], summary)


def _steane(cfg: RunConfig, cutoff: int):
    try:
        return steane_channel(cutoff, cfg.gkp_params(), cfg.measurement(), tp_tol=float(cfg["tp_tol"]))
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def run_steane_decay(cfg: RunConfig) -> RunResult:
    if cfg["outer_code"] != "trivial":
        raise ConfigError("steane-decay simulates the trivial outer code only")
    lams = cfg.floats("lam")
    if len(lams) != 1:
        raise ConfigError("steane-decay takes a single lam")
    lam = lams[0]
    T = max(_horizon(cfg))
    if T > 8:
        raise ConfigError("steane-decay supports T <= 8")
    d = cfg["cutoff"]
    system = cfg.system(d)
    data_params = GKPParams(float(cfg["delta"]), d, cfg["comb_range"])
    zero, one = make_gkp_state(data_params, "0"), make_gkp_state(data_params, "1")
    noise = loss_channel(lam, cfg.environment(), d, tp_tol=float(cfg["tp_tol"]))
    step = _steane(cfg, d).compose(noise)
    step.require_tp(float(cfg["tp_tol"]), system.interior_projector())
    E = float(cfg["E"]) if cfg["E"] is not None else max(zero.energy, one.energy)
    k = kappa(lam, cfg.environment(), d)
    C = float(cfg["C"]) if cfg["C"] is not None else 2.0
    rho, sigma = projector(zero.vector), projector(one.vector)
    rows, checks = [], []
    curve0 = oscillator_decay_bound(k, C, lam, 0, 1, E)
    split = cfg.splitting()
    over: list[int] = []
    for t in range(T + 1):
        if t > 0:
            rho, sigma = step.apply(rho), step.apply(sigma)
        td = trace_norm(rho - sigma)
        wb = wb_lower_bound(rho, sigma, system, split).lower_bound if cfg["wb"] else float("nan")
        curve = oscillator_decay_bound(k, C, lam, t, 1, E)
        e = max(energy(rho, system), energy(sigma, system))
        if e > E + 1e-9:
            over.append(t)
        rows.append([t, td, wb, curve, e])
        if curve <= curve0:
            checks.append(Check(f"trace_distance[t={t}]<=analytic_bound", td, curve, 0.0, td <= curve))
    if over:
        warnings.warn(f"energy budget {E:.3f} exceeded at steps {over}", RuntimeWarning, stacklevel=2)
    tds = [r[1] for r in rows]
    ratios = [tds[i + 1] / tds[i] for i in range(len(tds) - 1) if tds[i] > 0]
    summary = {"kappa": k, "C": C, "E": E, "initial_overlap": float(abs(np.vdot(zero.vector, one.vector))),
               "geometric_mean_ratio": float(np.exp(np.mean(np.log(ratios)))) if ratios else float("nan"),
               "energy_budget_exceeded_steps": over}
    return RunResult(["t", "trace_distance", "wb_lower", "analytic_bound", "energy"], rows, checks, summary)


def _probe_channel(cfg: RunConfig, name: str, lam: float):
    """Channel, system it acts on, and its analytic Lipschitz contraction bound."""
    tp_tol = float(cfg["tp_tol"])
    env = cfg.environment()
    if name == "loss":
        return loss_channel(lam, env, cfg["cutoff"], tp_tol), cfg.system(), math.sqrt(lam)
    if name == "loss_tensor":
        d = cfg["tensor_cutoff"]
        system = cfg.system(d, 2)
        single = loss_channel(lam, env, d, tp_tol)
        return product_channel([single, single], system), system, math.sqrt(lam)
    if name == "steane":
        return _steane(cfg, cfg["cutoff"]), cfg.system(), 2.0
    if name == "steane_loss":
        chan = _steane(cfg, cfg["cutoff"]).compose(loss_channel(lam, env, cfg["cutoff"], tp_tol))
        return chan, cfg.system(), 2.0 * math.sqrt(lam)
    d = cfg["recovery_cutoff"]
    system = cfg.system(d, 2)
    spec = zz_demo_spec(cfg.gkp_params(), _alpha_min(cfg))
    return encoded_recovery(spec, system, tp_tol), system, spec.gamma()


def _slack(cfg: RunConfig, name: str) -> float:
    s = cfg["slack"]
    if s is None:
        return DEFAULT_SLACK[name]
    if isinstance(s, dict):
        return float(s.get(name, DEFAULT_SLACK[name]))
    return float(s)


def run_contraction_probe(cfg: RunConfig) -> RunResult:
    lam = cfg.floats("lam")[0]
    rows, checks = [], []
    for i, name in enumerate(cfg["channels"]):
        chan, system, bound = _probe_channel(cfg, name, lam)
        seed = int(stream(cfg["seed"], i).integers(2**63))
        measured = contraction_probe(chan, system, cfg["trials"], seed)
        slack = _slack(cfg, name)
        ok = bool(measured <= bound + slack)
        rows.append([name, cfg["trials"], measured, bound, slack, ok])
        checks.append(Check(f"{name}<=bound+slack", measured, bound, slack, ok))
    return RunResult(["channel", "trial_count", "measured_ratio", "analytic_bound", "slack", "pass"], rows, checks,
                     {"lam": lam})


def run_qubit_threshold(cfg: RunConfig) -> RunResult:
    n, ell = cfg["n"], cfg["locality"]
    T = max(_horizon(cfg))
    if T < 1:
        raise ConfigError("qubit-threshold needs T >= 1")
    try:
        QubitSystem(n)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    threshold = decay_threshold(ell)
    rows, checks = [], []
    for i, p in enumerate(cfg.floats("p")):
        rng = stream(cfg["seed"], i)
        scheme = random_scheme(n, ell, T, rng)
        dim = 2**n
        basis = np.eye(dim, dtype=complex)
        rho, sigma = projector(basis[0]), projector(basis[-1])
        if p == 0.0:
            # noiseless: recovery layers only, no W1 estimate
            td, traj_w1 = [trace_norm(rho - sigma)], [float("nan")]
            for t in range(T):
                rho, sigma = recovery_apply(scheme, t, rho), recovery_apply(scheme, t, sigma)
                td.append(trace_norm(rho - sigma))
                traj_w1.append(float("nan"))
        else:
            traj = noisy_recovery_experiment(n, ell, p, T, scheme, rho, sigma, w1=cfg["w1"], w1_iters=cfg["w1_iters"])
            td, traj_w1 = list(traj.trace_distance), list(traj.w1_lower)
        for t in range(T + 1):
            bound = decay_bound(n, ell, p, t)
            if p > threshold:
                ok = bool(td[t] <= bound)
                checks.append(Check(f"p={p:g},t={t}", float(td[t]), bound, 0.0, ok))
                flag = ok
            else:
                flag = "na"
            rows.append([p, t, float(td[t]), float(traj_w1[t]), bound, flag])
    summary = {"threshold_depolarizing": depolarizing_threshold(ell), "threshold_decay": threshold}
    return RunResult(["p", "t", "trace_distance", "w1_lower", "analytic_bound", "pass"], rows, checks, summary)


def _make_state(spec: dict, system: ModeSystem, rng: np.random.Generator) -> np.ndarray:
    kind = spec.get("kind")
    d = system.cutoff
    if kind == "coherent":
        alpha = spec.get("alpha", 0.0)
        alpha = complex(*alpha) if isinstance(alpha, list) else complex(alpha)
        return projector(coherent_state(system, [alpha]))
    if kind == "fock":
        return projector(system.basis_vector([int(spec.get("level", 0))]))
    if kind == "gkp":
        st = make_gkp_state(GKPParams(float(spec.get("delta", 0.3)), d, int(spec.get("comb_range", 4))),
                            str(spec.get("logical", "0")))
        return projector(st.vector)
    if kind == "random":
        return random_state(system, rng, rank=spec.get("rank"), max_level=spec.get("max_level"))
    raise ConfigError(f"unknown state kind {kind!r}; use coherent, fock, gkp or random")


def run_wb_estimate(cfg: RunConfig) -> RunResult:
    system = cfg.system()
    rng = stream(cfg["seed"], 0)
    rho, sigma = _make_state(cfg["rho"], system, rng), _make_state(cfg["sigma"], system, rng)
    est = wb_lower_bound(rho, sigma, system, cfg.splitting())
    E = max(energy(rho, system), energy(sigma, system)) if cfg["E"] is None else float(cfg["E"])
    bound = diameter_bound(1, E)
    ok = est.lower_bound <= bound + 0.1
    rows = [[est.lower_bound, bound, est.iterations, est.primal_residual, est.dual_residual, est.repair_scale,
             est.converged or est.stalled, trace_norm(rho - sigma)]]
    checks = [Check("wb_lower<=diameter_bound", est.lower_bound, bound, 0.1, ok)]
    return RunResult(["lower_bound", "diameter_bound", "iterations", "primal_residual", "dual_residual",
                      "repair_scale", "converged", "trace_distance"], rows, checks, {"E": E})


def _observable(spec: dict, system: ModeSystem) -> np.ndarray:
    kind = spec.get("kind")
    mode = int(spec.get("mode", 0))
    if kind == "displacement":
        alpha = spec.get("alpha", 1.0)
        alpha = complex(*alpha) if isinstance(alpha, list) else complex(alpha)
        D = displacement(system, mode, alpha)
        return D + D.conj().T
    if kind in ("Q", "P"):
        return quadratures(system, mode)[0 if kind == "Q" else 1]
    if kind == "number":
        return number_operator(system)
    if kind == "identity":
        return np.eye(system.dim, dtype=complex)
    if kind == "fock_projector":
        return projector(system.basis_vector([int(spec.get("level", 0))] * system.n_modes))
    raise ConfigError(f"unknown observable kind {kind!r}")


def run_lipschitz(cfg: RunConfig) -> RunResult:
    system = cfg.system(n_modes=int(cfg["observable"].get("n_modes", 1)))
    rep = lipschitz_seminorm(_observable(cfg["observable"], system), system)
    rows = []
    for j in range(system.n_modes):
        for quad in ("Q", "P"):
            raw, inner = rep.entry(j, quad)
            rows.append([j, quad, raw, inner])
    return RunResult(["mode", "quadrature", "raw_norm", "interior_norm"], rows, [],
                     {"seminorm": rep.seminorm, "raw_seminorm": rep.raw_seminorm})


RUNNERS: dict[str, Callable[[RunConfig], RunResult]] = {
    "bounds": run_bounds,
    "steane-decay": run_steane_decay,
    "contraction-probe": run_contraction_probe,
    "qubit-threshold": run_qubit_threshold,
    "wb-estimate": run_wb_estimate,
    "lipschitz": run_lipschitz,
}


def run(cfg: RunConfig) -> RunResult:
    return RUNNERS[cfg["experiment"]](cfg)

