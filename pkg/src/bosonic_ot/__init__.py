"""Truncated Fock-space channels, bosonic Wasserstein bounds, GKP error correction and qubit W1 tools."""

__version__ = "0.1.0"

from .channels import (
    ChannelRep,
    EnvironmentSpec,
    QualityGateError,
    kappa,
    loss_channel,
    ou_lindblad_apply,
    ou_step,
    thermal_state,
)
from .fock import ModeSystem, displacement, ladder, norms, number_operator, partial_trace, quadratures
from .gkp import GKPParams, MeasurementSpec, gamma_constant, make_gkp_state, steane_channel
from .transport import contraction_probe, diameter_bound, lipschitz_seminorm, wb_lower_bound

__all__ = [
    "ChannelRep", "EnvironmentSpec", "QualityGateError", "kappa", "loss_channel", "ou_lindblad_apply", "ou_step",
    "thermal_state", "ModeSystem", "displacement", "ladder", "norms", "number_operator", "partial_trace",
    "quadratures", "GKPParams", "MeasurementSpec", "gamma_constant", "make_gkp_state", "steane_channel",
    "contraction_probe", "diameter_bound", "lipschitz_seminorm", "wb_lower_bound",
]
