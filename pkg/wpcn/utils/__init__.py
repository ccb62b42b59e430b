"""
wpcn - Physical and Numerical Building Blocks
=============================================
Physical model, channel generation, robust LMIs and the conic-program layer.
"""

from .model import (
    Allocation, PowerBreakdown, SystemConfig, harvested_power, inverse_harvested_power,
    ir_sinr, eve_capacity, secrecy_rate, power_accounting,
)
from .channels import ChannelSet, Topology, generate_channels, sample_csi_error
from .conic import AffineExpr, ConicProgram, MatrixExpr, Solution, SolveStatus, solve
from .robust import lmi_c2a, lmi_c2b, sample_verify_security

__all__ = [
    "Allocation",
    "PowerBreakdown",
    "SystemConfig",
    "harvested_power",
    "inverse_harvested_power",
    "ir_sinr",
    "eve_capacity",
    "secrecy_rate",
    "power_accounting",
    "ChannelSet",
    "Topology",
    "generate_channels",
    "sample_csi_error",
    "AffineExpr",
    "ConicProgram",
    "MatrixExpr",
    "Solution",
    "SolveStatus",
    "solve",
    "lmi_c2a",
    "lmi_c2b",
    "sample_verify_security",
]
