"""
wpcn - Robust Secure Resource Allocation for Wireless-Powered Networks
======================================================================
Power-minimizing allocation for a power station / access point pair serving
information receivers under hardware impairments, non-linear energy
harvesting and imperfect eavesdropper CSI.
"""

__version__ = "1.0.0"

from .errors import ConfigError, DimensionError, DomainError, InfeasibleTargetError, SolverFailure, WpcnError
from .utils.model import Allocation, EhParams, HwiParams, QosParams, SystemConfig
from .utils.channels import ChannelSet, Topology, generate_channels

__all__ = [
    "__version__",
    "WpcnError",
    "DomainError",
    "DimensionError",
    "InfeasibleTargetError",
    "ConfigError",
    "SolverFailure",
    "SystemConfig",
    "HwiParams",
    "EhParams",
    "QosParams",
    "Allocation",
    "Topology",
    "ChannelSet",
    "generate_channels",
]
