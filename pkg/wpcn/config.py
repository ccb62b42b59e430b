"""
Scenario Configuration
======================
Boundary schema for scenario files, solver and experiment settings.

Features:
- pydantic models with boundary units (dBm, dBi, mW, uW, J, m, Hz)
- YAML / JSON loading (JSON is read through the YAML loader)
- Conversion to the Watt/second SystemConfig and Topology dataclasses
- Dotted sweep-parameter paths, validated before any trial runs
- Process settings from environment variables

Environment:
    WPCN_LOG_LEVEL   logging level (INFO)
    WPCN_WORKERS     Monte-Carlo worker threads (1)
    WPCN_SOLVER      conic backend override (CLARABEL if installed, else SCS)
    WPCN_OUTPUT_DIR  default output directory (results)
    HOST / PORT      HTTP service bind address
"""

import logging
import os
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .errors import ConfigError, WpcnError
from .utils.channels import Topology
from .utils.model import EhParams, HwiParams, QosParams, SystemConfig, dbm_to_watt

logger = logging.getLogger(__name__)

LOG_LEVEL = os.environ.get("WPCN_LOG_LEVEL", "INFO").upper()
DEFAULT_WORKERS = max(1, int(os.environ.get("WPCN_WORKERS", "1")))
OUTPUT_DIR = Path(os.environ.get("WPCN_OUTPUT_DIR", "results"))
HOST = os.environ.get("HOST", "0.0.0.0")
PORT = int(os.environ.get("PORT", "8000"))

SCHEMES = ("optimal", "ao", "isotropic", "ignore_hwi", "perfect_hw")


# =============================================================================
# SECTIONS
# =============================================================================

class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid")


class HwiSection(_Section):
    k1: float = Field(2.258e5, ge=0)
    k2: float = Field(7.687, ge=1)
    k3: float = Field(0.0, ge=0, description="receiver impairment, percent")


class EhSection(_Section):
    m_sat_mw: float = Field(24.0, gt=0)
    a: float = Field(150.0, gt=0)
    b: float = Field(0.0014, ge=0)


class QosSection(_Section):
    r_req: List[float] = Field(default_factory=lambda: [4.0, 4.0], description="bit/s/Hz per IR")
    r_tol: float = Field(0.1, gt=0)


class TopologySection(_Section):
    d_ps_ap: float = 10.0
    d_ps_eve: float = 40.0
    d_ap_eve: float = 30.0
    d_ap_ir: float = 50.0
    exponent_ps_ap: float = 2.0
    exponent_ap_ir: float = 3.6
    exponent_ps_ir: float = 3.6
    exponent_ps_eve: float = 3.6
    exponent_ap_eve: float = 3.6
    gain_ps_dbi: float = 10.0
    gain_ap_dbi: float = 8.0
    gain_ir_dbi: float = 0.0
    gain_eve_dbi: float = 0.0
    carrier_hz: float = 915e6
    rician_factor_db: float = 3.0
    ir_placement: str = "ring"
    pathloss_reference: str = "free_space"


class SolverSettings(_Section):
    tol: float = Field(1e-8, gt=0)
    backend: Optional[str] = None
    grid_n: int = Field(20, ge=2)
    grid_workers: int = Field(1, ge=1)
    omega_rel_tol: float = Field(1e-4, gt=0, lt=1)
    omega_grid_n: int = Field(17, ge=3)
    ao_l_max: int = Field(10, ge=1)
    ao_psi: float = Field(1e-3, gt=0)
    rank_tol: float = Field(1e-6, gt=0)
    randomization_candidates: int = Field(200, ge=1)
    distortion_encoding: str = "auto"
    pwl_segments: int = Field(32, ge=2)
    audit_tol: float = Field(1e-6, gt=0)
    audit_samples: int = Field(256, ge=1)
    debug_unimodality: bool = False

    @field_validator("distortion_encoding")
    @classmethod
    def _encoding(cls, v: str) -> str:
        if v not in ("auto", "power_cone", "pwl"):
            raise ValueError("distortion_encoding must be auto, power_cone or pwl")
        return v


class ExperimentSettings(_Section):
    n_trials: int = Field(100, ge=1)
    seed: int = 0
    schemes: List[str] = Field(default_factory=lambda: ["optimal"])
    sweep_param: Optional[str] = None
    sweep_values: List[float] = Field(default_factory=list)
    output: str = str(OUTPUT_DIR / "montecarlo.csv")
    n_security_samples: int = Field(1000, ge=1)
    workers: int = Field(DEFAULT_WORKERS, ge=1)
    record_timing: bool = False
    traces: bool = False

    @field_validator("schemes")
    @classmethod
    def _schemes(cls, v: List[str]) -> List[str]:
        unknown = [s for s in v if s not in SCHEMES]
        if unknown:
            raise ValueError(f"unknown schemes {unknown}; choose from {list(SCHEMES)}")
        return v


# =============================================================================
# SCENARIO FILE
# =============================================================================

class ScenarioFile(_Section):
    """A complete scenario: system constants, topology, solver and experiment settings."""
    n_ps: int = Field(3, ge=1)
    n_ap: int = Field(3, ge=1)
    n_ev: int = Field(2, ge=1)
    n_irs: int = Field(2, ge=1)
    p_max_ps_dbm: float = 30.0
    p_max_ap_dbm: float = 30.0
    sigma_n2_dbm: float = -77.0
    sigma_ir2_dbm: float = -77.0
    sigma_e2_dbm: float = -77.0
    pa_efficiency_ps: float = Field(0.3, gt=0, le=1)
    pa_efficiency_ap: float = Field(0.3, gt=0, le=1)
    p_c_ps_uw: float = Field(50.0, ge=0)
    p_c_ap_uw: float = Field(50.0, ge=0)
    e_res_j: float = Field(0.0, ge=0)
    t_max_s: float = Field(1.0, gt=0)
    tau_min: float = Field(1e-4, gt=0)
    sigma_eve2: float = Field(0.01, ge=0, description="normalized CSI estimation error")
    hwi: HwiSection = Field(default_factory=HwiSection)
    eh: EhSection = Field(default_factory=EhSection)
    qos: QosSection = Field(default_factory=QosSection)
    topology: TopologySection = Field(default_factory=TopologySection)
    solver: SolverSettings = Field(default_factory=SolverSettings)
    experiment: ExperimentSettings = Field(default_factory=ExperimentSettings)

    @model_validator(mode="after")
    def _rates_per_ir(self) -> "ScenarioFile":
        if len(self.qos.r_req) == 1 and self.n_irs > 1:
            self.qos.r_req = self.qos.r_req * self.n_irs
        if len(self.qos.r_req) != self.n_irs:
            raise ValueError(f"qos.r_req has {len(self.qos.r_req)} entries for n_irs={self.n_irs}")
        return self

    def to_system_config(self) -> SystemConfig:
        try:
            return SystemConfig(
                n_ps=self.n_ps, n_ap=self.n_ap, n_ev=self.n_ev, n_irs=self.n_irs,
                p_max_ps=dbm_to_watt(self.p_max_ps_dbm),
                p_max_ap=dbm_to_watt(self.p_max_ap_dbm),
                sigma_n2=dbm_to_watt(self.sigma_n2_dbm),
                sigma_ir2=dbm_to_watt(self.sigma_ir2_dbm),
                sigma_e2=dbm_to_watt(self.sigma_e2_dbm),
                rho_ps=1.0 / self.pa_efficiency_ps,
                rho_ap=1.0 / self.pa_efficiency_ap,
                p_c_ps=self.p_c_ps_uw * 1e-6,
                p_c_ap=self.p_c_ap_uw * 1e-6,
                e_res=self.e_res_j,
                t_max=self.t_max_s,
                hwi=HwiParams(k1=self.hwi.k1, k2=self.hwi.k2, k3=self.hwi.k3),
                eh=EhParams(m_sat=self.eh.m_sat_mw * 1e-3, a=self.eh.a, b=self.eh.b),
                qos=QosParams(r_req=tuple(self.qos.r_req), r_tol=self.qos.r_tol),
                sigma_eve2=self.sigma_eve2,
                tau_min=self.tau_min,
            )
        except WpcnError as e:
            raise ConfigError(f"invalid scenario: {e}") from e

    def to_topology(self) -> Topology:
        try:
            return Topology(**self.topology.model_dump())
        except WpcnError as e:
            raise ConfigError(f"invalid topology: {e}") from e


# =============================================================================
# LOAD / DUMP
# =============================================================================

def parse_scenario(data: Optional[Dict[str, Any]]) -> ScenarioFile:
    try:
        return ScenarioFile.model_validate(data or {})
    except ValidationError as e:
        raise ConfigError(str(e)) from e


def load_scenario(path: Optional[Union[str, Path]] = None) -> ScenarioFile:
    """Load a YAML or JSON scenario; no path gives the defaults."""
    if path is None:
        return ScenarioFile()
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        data = yaml.safe_load(path.read_text(encoding="utf-8"))
    except yaml.YAMLError as e:
        raise ConfigError(f"cannot parse {path}: {e}") from e
    if data is not None and not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    logger.debug("loaded scenario from %s", path)
    return parse_scenario(data)


def dump_scenario(scenario: ScenarioFile) -> str:
    return yaml.safe_dump(scenario.model_dump(mode="json"), sort_keys=False, allow_unicode=True)


# =============================================================================
# SWEEPS
# =============================================================================

SWEEP_ALIASES = {"n_antennas": ("n_ps", "n_ap")}
_NOT_SWEEPABLE = ("solver", "experiment")


def sweepable_params() -> List[str]:
    names = list(SWEEP_ALIASES)
    for name, info in ScenarioFile.model_fields.items():
        if name in _NOT_SWEEPABLE:
            continue
        sub = info.annotation
        if isinstance(sub, type) and issubclass(sub, BaseModel):
            names.extend(f"{name}.{field}" for field in sub.model_fields)
        else:
            names.append(name)
    return names


def validate_sweep_param(name: str) -> str:
    if name not in sweepable_params():
        raise ConfigError(f"unknown sweep parameter {name!r}")
    return name


def apply_sweep(scenario: ScenarioFile, name: str, value: Any) -> ScenarioFile:
    """Copy of ``scenario`` with one (dotted) parameter set; scalars broadcast over r_req."""
    validate_sweep_param(name)
    data = scenario.model_dump()
    targets = SWEEP_ALIASES.get(name, (name,))
    for target in targets:
        node = data
        *parents, leaf = target.split(".")
        for part in parents:
            node = node[part]
        if isinstance(node[leaf], list) and not isinstance(value, (list, tuple)):
            node[leaf] = [value] * len(node[leaf])
        else:
            node[leaf] = value
    if "n_irs" in targets:
        data["qos"]["r_req"] = data["qos"]["r_req"][:1]
    return parse_scenario(data)
