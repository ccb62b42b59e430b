"""
Physical Model Module
=====================
Domain types and closed-form physical models of the secure WPCN.

Features:
- Scenario constants (antennas, powers, noise, impairments, harvesting, QoS)
- Transmitter / receiver hardware-impairment distortion functions
- Non-linear (sigmoidal) energy-harvesting model and its closed-form inverse
- IR SINR, eavesdropper capacity and secrecy rate
- Power accounting (objective and the reported Phase-I + E_res figure)

All quantities are Watts and seconds; dBm appears only through
``dbm_to_watt`` / ``watt_to_dbm`` at the I/O boundary.
"""

import math
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from numpy.typing import ArrayLike
from scipy.special import expit

from ..errors import DimensionError, DomainError, InfeasibleTargetError


# =============================================================================
# UNIT CONVERSION
# =============================================================================

def dbm_to_watt(dbm: float) -> float:
    return 10.0 ** ((dbm - 30.0) / 10.0)


def watt_to_dbm(watt: float) -> float:
    if watt <= 0:
        return -math.inf
    return 10.0 * math.log10(watt) + 30.0


# =============================================================================
# PARAMETERS
# =============================================================================

@dataclass(frozen=True)
class HwiParams:
    """Residual hardware-impairment constants shared by the PS and the AP."""
    k1: float = 2.258e5   # W^(1 - k2)
    k2: float = 7.687
    k3: float = 0.0       # percent, receiver side

    def __post_init__(self):
        if self.k1 < 0:
            raise DomainError(f"k1 must be >= 0, got {self.k1}")
        if self.k2 < 1:
            raise DomainError(f"k2 must be >= 1, got {self.k2}")
        if not 0 <= self.k3 <= 15:
            raise DomainError(f"k3 must lie in [0, 15], got {self.k3}")

    @property
    def ideal(self) -> bool:
        return self.k1 == 0 and self.k3 == 0

    def to_dict(self) -> dict:
        return {"k1": self.k1, "k2": self.k2, "k3": self.k3}


@dataclass(frozen=True)
class EhParams:
    """Sigmoidal harvesting model: saturation ``m_sat`` (W), slope ``a`` (1/W), turn-on ``b`` (W)."""
    m_sat: float = 0.024
    a: float = 150.0
    b: float = 0.0014
    omega_0: float = field(init=False)

    def __post_init__(self):
        if self.m_sat <= 0 or self.a <= 0 or self.b <= 0:
            raise DomainError("m_sat, a and b must all be positive")
        object.__setattr__(self, "omega_0", float(expit(-self.a * self.b)))

    def to_dict(self) -> dict:
        return {"m_sat": self.m_sat, "a": self.a, "b": self.b, "omega_0": self.omega_0}


@dataclass(frozen=True)
class QosParams:
    r_req: Tuple[float, ...] = (4.0, 4.0)
    r_tol: float = 0.1

    def __post_init__(self):
        object.__setattr__(self, "r_req", tuple(float(r) for r in self.r_req))
        if self.r_tol <= 0:
            raise DomainError(f"r_tol must be > 0, got {self.r_tol}")
        for r in self.r_req:
            if r <= self.r_tol:
                raise DomainError(f"every r_req must exceed r_tol={self.r_tol}, got {r}")

    def to_dict(self) -> dict:
        return {"r_req": list(self.r_req), "r_tol": self.r_tol}


@dataclass(frozen=True)
class SystemConfig:
    """All scenario constants in internal units (W, s)."""
    n_ps: int = 3
    n_ap: int = 3
    n_ev: int = 2
    n_irs: int = 2
    p_max_ps: float = 1.0
    p_max_ap: float = 1.0
    sigma_n2: float = 10 ** (-107 / 10)
    sigma_ir2: float = 10 ** (-107 / 10)
    sigma_e2: float = 10 ** (-107 / 10)
    rho_ps: float = 1 / 0.3
    rho_ap: float = 1 / 0.3
    p_c_ps: float = 50e-6
    p_c_ap: float = 50e-6
    e_res: float = 0.0
    t_max: float = 1.0
    hwi: HwiParams = field(default_factory=HwiParams)
    eh: EhParams = field(default_factory=EhParams)
    qos: QosParams = field(default_factory=QosParams)
    sigma_eve2: float = 0.01
    tau_min: float = 1e-4

    def __post_init__(self):
        for name in ("n_ps", "n_ap", "n_ev", "n_irs"):
            if getattr(self, name) < 1:
                raise DomainError(f"{name} must be >= 1")
        if self.n_ps + self.n_ap < self.n_ev:
            raise DomainError("secure transmission needs n_ps + n_ap >= n_ev")
        for name in ("p_max_ps", "p_max_ap", "sigma_n2", "sigma_ir2", "sigma_e2",
                     "p_c_ps", "p_c_ap", "e_res", "sigma_eve2"):
            if getattr(self, name) < 0:
                raise DomainError(f"{name} must be >= 0")
        if self.rho_ps < 1 or self.rho_ap < 1:
            raise DomainError("amplifier multipliers rho_ps, rho_ap must be >= 1")
        if self.t_max <= 0 or not 0 < self.tau_min < self.t_max:
            raise DomainError("need 0 < tau_min < t_max")
        if len(self.qos.r_req) != self.n_irs:
            raise DimensionError(f"qos.r_req has {len(self.qos.r_req)} entries for {self.n_irs} IRs")

    def gamma_req(self, tau2: float) -> np.ndarray:
        """Per-IR SINR targets 2^(R_req/tau2) - 1 (inf when the exponent overflows)."""
        if tau2 <= 0:
            raise DomainError(f"tau2 must be > 0, got {tau2}")
        with np.errstate(over="ignore"):
            return np.expm1(np.asarray(self.qos.r_req) * math.log(2.0) / tau2)

    def gamma_tol(self, tau2: float) -> float:
        if tau2 <= 0:
            raise DomainError(f"tau2 must be > 0, got {tau2}")
        return math.expm1(self.qos.r_tol * math.log(2.0) / tau2)

    def without_impairments(self) -> "SystemConfig":
        return replace(self, hwi=replace(self.hwi, k1=0.0, k3=0.0))

    def with_power_caps(self, p_max: float) -> "SystemConfig":
        return replace(self, p_max_ps=p_max, p_max_ap=p_max)


# =============================================================================
# ALLOCATION
# =============================================================================

@dataclass
class Allocation:
    """A candidate solution; diagonal budget matrices are held as their diagonals."""
    v_cov: np.ndarray
    z_cov: np.ndarray
    u_cov: np.ndarray
    w_cov: List[np.ndarray]
    b_ps1: np.ndarray
    b_ps2: np.ndarray
    b_ap: np.ndarray
    r_ir: np.ndarray
    tau1: float
    tau2: float
    rho_recv: float = 0.0
    aux: Dict[str, np.ndarray] = field(default_factory=dict)
    w_vec: Optional[List[np.ndarray]] = None
    certificate: Dict[str, object] = field(default_factory=dict)

    @classmethod
    def zeros(cls, cfg: SystemConfig, tau1: float, tau2: float) -> "Allocation":
        return cls(
            v_cov=np.zeros((cfg.n_ps, cfg.n_ps), complex),
            z_cov=np.zeros((cfg.n_ps, cfg.n_ps), complex),
            u_cov=np.zeros((cfg.n_ap, cfg.n_ap), complex),
            w_cov=[np.zeros((cfg.n_ap, cfg.n_ap), complex) for _ in range(cfg.n_irs)],
            b_ps1=np.zeros(cfg.n_ps), b_ps2=np.zeros(cfg.n_ps), b_ap=np.zeros(cfg.n_ap),
            r_ir=np.zeros(cfg.n_irs), tau1=tau1, tau2=tau2,
            w_vec=[np.zeros(cfg.n_ap, complex) for _ in range(cfg.n_irs)],
        )

    @property
    def n_irs(self) -> int:
        return len(self.w_cov)

    def info_covariances(self) -> List[np.ndarray]:
        """Rank-one w w^H when beamformers are present, otherwise the (relaxed) W_k."""
        if self.w_vec is None:
            return [np.asarray(w) for w in self.w_cov]
        return [np.outer(w, np.conj(w)) for w in self.w_vec]

    def with_beamformers(self, w_vec: Sequence[np.ndarray]) -> "Allocation":
        return replace(self, w_vec=[np.asarray(w, complex) for w in w_vec])

    def ap_covariance(self) -> np.ndarray:
        """Total AP transmit covariance sum_k W_k + U."""
        return sum(self.info_covariances()) + self.u_cov

    def total_radiated_power(self) -> float:
        """Trace of all PS and AP covariances (Phase I and Phase II)."""
        return float(np.real(np.trace(self.v_cov) + np.trace(self.z_cov) + np.trace(self.ap_covariance())))


@dataclass
class PowerBreakdown:
    p_ps1: float
    p_ps2: float
    p_ap2: float
    objective: float
    reported: float

    def to_dict(self) -> dict:
        return {
            "p_ps1": self.p_ps1,
            "p_ps2": self.p_ps2,
            "p_ap2": self.p_ap2,
            "objective": self.objective,
            "reported": self.reported,
        }


# =============================================================================
# DISTORTION FUNCTIONS
# =============================================================================

def tx_distortion(x: ArrayLike, hwi: HwiParams) -> Union[float, np.ndarray]:
    """Transmitter distortion power k1 * x^k2 per antenna."""
    arr = np.asarray(x, dtype=float)
    if np.any(arr < 0):
        raise DomainError("transmit power must be non-negative")
    out = hwi.k1 * np.power(arr, hwi.k2)
    return out if out.ndim else float(out)


def rx_distortion(x: ArrayLike, k3: float) -> Union[float, np.ndarray]:
    """Receiver distortion power (k3/100)^2 * x."""
    arr = np.asarray(x, dtype=float)
    if np.any(arr < 0):
        raise DomainError("received power must be non-negative")
    out = (k3 / 100.0) ** 2 * arr
    return out if out.ndim else float(out)


def _diagonal_power(mat: np.ndarray, name: str) -> np.ndarray:
    mat = np.asarray(mat)
    if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
        raise DimensionError(f"{name} must be square, got shape {mat.shape}")
    diag = np.real(np.diag(mat)).copy()
    floor = -1e-9 * (1.0 + np.max(np.abs(diag), initial=0.0))
    if np.any(diag < floor):
        raise DomainError(f"{name} has a negative diagonal entry {diag.min():.3e}")
    # solver round-off
    return np.clip(diag, 0.0, None)


def transmit_covariances(alloc: Allocation, hwi: HwiParams) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Diagonal distortion covariances (Phi, Theta, Psi) of the PS (both phases) and the AP."""
    ap_cov = alloc.ap_covariance()
    if alloc.v_cov.shape != alloc.z_cov.shape:
        raise DimensionError("V and Z must share the PS dimension")
    phi = np.diag(tx_distortion(_diagonal_power(alloc.v_cov, "V"), hwi))
    theta = np.diag(tx_distortion(_diagonal_power(alloc.z_cov, "Z"), hwi))
    psi = np.diag(tx_distortion(_diagonal_power(ap_cov, "sum W + U"), hwi))
    return phi.astype(complex), theta.astype(complex), psi.astype(complex)


# =============================================================================
# ENERGY HARVESTING
# =============================================================================

def harvested_power(omega, eh: EhParams):
    """Non-linear harvested power; equals M (sigma(omega) - Omega) / (1 - Omega)."""
    w = np.asarray(omega, dtype=float)
    if np.any(w < 0):
        raise DomainError("received RF power must be non-negative")
    out = eh.m_sat * expit(eh.a * (w - eh.b)) * -np.expm1(-eh.a * w)
    return out if out.ndim else float(out)


def inverse_harvested_power(xi, eh: EhParams):
    """RF power needed to harvest ``xi`` Watts."""
    x = np.asarray(xi, dtype=float)
    if np.any(x < 0):
        raise DomainError("target harvested power must be non-negative")
    if np.any(x >= eh.m_sat):
        raise InfeasibleTargetError(f"target {np.max(x):.4g} W is not below saturation {eh.m_sat} W")
    out = np.log1p(x / (eh.omega_0 * (eh.m_sat - x))) / eh.a
    return out if out.ndim else float(out)


# =============================================================================
# LINK METRICS
# =============================================================================

def ir_sinr(k: int, alloc: Allocation, channels, cfg: SystemConfig) -> float:
    """SINR at IR ``k``; artificial noise is cancelled at the IRs and excluded from interference."""
    if not 0 <= k < alloc.n_irs:
        raise IndexError(f"IR index {k} out of range for {alloc.n_irs} IRs")
    h = np.asarray(channels.h[k])
    f = np.asarray(channels.f[k])
    w_all = alloc.info_covariances()
    _, theta, psi = transmit_covariances(alloc, cfg.hwi)

    def quad(vec, mat):
        return float(np.real(np.conj(vec) @ mat @ vec))

    signal = quad(h, w_all[k])
    interference = sum(quad(h, w_all[j]) for j in range(alloc.n_irs) if j != k)
    received = quad(h, alloc.u_cov + sum(w_all)) + quad(f, alloc.z_cov)
    noise = (quad(f, theta) + quad(h, psi)
             + rx_distortion(max(received, 0.0), cfg.hwi.k3) + cfg.sigma_ir2)
    return signal / (interference + noise)


def eve_rate_from_matrices(g: np.ndarray, e: np.ndarray, jam_ap: np.ndarray,
                           jam_ps: np.ndarray, signal_cov: np.ndarray) -> np.ndarray:
    """
    log2 det(I + Q^{-1} G^H W G) with Q = G^H jam_ap G + E^H jam_ps E.

    ``g`` (..., n_ap, n_ev) and ``e`` (..., n_ps, n_ev) may carry leading batch
    axes. Unbounded entries (Q vanishing against a nonzero signal) are inf.
    """
    gh = np.conj(np.swapaxes(g, -1, -2))
    eh = np.conj(np.swapaxes(e, -1, -2))
    q = gh @ jam_ap @ g + eh @ jam_ps @ e
    s = gh @ signal_cov @ g
    q = 0.5 * (q + np.conj(np.swapaxes(q, -1, -2)))
    s = 0.5 * (s + np.conj(np.swapaxes(s, -1, -2)))
    n_ev = q.shape[-1]
    tr_q = np.real(np.trace(q, axis1=-2, axis2=-1))
    tr_s = np.real(np.trace(s, axis1=-2, axis2=-1))

    eps = 1e-12 * np.maximum(tr_q, 0.0) / n_ev
    lam_min = np.linalg.eigvalsh(q)[..., 0]
    bump = np.where(lam_min < eps, eps, 0.0)
    q_reg = q + bump[..., None, None] * np.eye(n_ev)

    with np.errstate(invalid="ignore", divide="ignore"):
        _, logdet_qs = np.linalg.slogdet(q_reg + s)
        _, logdet_q = np.linalg.slogdet(q_reg)
        rate = (logdet_qs - logdet_q) / math.log(2.0)
    rate = np.where(tr_s <= 0, 0.0, rate)
    insecure = (tr_s > 0) & (tr_q <= 1e-15 * tr_s)
    rate = np.where(insecure | ~np.isfinite(rate), math.inf, np.maximum(rate, 0.0))
    return rate


def eve_capacity(k: int, alloc: Allocation, channels, cfg: SystemConfig,
                 csi_error: Optional[Tuple[np.ndarray, np.ndarray]] = None) -> float:
    """Eavesdropper capacity for IR ``k``'s stream per unit of Phase II (``math.inf`` if insecure)."""
    if not 0 <= k < alloc.n_irs:
        raise IndexError(f"IR index {k} out of range for {alloc.n_irs} IRs")
    g = np.asarray(channels.g_hat)
    e = np.asarray(channels.e_hat)
    if csi_error is not None:
        dg, de = csi_error
        g = g + dg
        e = e + de
    _, theta, psi = transmit_covariances(alloc, cfg.hwi)
    signal = alloc.info_covariances()[k]
    return float(eve_rate_from_matrices(g, e, alloc.u_cov + psi, alloc.z_cov + theta, signal))


def secrecy_rate(k: int, alloc: Allocation, channels, cfg: SystemConfig,
                 csi_error: Optional[Tuple[np.ndarray, np.ndarray]] = None) -> float:
    legit = alloc.tau2 * math.log2(1.0 + ir_sinr(k, alloc, channels, cfg))
    cap = eve_capacity(k, alloc, channels, cfg, csi_error)
    if math.isinf(cap):
        return 0.0
    return max(0.0, legit - alloc.tau2 * cap)


# =============================================================================
# POWER ACCOUNTING
# =============================================================================

def power_accounting(alloc: Allocation, cfg: SystemConfig) -> PowerBreakdown:
    """
    Consumed power per phase and the objective tau1 * p_ps1 + tau2 * (p_ap2 + p_ps2).

    ``reported`` keeps Phase I plus the part of the AP's Phase-II energy drawn
    from E_res (what harvesting at ``alloc.rho_recv`` does not cover).
    """
    phi, theta, psi = transmit_covariances(alloc, cfg.hwi)
    tr = lambda m: float(np.real(np.trace(m)))  # noqa: E731
    if alloc.w_vec is not None:
        info_power = float(sum(np.vdot(w, w).real for w in alloc.w_vec))
    else:
        info_power = sum(tr(w) for w in alloc.w_cov)

    p_ps1 = cfg.rho_ps * (tr(alloc.v_cov) + tr(phi)) + cfg.p_c_ps
    p_ps2 = cfg.rho_ps * (tr(alloc.z_cov) + tr(theta)) + cfg.p_c_ps
    p_ap2 = cfg.rho_ap * (info_power + tr(alloc.u_cov) + tr(psi)) + cfg.p_c_ap
    objective = alloc.tau1 * p_ps1 + alloc.tau2 * (p_ap2 + p_ps2)

    harvested = alloc.tau1 * harvested_power(max(alloc.rho_recv, 0.0), cfg.eh)
    from_reserve = float(np.clip(alloc.tau2 * p_ap2 - harvested, 0.0, cfg.e_res))
    return PowerBreakdown(p_ps1, p_ps2, p_ap2, objective, alloc.tau1 * p_ps1 + from_reserve)
