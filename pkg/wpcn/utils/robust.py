"""
Robust Security Constraints
===========================
Finite LMIs that replace the "for every CSI error in the ball" leakage
constraints, and a sampling verifier that tries to falsify them.

Features:
- Per-IR AP-side block: N + (G^+dG)^H (U + B_AP - W_k / Gamma_tol) (G^+dG) >= 0
- PS-side block: (E^+dE)^H (Z + B_PS2) (E^+dE) - N >= 0
- Shared auxiliary matrix N couples both blocks, so together they bound the
  eavesdropper SINR of every stream by Gamma_tol
- Vectorized in-ball / on-boundary sampling of (dG, dE) with per-sample seeds
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, Optional

import numpy as np

from ..errors import DimensionError, DomainError
from .channels import derive_seed, sample_csi_error
from .conic import MatrixExpr
from .model import Allocation, SystemConfig, eve_rate_from_matrices, transmit_covariances

logger = logging.getLogger(__name__)


# =============================================================================
# VARIABLE NAMES
# =============================================================================

VAR_V = "V"
VAR_Z = "Z"
VAR_U = "U"
VAR_N = "N"
VAR_T = "t"
VAR_GAMMA = "gamma"
VAR_B_PS1 = "b_ps1"
VAR_B_PS2 = "b_ps2"
VAR_B_AP = "b_ap"


def w_var(k: int) -> str:
    return f"W_{k}"


# =============================================================================
# LMI BLOCKS
# =============================================================================

@dataclass
class LmiBlock:
    """An affine Hermitian matrix expression required to be PSD."""
    expr: MatrixExpr
    label: str

    @property
    def dim(self) -> int:
        return self.expr.dim

    @property
    def var_refs(self) -> set:
        return self.expr.references()

    def evaluate(self, values: Dict[str, np.ndarray], params: Optional[Dict[str, float]] = None) -> np.ndarray:
        return self.expr.evaluate(values, params or {})

    def min_eigenvalue(self, values: Dict[str, np.ndarray], params: Optional[Dict[str, float]] = None) -> float:
        return float(np.linalg.eigvalsh(self.evaluate(values, params))[0])


def _lifting(nominal: np.ndarray, ups: float) -> np.ndarray:
    """R^H = [nominal I]^H; the error rows are dropped when the radius is zero."""
    n_tx, n_ev = nominal.shape
    a = np.zeros((n_ev + n_tx, n_tx), dtype=complex)
    a[:n_ev] = nominal.conj().T
    if ups > 0:
        a[n_ev:] = np.eye(n_tx)
    return a


def _multiplier(n_ev: int, n_tx: int, ups: float, sign_top: float) -> np.ndarray:
    diag = np.concatenate([np.full(n_ev, sign_top), np.full(n_tx, 1.0 / ups ** 2 if ups > 0 else 0.0)])
    return np.diag(diag).astype(complex)


def _top_selector(n_ev: int, n_tx: int) -> np.ndarray:
    p = np.zeros((n_ev + n_tx, n_ev), dtype=complex)
    p[:n_ev] = np.eye(n_ev)
    return p


def lmi_c2a(k: int, g_hat: np.ndarray, ups_ap_e: float, gamma_tol: float,
            inv_gamma_param: Optional[str] = None) -> LmiBlock:
    """
    blkdiag(N - t_k I, t_k / ups^2 I) + R^H (U + B_AP - W_k / Gamma_tol) R >= 0.

    With ``inv_gamma_param`` the W_k coefficient is taken from that parameter
    (whose value must be 1 / Gamma_tol) instead of the constant.
    """
    if gamma_tol <= 0:
        raise DomainError(f"Gamma_tol must be > 0, got {gamma_tol}")
    if ups_ap_e < 0:
        raise DomainError(f"uncertainty radius must be >= 0, got {ups_ap_e}")
    g_hat = np.asarray(g_hat, dtype=complex)
    if g_hat.ndim != 2:
        raise DimensionError("G^ must be an n_ap x n_ev matrix")
    n_ap, n_ev = g_hat.shape
    a = _lifting(g_hat, ups_ap_e)
    expr = MatrixExpr(n_ev + n_ap)
    expr.congruence(VAR_U, a)
    if inv_gamma_param is None:
        expr.congruence(w_var(k), a, coef=-1.0 / gamma_tol)
    else:
        expr.congruence(w_var(k), a, coef=-1.0, param=inv_gamma_param)
    for n in range(n_ap):
        col = a[:, n]
        expr.scalar(VAR_B_AP, np.outer(col, col.conj()), index=n)
    expr.congruence(VAR_N, _top_selector(n_ev, n_ap))
    expr.scalar(VAR_T, _multiplier(n_ev, n_ap, ups_ap_e, -1.0), index=k)
    return LmiBlock(expr, f"C2a[{k}]")


def lmi_c2b(e_hat: np.ndarray, ups_ps_e: float) -> LmiBlock:
    """blkdiag(-N - gamma I, gamma / ups^2 I) + R^H (Z + B_PS2) R >= 0, i.e. N below E^H K E on the whole ball."""
    if ups_ps_e < 0:
        raise DomainError(f"uncertainty radius must be >= 0, got {ups_ps_e}")
    e_hat = np.asarray(e_hat, dtype=complex)
    if e_hat.ndim != 2:
        raise DimensionError("E^ must be an n_ps x n_ev matrix")
    n_ps, n_ev = e_hat.shape
    a = _lifting(e_hat, ups_ps_e)
    expr = MatrixExpr(n_ev + n_ps)
    expr.congruence(VAR_Z, a)
    for m in range(n_ps):
        col = a[:, m]
        expr.scalar(VAR_B_PS2, np.outer(col, col.conj()), index=m)
    expr.congruence(VAR_N, _top_selector(n_ev, n_ps), coef=-1.0)
    expr.scalar(VAR_GAMMA, _multiplier(n_ev, n_ps, ups_ps_e, -1.0), index=0)
    return LmiBlock(expr, "C2b")


def certificate_values(alloc: Allocation) -> Dict[str, np.ndarray]:
    """
    Variable values for evaluating the LMI blocks of a solved allocation.

    The certificate (N, t, gamma) lives in the solver's scaled units; callers
    pass blocks built from the equally scaled G^, E^ and radii.
    """
    cert = alloc.certificate
    values = {
        VAR_U: alloc.u_cov, VAR_Z: alloc.z_cov,
        VAR_B_AP: alloc.b_ap, VAR_B_PS2: alloc.b_ps2,
        VAR_N: np.asarray(cert["n_mat"]), VAR_T: np.asarray(cert["t"]),
        VAR_GAMMA: np.atleast_1d(cert["gamma"]),
    }
    for k, w in enumerate(alloc.w_cov):
        values[w_var(k)] = w
    return values


# =============================================================================
# SAMPLING VERIFIER
# =============================================================================

@dataclass
class SecurityReport:
    n_samples: int
    worst_capacity: float
    passed: bool
    r_tol: float
    worst_ir: int = -1
    violating_sample_seed: Optional[int] = None
    n_violations: int = 0
    per_ir: Dict[int, float] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "n_samples": self.n_samples,
            "worst_capacity": self.worst_capacity,
            "passed": self.passed,
            "r_tol": self.r_tol,
            "worst_ir": self.worst_ir,
            "violating_sample_seed": self.violating_sample_seed,
            "n_violations": self.n_violations,
        }


def draw_error_pair(channels, seed: int, boundary: bool):
    """One (dG, dE) pair from its own seed, so any sample can be replayed alone."""
    rng = np.random.default_rng(seed)
    dg = sample_csi_error(channels.ups_ap_e, channels.g_hat.shape, rng, boundary=boundary)
    de = sample_csi_error(channels.ups_ps_e, channels.e_hat.shape, rng, boundary=boundary)
    return dg, de


def sample_verify_security(alloc: Allocation, channels, cfg: SystemConfig, n_samples: int,
                           include_boundary: bool = True, seed: int = 0,
                           tol: float = 1e-6) -> SecurityReport:
    """
    Worst eavesdropper rate tau2 * C_k over sampled CSI errors.

    Sample 0 is the nominal channel, sample 1 the held-out true error when the
    channel set carries one; the rest alternate in-ball and on-boundary draws
    (boundary only when ``include_boundary``), sample ``i`` seeded by
    ``derive_seed(seed, i)``.
    """
    if n_samples < 1:
        raise DomainError("n_samples must be >= 1")
    g_hat, e_hat = np.asarray(channels.g_hat), np.asarray(channels.e_hat)
    dgs = [np.zeros_like(g_hat)]
    des = [np.zeros_like(e_hat)]
    seeds = [None]
    if channels.true_error is not None and n_samples > 1:
        dgs.append(channels.true_dg)
        des.append(channels.true_de)
        seeds.append(None)
    for i in range(len(dgs), n_samples):
        s = derive_seed(seed, i)
        dg, de = draw_error_pair(channels, s, boundary=include_boundary and i % 2 == 1)
        dgs.append(dg)
        des.append(de)
        seeds.append(s)

    g = g_hat + np.stack(dgs)
    e = e_hat + np.stack(des)
    _, theta, psi = transmit_covariances(alloc, cfg.hwi)
    jam_ap = alloc.u_cov + psi
    jam_ps = alloc.z_cov + theta

    limit = cfg.qos.r_tol + tol
    worst, worst_ir, worst_idx = 0.0, -1, None
    violations = np.zeros(len(dgs), dtype=bool)
    per_ir: Dict[int, float] = {}
    for k, w_cov in enumerate(alloc.info_covariances()):
        rates = alloc.tau2 * eve_rate_from_matrices(g, e, jam_ap, jam_ps, w_cov)
        violations |= rates > limit
        idx = int(np.argmax(rates))
        per_ir[k] = float(rates[idx])
        if rates[idx] > worst or worst_ir < 0:
            worst, worst_ir, worst_idx = float(rates[idx]), k, idx

    n_viol = int(violations.sum())
    violating_seed = seeds[worst_idx] if n_viol and worst_idx is not None else None
    if n_viol:
        logger.warning("security sampling: %d/%d samples exceed R_tol (worst %.4g)", n_viol, len(dgs), worst)
    return SecurityReport(n_samples=len(dgs), worst_capacity=worst, passed=n_viol == 0, r_tol=cfg.qos.r_tol,
                          worst_ir=worst_ir, violating_sample_seed=violating_seed, n_violations=n_viol,
                          per_ir=per_ir)
