"""
SDP Allocation Pipeline
=======================
Assemble the relaxed power-minimization program for a fixed time split and
received-RF-power level, map solver output back to an Allocation, recover
beamformers and audit the result against the original (non-relaxed) problem.

Features:
- Program assembly with named parameters (tau1, tau2, SINR targets, omega_bar)
- Exact power-cone or conservative piecewise-linear distortion constraints
- Receive-side rows in noise units, LMI blocks in a common channel scale
- Rank-one recovery with rank diagnostics for W_k, V, Z, U
- Gaussian-randomization fallback for non-rank-one solutions
- Audit of every original constraint with the non-linear models
"""

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Tuple

import numpy as np
from scipy import linalg

from ..errors import DomainError
from ..metrics import timed
from ..utils.codec import decode_matrices, decode_matrix, decode_real, encode_matrices, encode_matrix, encode_real
from ..utils.conic import AffineExpr, ConicProgram, Solution, default_backend, supports_power_cone
from ..utils.model import (
    Allocation, PowerBreakdown, SystemConfig, harvested_power, ir_sinr, power_accounting,
    rx_distortion, secrecy_rate, transmit_covariances, tx_distortion,
)
from ..utils.robust import (
    VAR_B_AP, VAR_B_PS1, VAR_B_PS2, VAR_GAMMA, VAR_N, VAR_T, VAR_U, VAR_V, VAR_Z,
    LmiBlock, SecurityReport, certificate_values, lmi_c2a, lmi_c2b, sample_verify_security, w_var,
)

logger = logging.getLogger(__name__)


# =============================================================================
# CONFIGURATION
# =============================================================================

VAR_R_IR = "r_ir"
VAR_AUX_A = "aux_a"
VAR_AUX_B = "aux_b"
VAR_AUX_C = "aux_c"
VAR_AUX_D = "aux_d"


@dataclass
class SdpOptions:
    distortion_encoding: str = "auto"  # auto | power_cone | pwl
    pwl_segments: int = 32
    isotropic_v: bool = False
    harvest_credit: bool = True
    backend: Optional[str] = None

    def resolved_encoding(self) -> str:
        if self.distortion_encoding == "auto":
            return "power_cone" if supports_power_cone(self.backend or default_backend()) else "pwl"
        if self.distortion_encoding not in ("power_cone", "pwl"):
            raise DomainError(f"unknown distortion encoding {self.distortion_encoding!r}")
        return self.distortion_encoding


def _unit(n: int, i: int) -> np.ndarray:
    e = np.zeros((n, n), dtype=complex)
    e[i, i] = 1.0
    return e


def objective_reference(cfg: SystemConfig) -> float:
    """Circuit energy of one slot (J); the backend sees the objective in these units."""
    return max(cfg.t_max * (cfg.p_c_ps + cfg.p_c_ap), 1e-6)


def lmi_scale(channels) -> float:
    """Common factor applied to G^, E^ and both radii inside the LMI blocks."""
    norm = max(float(np.linalg.norm(channels.g_hat)), float(np.linalg.norm(channels.e_hat)))
    return 1.0 / norm if norm > 0 else 1.0


def security_blocks(channels, gamma_tol: float, scale: float,
                    inv_gamma_param: Optional[str] = None) -> Tuple[List[LmiBlock], LmiBlock]:
    n_irs = len(channels.h)
    g = scale * np.asarray(channels.g_hat)
    e = scale * np.asarray(channels.e_hat)
    c2a = [lmi_c2a(k, g, scale * channels.ups_ap_e, gamma_tol, inv_gamma_param) for k in range(n_irs)]
    return c2a, lmi_c2b(e, scale * channels.ups_ps_e)


# =============================================================================
# ASSEMBLY
# =============================================================================

def sdp_params(cfg: SystemConfig, tau1: float, tau2: float, omega_bar: float) -> Dict[str, float]:
    """Parameter values of the assembled program at (tau1, tau2, omega_bar)."""
    if tau1 <= 0 or tau2 <= 0:
        raise DomainError(f"phase durations must be > 0, got ({tau1}, {tau2})")
    if omega_bar < 0:
        raise DomainError(f"omega_bar must be >= 0, got {omega_bar}")
    gamma_req = cfg.gamma_req(tau2)
    params = {
        "tau1": tau1,
        "tau2": tau2,
        "omega_bar": omega_bar,
        "inv_gamma_tol": 1.0 / cfg.gamma_tol(tau2),
        "c4_const": tau1 * harvested_power(omega_bar, cfg.eh) + cfg.e_res - tau2 * cfg.p_c_ap,
    }
    for k, g in enumerate(gamma_req):
        # an unreachable target leaves the C1 row infeasible
        params[f"inv_gamma_req_{k}"] = 1.0 / g if np.isfinite(g) and g > 0 else 0.0
    return params


def distortion_knee(k1: float, k2: float) -> float:
    """Per-antenna transmit power (W) at which k1 * x^k2 reaches 1 W."""
    return k1 ** (-1.0 / k2)


def _add_distortion(prog: ConicProgram, x_var: str, beta_var: str, idx: int, cfg: SystemConfig,
                    a_max: float, encoding: str, segments: int, label: str):
    """beta >= k1 * x^k2 for one antenna."""
    k1, k2 = cfg.hwi.k1, cfg.hwi.k2
    if k1 == 0:
        return
    if k2 == 1:
        prog.add_linear(AffineExpr().scalar(beta_var, 1.0, idx).scalar(x_var, -k1, idx), ">=", label)
        return
    if encoding == "power_cone":
        # beta^(1/k2) >= x / knee, beta in W
        prog.add_power_cone(
            AffineExpr().scalar(beta_var, 1.0, idx),
            AffineExpr().const(1.0),
            AffineExpr().scalar(x_var, 1.0 / distortion_knee(k1, k2), idx),
            1.0 / k2, label,
        )
        return
    # beta <= a_max through the power caps, so x <= (a_max / k1)^(1/k2)
    a_max = min(a_max, (a_max / k1) ** (1.0 / k2))
    prog.add_linear(AffineExpr().scalar(x_var, -1.0, idx).const(a_max), ">=", label)
    if a_max <= 0:
        return
    points = np.concatenate([[0.0], np.geomspace(a_max * 1e-6, a_max, segments)])
    values = k1 * points ** k2
    for x0, x1, y0, y1 in zip(points[:-1], points[1:], values[:-1], values[1:]):
        slope = (y1 - y0) / (x1 - x0)
        norm = 1.0 / max(1.0, slope)
        prog.add_linear(
            AffineExpr().scalar(beta_var, norm, idx).scalar(x_var, -slope * norm, idx).const(-(y0 - slope * x0) * norm),
            ">=", label,
        )


@timed("build_sdp")
def build_sdp(tau1: float, tau2: float, omega_bar: float, cfg: SystemConfig, channels,
              options: Optional[SdpOptions] = None) -> ConicProgram:
    """
    Relaxed program for fixed (tau1, tau2, omega_bar); the rank-one constraint is dropped.

    The returned program is frozen. Its structure depends only on the channel
    realization and options, so ``with_sdp_params`` re-targets it to another
    (tau1, tau2, omega_bar) without recompiling.
    """
    options = options or SdpOptions()
    params = sdp_params(cfg, tau1, tau2, omega_bar)
    encoding = options.resolved_encoding()
    n_ps, n_ap, n_irs = cfg.n_ps, cfg.n_ap, cfg.n_irs
    noise = cfg.sigma_ir2
    if len(channels.h) != n_irs or np.asarray(channels.l_mat).shape != (n_ps, n_ap):
        raise DomainError("channel set does not match the configured dimensions")

    prog = ConicProgram()
    for name, value in params.items():
        prog.param(name, value)
    for k in range(n_irs):
        prog.matrix_var(w_var(k), n_ap)
    prog.matrix_var(VAR_V, n_ps)
    prog.matrix_var(VAR_Z, n_ps)
    prog.matrix_var(VAR_U, n_ap)
    prog.matrix_var(VAR_N, cfg.n_ev, psd=False)
    prog.scalar_var(VAR_B_PS1, n_ps)
    prog.scalar_var(VAR_B_PS2, n_ps)
    prog.scalar_var(VAR_B_AP, n_ap)
    prog.scalar_var(VAR_R_IR, n_irs)
    prog.scalar_var(VAR_T, n_irs)
    prog.scalar_var(VAR_GAMMA, 1)
    prog.scalar_var(VAR_AUX_A, n_ap)
    prog.scalar_var(VAR_AUX_B, n_ps)
    prog.scalar_var(VAR_AUX_C, n_ps)
    prog.scalar_var(VAR_AUX_D, n_irs)

    eye_ps = np.eye(n_ps)
    eye_ap = np.eye(n_ap)

    # objective: tau1 * P_PS-I + tau2 * (P_AP-II + P_PS-II)
    obj = AffineExpr()
    obj.trace(VAR_V, cfg.rho_ps * eye_ps, "tau1").const(cfg.p_c_ps, "tau1")
    obj.trace(VAR_Z, cfg.rho_ps * eye_ps, "tau2").const(cfg.p_c_ps, "tau2")
    obj.trace(VAR_U, cfg.rho_ap * eye_ap, "tau2").const(cfg.p_c_ap, "tau2")
    for m in range(n_ps):
        obj.scalar(VAR_B_PS1, cfg.rho_ps, m, "tau1").scalar(VAR_B_PS2, cfg.rho_ps, m, "tau2")
    for n in range(n_ap):
        obj.scalar(VAR_B_AP, cfg.rho_ap, n, "tau2")
    for k in range(n_irs):
        obj.trace(w_var(k), cfg.rho_ap * eye_ap, "tau2")
    prog.minimize(obj, scale=1.0 / objective_reference(cfg))

    # C1: SINR targets, in units of the IR noise power
    h_mats = [np.outer(h, np.conj(h)) / noise for h in channels.h]
    f_mats = [np.outer(f, np.conj(f)) / noise for f in channels.f]
    for k in range(n_irs):
        h = np.asarray(channels.h[k])
        f = np.asarray(channels.f[k])
        row = AffineExpr().trace(w_var(k), h_mats[k], f"inv_gamma_req_{k}")
        for j in range(n_irs):
            if j != k:
                row.trace(w_var(j), -h_mats[k])
        for m in range(n_ps):
            row.scalar(VAR_B_PS2, -abs(f[m]) ** 2 / noise, m)
        for n in range(n_ap):
            row.scalar(VAR_B_AP, -abs(h[n]) ** 2 / noise, n)
        row.scalar(VAR_R_IR, -1.0, k).const(-1.0)
        prog.add_linear(row, ">=", f"C1[{k}]")

    # C2a / C2b
    scale = lmi_scale(channels)
    c2a, c2b = security_blocks(channels, cfg.gamma_tol(tau2), scale, inv_gamma_param="inv_gamma_tol")
    for block in c2a + [c2b]:
        prog.add_psd(block.expr, block.label)

    # C4: AP energy in Phase II
    c4 = AffineExpr().trace(VAR_U, -cfg.rho_ap * eye_ap, "tau2").const(1.0, "c4_const")
    for k in range(n_irs):
        c4.trace(w_var(k), -cfg.rho_ap * eye_ap, "tau2")
    for n in range(n_ap):
        c4.scalar(VAR_B_AP, -cfg.rho_ap, n, "tau2")
    prog.add_linear(c4, ">=", "C4")

    # C5: received RF power at the AP
    ll = np.asarray(channels.l_mat) @ np.asarray(channels.l_mat).conj().T
    c5_scale = max(float(np.linalg.eigvalsh(ll)[-1]), 1e-300)
    c5 = AffineExpr().trace(VAR_V, ll / c5_scale).const(-1.0 / c5_scale, "omega_bar")
    if options.harvest_credit:
        for m in range(n_ps):
            c5.scalar(VAR_B_PS1, float(np.real(ll[m, m])) / c5_scale, m)
    prog.add_linear(c5, ">=", "C5")

    # C7-C9: transmit power caps
    for label, cap, mats, budget, size in (
        ("C7", cfg.p_max_ps, [VAR_V], VAR_B_PS1, n_ps),
        ("C8", cfg.p_max_ps, [VAR_Z], VAR_B_PS2, n_ps),
        ("C9", cfg.p_max_ap, [VAR_U] + [w_var(k) for k in range(n_irs)], VAR_B_AP, n_ap),
    ):
        norm = 1.0 / cap if cap > 0 else 1.0
        row = AffineExpr().const(cap * norm)
        for name in mats:
            row.trace(name, -norm * np.eye(size))
        for i in range(size):
            row.scalar(budget, -norm, i)
        prog.add_linear(row, ">=", label)

    # C12-C14: per-antenna powers and their distortion budgets
    for n in range(n_ap):
        row = AffineExpr().scalar(VAR_AUX_A, 1.0, n).trace(VAR_U, -_unit(n_ap, n))
        for k in range(n_irs):
            row.trace(w_var(k), -_unit(n_ap, n))
        prog.add_linear(row, "==", f"C12b[{n}]")
        _add_distortion(prog, VAR_AUX_A, VAR_B_AP, n, cfg, cfg.p_max_ap, encoding, options.pwl_segments, f"C12a[{n}]")
    for m in range(n_ps):
        prog.add_linear(AffineExpr().scalar(VAR_AUX_B, 1.0, m).trace(VAR_V, -_unit(n_ps, m)), "==", f"C13b[{m}]")
        prog.add_linear(AffineExpr().scalar(VAR_AUX_C, 1.0, m).trace(VAR_Z, -_unit(n_ps, m)), "==", f"C14b[{m}]")
        _add_distortion(prog, VAR_AUX_B, VAR_B_PS1, m, cfg, cfg.p_max_ps, encoding, options.pwl_segments, f"C13a[{m}]")
        _add_distortion(prog, VAR_AUX_C, VAR_B_PS2, m, cfg, cfg.p_max_ps, encoding, options.pwl_segments, f"C14a[{m}]")

    # C15: receiver distortion at each IR, noise units
    nu = (cfg.hwi.k3 / 100.0) ** 2
    for k in range(n_irs):
        row = AffineExpr().scalar(VAR_AUX_D, 1.0, k).trace(VAR_U, -h_mats[k]).trace(VAR_Z, -f_mats[k])
        for j in range(n_irs):
            row.trace(w_var(j), -h_mats[k])
        prog.add_linear(row, "==", f"C15b[{k}]")
        prog.add_linear(AffineExpr().scalar(VAR_R_IR, 1.0, k).scalar(VAR_AUX_D, -nu, k), ">=", f"C15a[{k}]")

    # isotropic energy beam: V = p I / n_ps
    if options.isotropic_v:
        for i in range(n_ps):
            for j in range(i + 1, n_ps):
                sym = np.zeros((n_ps, n_ps), dtype=complex)
                sym[i, j] = sym[j, i] = 0.5
                skew = np.zeros((n_ps, n_ps), dtype=complex)
                skew[i, j], skew[j, i] = 0.5j, -0.5j
                prog.add_linear(AffineExpr().trace(VAR_V, sym), "==", f"iso_re[{i},{j}]")
                prog.add_linear(AffineExpr().trace(VAR_V, skew), "==", f"iso_im[{i},{j}]")
            if i > 0:
                prog.add_linear(AffineExpr().trace(VAR_V, _unit(n_ps, i) - _unit(n_ps, 0)), "==", f"iso_diag[{i}]")

    prog.meta.update({
        "lmi_scale": scale,
        "noise": noise,
        "c5_scale": c5_scale,
        "encoding": encoding,
        "harvest_credit": options.harvest_credit,
        "isotropic_v": options.isotropic_v,
        "n_irs": n_irs,
    })
    return prog.freeze()


def with_sdp_params(prog: ConicProgram, cfg: SystemConfig, tau1: float, tau2: float,
                    omega_bar: float) -> ConicProgram:
    return prog.with_params(**sdp_params(cfg, tau1, tau2, omega_bar))


# =============================================================================
# EXTRACTION / RECOVERY
# =============================================================================

def _herm(m: np.ndarray) -> np.ndarray:
    m = np.asarray(m, dtype=complex)
    return 0.5 * (m + m.conj().T)


def extract_allocation(solution: Solution, prog: ConicProgram) -> Allocation:
    """Allocation in Watts from a solved program (certificate kept in LMI scale)."""
    vals = solution.values
    noise = float(prog.meta["noise"])
    n_irs = int(prog.meta["n_irs"])
    return Allocation(
        v_cov=_herm(vals[VAR_V]),
        z_cov=_herm(vals[VAR_Z]),
        u_cov=_herm(vals[VAR_U]),
        w_cov=[_herm(vals[w_var(k)]) for k in range(n_irs)],
        b_ps1=np.asarray(vals[VAR_B_PS1], dtype=float),
        b_ps2=np.asarray(vals[VAR_B_PS2], dtype=float),
        b_ap=np.asarray(vals[VAR_B_AP], dtype=float),
        r_ir=np.asarray(vals[VAR_R_IR], dtype=float) * noise,
        tau1=prog.params["tau1"],
        tau2=prog.params["tau2"],
        rho_recv=prog.params["omega_bar"],
        aux={
            "a": np.asarray(vals[VAR_AUX_A], dtype=float),
            "b": np.asarray(vals[VAR_AUX_B], dtype=float),
            "c": np.asarray(vals[VAR_AUX_C], dtype=float),
            "d": np.asarray(vals[VAR_AUX_D], dtype=float) * noise,
        },
        certificate={
            "n_mat": _herm(vals[VAR_N]),
            "t": np.asarray(vals[VAR_T], dtype=float),
            "gamma": float(np.atleast_1d(vals[VAR_GAMMA])[0]),
            "scale": float(prog.meta["lmi_scale"]),
        },
    )


def rank_ratio(mat: np.ndarray, zero_tol: float = 1e-15) -> float:
    """lambda_2 / lambda_1 of a Hermitian PSD matrix; 0 for (numerically) zero matrices."""
    eig = np.linalg.eigvalsh(_herm(mat))
    if eig[-1] <= zero_tol or eig.size < 2:
        return 0.0
    return float(max(eig[-2], 0.0) / eig[-1])


@dataclass
class RankDiagnostics:
    w_ratios: List[float]
    v_ratio: float
    z_ratio: float
    u_ratio: float
    rank_tol: float = 1e-6

    @property
    def max_w_ratio(self) -> float:
        return max(self.w_ratios, default=0.0)

    @property
    def max_ratio(self) -> float:
        return max([self.max_w_ratio, self.v_ratio, self.z_ratio, self.u_ratio])

    @property
    def rank_one(self) -> bool:
        return self.max_w_ratio <= self.rank_tol

    def to_dict(self) -> dict:
        return {
            "w_ratios": self.w_ratios,
            "v_ratio": self.v_ratio,
            "z_ratio": self.z_ratio,
            "u_ratio": self.u_ratio,
            "rank_one": self.rank_one,
        }


def recover_beamformers(alloc: Allocation, rank_tol: float = 1e-6) -> Tuple[Allocation, RankDiagnostics]:
    """Dominant-eigenvector beamformers w_k = sqrt(lambda_1) u_1 and the rank ratios."""
    w_vec = []
    for w in alloc.w_cov:
        eig, vec = np.linalg.eigh(_herm(w))
        w_vec.append(math.sqrt(max(eig[-1], 0.0)) * vec[:, -1])
    diag = RankDiagnostics(
        w_ratios=[rank_ratio(w) for w in alloc.w_cov],
        v_ratio=rank_ratio(alloc.v_cov),
        z_ratio=rank_ratio(alloc.z_cov),
        u_ratio=rank_ratio(alloc.u_cov),
        rank_tol=rank_tol,
    )
    if not diag.rank_one:
        logger.warning("non-rank-one W_k (max ratio %.2e > %.0e)", diag.max_w_ratio, rank_tol)
    return alloc.with_beamformers(w_vec), diag


def randomize_beamformers(alloc: Allocation, cfg: SystemConfig, channels, n_candidates: int = 200,
                          seed: int = 0, tol: float = 1e-7) -> Optional[Allocation]:
    """
    Gaussian randomization: candidate directions from W_k^{1/2} CN(0, I), powers
    set so every C1 holds with equality at the solved distortion budgets.

    Keeps the candidate with the lowest AP power that meets C9, C4 and the
    C2a blocks under the solved certificate; None when no candidate does.
    """
    rng = np.random.default_rng(seed)
    n_irs = alloc.n_irs
    roots = [linalg.sqrtm(_herm(w) + 1e-18 * np.eye(w.shape[0])) for w in alloc.w_cov]
    gamma_req = cfg.gamma_req(alloc.tau2)
    if not np.all(np.isfinite(gamma_req)):
        return None
    noise = np.array([
        sum(abs(f[m]) ** 2 * alloc.b_ps2[m] for m in range(cfg.n_ps))
        + sum(abs(h[n]) ** 2 * alloc.b_ap[n] for n in range(cfg.n_ap))
        + alloc.r_ir[k] + cfg.sigma_ir2
        for k, (h, f) in enumerate(zip(channels.h, channels.f))
    ])
    scale = float(alloc.certificate.get("scale", lmi_scale(channels)))
    c2a, _ = security_blocks(channels, cfg.gamma_tol(alloc.tau2), scale)
    values = certificate_values(alloc)
    harvest = alloc.tau1 * harvested_power(alloc.rho_recv, cfg.eh) + cfg.e_res
    fixed_ap = float(np.real(np.trace(alloc.u_cov))) + float(np.sum(alloc.b_ap))

    best, best_power = None, math.inf
    for _ in range(n_candidates):
        dirs = []
        for root in roots:
            v = root @ ((rng.standard_normal(root.shape[0]) + 1j * rng.standard_normal(root.shape[0])) / math.sqrt(2))
            norm = np.linalg.norm(v)
            dirs.append(v / norm if norm > 0 else v)
        gains = np.array([[abs(np.vdot(channels.h[k], dirs[j])) ** 2 for j in range(n_irs)] for k in range(n_irs)])
        system = -gains.copy()
        np.fill_diagonal(system, np.diag(gains) / gamma_req)
        try:
            powers = linalg.solve(system, noise)
        except (linalg.LinAlgError, ValueError):
            continue
        if np.any(powers < 0) or not np.all(np.isfinite(powers)):
            continue
        total = float(np.sum(powers))
        ap_power = total + fixed_ap
        if ap_power > cfg.p_max_ap * (1 + tol):
            continue
        if alloc.tau2 * (cfg.rho_ap * ap_power + cfg.p_c_ap) > harvest * (1 + tol) + tol:
            continue
        cand = {**values, **{w_var(k): powers[k] * np.outer(dirs[k], dirs[k].conj()) for k in range(n_irs)}}
        if min(b.min_eigenvalue(cand) for b in c2a) < -tol:
            continue
        if total < best_power:
            best_power = total
            best = [math.sqrt(powers[k]) * dirs[k] for k in range(n_irs)]

    if best is None:
        logger.warning("Gaussian randomization found no feasible candidate out of %d", n_candidates)
        return None
    w_cov = [np.outer(w, w.conj()) for w in best]
    return replace(alloc, w_cov=w_cov).with_beamformers(best)


# =============================================================================
# AUDIT
# =============================================================================

def _rel(rhs: float, lhs: float) -> float:
    return (rhs - lhs) / max(abs(rhs), abs(lhs), 1e-300)


def _psd_slack(mat: np.ndarray) -> float:
    eig = np.linalg.eigvalsh(_herm(mat))
    if eig[-1] <= 1e-15:
        return 0.0
    return float(eig[0] / eig[-1])


@dataclass
class AuditReport:
    slacks: Dict[str, float]
    tightness: Dict[str, float]
    security: SecurityReport
    power: PowerBreakdown
    sinr: List[float]
    secrecy_rates: List[float]
    tol: float = 1e-6
    tightness_tol: float = 1e-6
    notes: List[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(v >= -self.tol for v in self.slacks.values())

    @property
    def tight(self) -> bool:
        return all(abs(v) <= self.tightness_tol for v in self.tightness.values())

    def violations(self) -> List[str]:
        return [k for k, v in self.slacks.items() if v < -self.tol]

    def to_dict(self) -> dict:
        return {
            "passed": self.passed,
            "tight": self.tight,
            "violations": self.violations(),
            "slacks": self.slacks,
            "tightness": self.tightness,
            "security": self.security.to_dict(),
            "power": self.power.to_dict(),
            "sinr": self.sinr,
            "secrecy_rates": self.secrecy_rates,
        }


@timed("audit_solution")
def audit_solution(alloc: Allocation, cfg: SystemConfig, channels, n_security_samples: int = 256,
                   seed: int = 0, tol: float = 1e-6) -> AuditReport:
    """
    Signed, normalized slack of every original constraint (>= 0 means satisfied).

    Uses the recovered beamformers and the non-linear distortion and
    harvesting models. C2 is in bit/s/Hz from the sampling verifier; C1
    tightness is relative to Gamma_req, C12a-C15a tightness in absolute Watts.
    """
    if alloc.w_vec is None:
        raise DomainError("audit needs recovered beamformers")
    slacks: Dict[str, float] = {}
    phi, theta, psi = transmit_covariances(alloc, cfg.hwi)
    tr = lambda m: float(np.real(np.trace(m)))  # noqa: E731

    sinr = [ir_sinr(k, alloc, channels, cfg) for k in range(alloc.n_irs)]
    gamma_req = cfg.gamma_req(alloc.tau2)
    for k, g_req in enumerate(gamma_req):
        slacks[f"C1[{k}]"] = (sinr[k] - g_req) / g_req if np.isfinite(g_req) else -1.0

    security = sample_verify_security(alloc, channels, cfg, n_security_samples, seed=seed, tol=tol)
    slacks["C2"] = cfg.qos.r_tol - security.worst_capacity

    slacks["C3"] = (cfg.t_max - alloc.tau1 - alloc.tau2) / cfg.t_max
    power = power_accounting(alloc, cfg)
    slacks["C4"] = _rel(alloc.tau1 * harvested_power(max(alloc.rho_recv, 0.0), cfg.eh) + cfg.e_res,
                        alloc.tau2 * power.p_ap2)
    ll = np.asarray(channels.l_mat) @ np.asarray(channels.l_mat).conj().T
    slacks["C5"] = _rel(float(np.real(np.trace(ll @ (alloc.v_cov + phi)))), alloc.rho_recv)
    slacks["C6"] = min(alloc.tau1, alloc.tau2) / cfg.t_max
    slacks["C7"] = _rel(cfg.p_max_ps, tr(alloc.v_cov) + tr(phi))
    slacks["C8"] = _rel(cfg.p_max_ps, tr(alloc.z_cov) + tr(theta))
    info = float(sum(np.vdot(w, w).real for w in alloc.w_vec))
    slacks["C9"] = _rel(cfg.p_max_ap, info + tr(alloc.u_cov) + tr(psi))
    slacks["C10"] = min(_psd_slack(m) for m in (alloc.v_cov, alloc.z_cov, alloc.u_cov))

    tightness: Dict[str, float] = {}
    # C1 under the solved distortion budgets, relative to Gamma_req
    w_all = alloc.info_covariances()
    for k, (h, f) in enumerate(zip(channels.h, channels.f)):
        if not np.isfinite(gamma_req[k]):
            tightness[f"C1[{k}]"] = -1.0
            continue
        gains = [float(np.real(np.conj(h) @ w @ h)) for w in w_all]
        budget = (float(np.abs(f) ** 2 @ alloc.b_ps2 + np.abs(h) ** 2 @ alloc.b_ap)
                  + float(alloc.r_ir[k]) + cfg.sigma_ir2)
        budget_sinr = gains[k] / (sum(gains) - gains[k] + budget)
        tightness[f"C1[{k}]"] = float((budget_sinr - gamma_req[k]) / gamma_req[k])
    ap_diag = np.clip(np.real(np.diag(alloc.ap_covariance())), 0.0, None)
    for n, a in enumerate(ap_diag):
        tightness[f"C12a[{n}]"] = float(alloc.b_ap[n] - tx_distortion(a, cfg.hwi))
    for m in range(cfg.n_ps):
        tightness[f"C13a[{m}]"] = float(alloc.b_ps1[m] - tx_distortion(max(np.real(alloc.v_cov[m, m]), 0.0), cfg.hwi))
        tightness[f"C14a[{m}]"] = float(alloc.b_ps2[m] - tx_distortion(max(np.real(alloc.z_cov[m, m]), 0.0), cfg.hwi))
    ap_cov = alloc.ap_covariance()
    for k, (h, f) in enumerate(zip(channels.h, channels.f)):
        received = float(np.real(np.conj(h) @ ap_cov @ h + np.conj(f) @ alloc.z_cov @ f))
        tightness[f"C15a[{k}]"] = float(alloc.r_ir[k] - rx_distortion(max(received, 0.0), cfg.hwi.k3))

    csi = channels.true_error
    secrecy = [secrecy_rate(k, alloc, channels, cfg, csi) for k in range(alloc.n_irs)]
    report = AuditReport(slacks=slacks, tightness=tightness, security=security, power=power,
                         sinr=sinr, secrecy_rates=secrecy, tol=tol)
    if not report.passed:
        logger.info("audit violations: %s", ", ".join(report.violations()))
    return report


# =============================================================================
# SERIALIZATION
# =============================================================================

def allocation_to_record(alloc: Allocation) -> dict:
    cert = alloc.certificate
    return {
        "v_cov": encode_matrix(alloc.v_cov),
        "z_cov": encode_matrix(alloc.z_cov),
        "u_cov": encode_matrix(alloc.u_cov),
        "w_cov": encode_matrices(alloc.w_cov),
        "w_vec": None if alloc.w_vec is None else encode_matrices(alloc.w_vec),
        "b_ps1": encode_real(alloc.b_ps1),
        "b_ps2": encode_real(alloc.b_ps2),
        "b_ap": encode_real(alloc.b_ap),
        "r_ir": encode_real(alloc.r_ir),
        "tau1": alloc.tau1,
        "tau2": alloc.tau2,
        "rho_recv": alloc.rho_recv,
        "aux": {k: encode_real(v) for k, v in alloc.aux.items()},
        "certificate": None if not cert else {
            "n_mat": encode_matrix(cert["n_mat"]),
            "t": encode_real(cert["t"]),
            "gamma": cert["gamma"],
            "scale": cert["scale"],
        },
    }


def allocation_from_record(record: dict) -> Allocation:
    cert = record.get("certificate")
    return Allocation(
        v_cov=decode_matrix(record["v_cov"]),
        z_cov=decode_matrix(record["z_cov"]),
        u_cov=decode_matrix(record["u_cov"]),
        w_cov=decode_matrices(record["w_cov"]),
        w_vec=None if record.get("w_vec") is None else decode_matrices(record["w_vec"]),
        b_ps1=decode_real(record["b_ps1"]),
        b_ps2=decode_real(record["b_ps2"]),
        b_ap=decode_real(record["b_ap"]),
        r_ir=decode_real(record["r_ir"]),
        tau1=float(record["tau1"]),
        tau2=float(record["tau2"]),
        rho_recv=float(record["rho_recv"]),
        aux={k: decode_real(v) for k, v in record.get("aux", {}).items()},
        certificate={} if not cert else {
            "n_mat": decode_matrix(cert["n_mat"]),
            "t": decode_real(cert["t"]),
            "gamma": float(cert["gamma"]),
            "scale": float(cert["scale"]),
        },
    )
