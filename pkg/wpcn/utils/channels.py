"""
Channel Generation Module
=========================
Random channel realizations and eavesdropper CSI-uncertainty sampling.

Features:
- Geometry: AP at the origin, PS on the x-axis, IRs on a ring (or disc) around the AP
- Large-scale gain with free-space or unit reference and per-link exponents
- Rician PS->AP link (ULA line-of-sight), Rayleigh on every other link
- Norm-ball CSI errors (uniform in ball or on the boundary)
- Deterministic seed splitting for per-trial / per-sample streams
- Channel dump/restore for replay across implementations
"""

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from ..errors import DomainError
from .codec import LAYOUT, decode_matrices, decode_matrix, decode_optional, encode_matrices, encode_matrix, encode_optional
from .model import SystemConfig

logger = logging.getLogger(__name__)

SPEED_OF_LIGHT = 299_792_458.0

SeedLike = Union[int, np.random.Generator]


# =============================================================================
# SEEDS
# =============================================================================

def derive_seed(master: int, *keys: int) -> int:
    """Child seed of ``master`` for the path ``keys`` (e.g. sweep index, trial index)."""
    seq = np.random.SeedSequence(int(master), spawn_key=tuple(int(k) for k in keys))
    return int(seq.generate_state(1, np.uint64)[0])


def _rng(seed: SeedLike) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(int(seed))


# =============================================================================
# TOPOLOGY
# =============================================================================

LINKS = ("ps_ap", "ap_ir", "ps_ir", "ap_eve", "ps_eve")


@dataclass(frozen=True)
class Topology:
    """Distances (m), pathloss exponents, antenna gains (dBi) and carrier."""
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

    def __post_init__(self):
        for name in ("d_ps_ap", "d_ps_eve", "d_ap_eve", "d_ap_ir", "carrier_hz"):
            if getattr(self, name) <= 0:
                raise DomainError(f"{name} must be > 0, got {getattr(self, name)}")
        for link in LINKS:
            if getattr(self, f"exponent_{link}") < 2:
                raise DomainError(f"exponent_{link} must be >= 2")
        if self.ir_placement not in ("ring", "disc"):
            raise DomainError(f"ir_placement must be 'ring' or 'disc', got {self.ir_placement!r}")
        if self.pathloss_reference not in ("free_space", "unit"):
            raise DomainError(f"pathloss_reference must be 'free_space' or 'unit', got {self.pathloss_reference!r}")

    @property
    def wavelength(self) -> float:
        return SPEED_OF_LIGHT / self.carrier_hz

    @property
    def rician_k(self) -> float:
        return 10.0 ** (self.rician_factor_db / 10.0)

    def _antenna_gain_db(self, link: str) -> float:
        tx, rx = link.split("_")
        gains = {"ps": self.gain_ps_dbi, "ap": self.gain_ap_dbi, "ir": self.gain_ir_dbi, "eve": self.gain_eve_dbi}
        return gains[tx] + gains[rx]

    def large_scale_gain(self, link: str, distance: Optional[float] = None) -> float:
        """Average power gain of ``link`` at ``distance`` (defaults to the configured one)."""
        if link not in LINKS:
            raise DomainError(f"unknown link {link!r}")
        if distance is None:
            if link == "ps_ir":
                raise DomainError("ps_ir distance depends on the IR position; pass it explicitly")
            distance = getattr(self, f"d_{link}")
        if distance <= 0:
            raise DomainError(f"distance must be > 0, got {distance}")
        reference = (self.wavelength / (4 * math.pi)) ** 2 if self.pathloss_reference == "free_space" else 1.0
        exponent = getattr(self, f"exponent_{link}")
        return 10.0 ** (self._antenna_gain_db(link) / 10.0) * reference * distance ** (-exponent)

    def ir_positions(self, n_irs: int, rng: np.random.Generator) -> np.ndarray:
        angles = rng.uniform(0.0, 2 * math.pi, n_irs)
        if self.ir_placement == "ring":
            radii = np.full(n_irs, self.d_ap_ir)
        else:
            # at least 1 m from the AP
            radii = np.sqrt(rng.uniform((1.0 / self.d_ap_ir) ** 2, 1.0, n_irs)) * self.d_ap_ir
        return np.stack([radii * np.cos(angles), radii * np.sin(angles)], axis=1)

    def to_dict(self) -> dict:
        return dict(self.__dict__)


# =============================================================================
# SMALL-SCALE FADING
# =============================================================================

def complex_gaussian(rng: np.random.Generator, shape) -> np.ndarray:
    """i.i.d. CN(0, 1) entries."""
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / math.sqrt(2.0)


def ula_response(n: int, angles) -> np.ndarray:
    """Half-wavelength ULA steering vectors, unit-modulus entries; shape (..., n)."""
    angles = np.asarray(angles, dtype=float)
    return np.exp(1j * math.pi * np.arange(n) * np.sin(angles)[..., None])


def rician_fading(rng: np.random.Generator, n_tx: int, n_rx: int, k_factor: float,
                  batch: Tuple[int, ...] = ()) -> np.ndarray:
    """Unit-power Rician matrices (..., n_tx, n_rx) with random LOS angles."""
    theta_tx = rng.uniform(-math.pi / 2, math.pi / 2, batch)
    theta_rx = rng.uniform(-math.pi / 2, math.pi / 2, batch)
    los = ula_response(n_tx, theta_tx)[..., :, None] * np.conj(ula_response(n_rx, theta_rx))[..., None, :]
    nlos = complex_gaussian(rng, batch + (n_tx, n_rx))
    return math.sqrt(k_factor / (k_factor + 1.0)) * los + math.sqrt(1.0 / (k_factor + 1.0)) * nlos


def sample_link(topo: Topology, link: str, n_draws: int, shape: Tuple[int, ...],
                seed: SeedLike, distance: Optional[float] = None) -> np.ndarray:
    """``n_draws`` independent realizations of one link, shape (n_draws, *shape)."""
    rng = _rng(seed)
    amplitude = math.sqrt(topo.large_scale_gain(link, distance))
    if link == "ps_ap":
        return amplitude * rician_fading(rng, shape[0], shape[1], topo.rician_k, (n_draws,))
    return amplitude * complex_gaussian(rng, (n_draws,) + tuple(shape))


# =============================================================================
# CSI UNCERTAINTY
# =============================================================================

def sample_csi_error(radius: float, shape: Tuple[int, int], seed: SeedLike,
                     boundary: bool = False, n_draws: Optional[int] = None) -> np.ndarray:
    """
    Error matrix drawn uniformly from the Frobenius ball of ``radius``.

    With ``boundary`` the norm equals ``radius``. ``n_draws`` stacks independent
    draws along a leading axis.
    """
    if radius < 0:
        raise DomainError(f"radius must be >= 0, got {radius}")
    rng = _rng(seed)
    batch = () if n_draws is None else (int(n_draws),)
    direction = complex_gaussian(rng, batch + tuple(shape))
    norms = np.linalg.norm(direction.reshape(batch + (-1,)), axis=-1)
    direction = direction / np.maximum(norms, 1e-300).reshape(batch + (1, 1))
    real_dim = 2 * int(np.prod(shape))
    if boundary:
        scale = np.full(batch, radius)
    else:
        scale = radius * rng.uniform(0.0, 1.0, batch) ** (1.0 / real_dim)
    delta = direction * np.reshape(scale, batch + (1, 1))
    # rescale the rare draw that round-off pushes past the radius
    over = np.linalg.norm(delta.reshape(batch + (-1,)), axis=-1) / max(radius, 1e-300)
    return delta / np.maximum(over, 1.0).reshape(batch + (1, 1))


def radius_from_normalized_error(sigma_eve2: float, nominal: np.ndarray) -> float:
    if sigma_eve2 < 0:
        raise DomainError(f"sigma_eve2 must be >= 0, got {sigma_eve2}")
    return math.sqrt(sigma_eve2) * float(np.linalg.norm(nominal))


# =============================================================================
# CHANNEL SET
# =============================================================================

@dataclass
class ChannelSet:
    """One realization of every link plus the eavesdropper estimates and error radii."""
    l_mat: np.ndarray
    h: List[np.ndarray]
    f: List[np.ndarray]
    g_hat: np.ndarray
    e_hat: np.ndarray
    ups_ap_e: float
    ups_ps_e: float
    true_dg: Optional[np.ndarray] = None
    true_de: Optional[np.ndarray] = None
    seed: Optional[int] = None
    ir_positions: Optional[np.ndarray] = field(default=None, repr=False)

    def __post_init__(self):
        if self.true_dg is not None and np.linalg.norm(self.true_dg) > self.ups_ap_e * (1 + 1e-12):
            raise DomainError("true AP->Eve error lies outside its uncertainty ball")
        if self.true_de is not None and np.linalg.norm(self.true_de) > self.ups_ps_e * (1 + 1e-12):
            raise DomainError("true PS->Eve error lies outside its uncertainty ball")

    @property
    def true_error(self) -> Optional[Tuple[np.ndarray, np.ndarray]]:
        if self.true_dg is None or self.true_de is None:
            return None
        return self.true_dg, self.true_de

    def zero_error(self) -> Tuple[np.ndarray, np.ndarray]:
        return np.zeros_like(self.g_hat), np.zeros_like(self.e_hat)

    def to_record(self) -> dict:
        return {
            "seed": self.seed,
            "l_mat": encode_matrix(self.l_mat),
            "h": encode_matrices(self.h),
            "f": encode_matrices(self.f),
            "g_hat": encode_matrix(self.g_hat),
            "e_hat": encode_matrix(self.e_hat),
            "ups_ap_e": self.ups_ap_e,
            "ups_ps_e": self.ups_ps_e,
            "true_dg": encode_optional(self.true_dg),
            "true_de": encode_optional(self.true_de),
        }

    @classmethod
    def from_record(cls, record: dict) -> "ChannelSet":
        return cls(
            l_mat=decode_matrix(record["l_mat"]),
            h=decode_matrices(record["h"]),
            f=decode_matrices(record["f"]),
            g_hat=decode_matrix(record["g_hat"]),
            e_hat=decode_matrix(record["e_hat"]),
            ups_ap_e=float(record["ups_ap_e"]),
            ups_ps_e=float(record["ups_ps_e"]),
            true_dg=decode_optional(record.get("true_dg")),
            true_de=decode_optional(record.get("true_de")),
            seed=record.get("seed"),
        )


def generate_channels(cfg: SystemConfig, topo: Topology, seed: int) -> ChannelSet:
    """
    Draw one channel realization.

    The solver-visible estimates come from the main stream of ``seed``; the
    held-out true CSI errors come from the child stream ``derive_seed(seed, 1)``
    so the estimates do not depend on whether errors are drawn.
    """
    rng = np.random.default_rng(int(seed))
    positions = topo.ir_positions(cfg.n_irs, rng)
    ps_position = np.array([topo.d_ps_ap, 0.0])

    l_mat = math.sqrt(topo.large_scale_gain("ps_ap")) * rician_fading(rng, cfg.n_ps, cfg.n_ap, topo.rician_k)
    h, f = [], []
    for pos in positions:
        d_ap = float(np.linalg.norm(pos))
        d_ps = float(np.linalg.norm(pos - ps_position))
        h.append(math.sqrt(topo.large_scale_gain("ap_ir", d_ap)) * complex_gaussian(rng, cfg.n_ap))
        f.append(math.sqrt(topo.large_scale_gain("ps_ir", d_ps)) * complex_gaussian(rng, cfg.n_ps))
    g_hat = math.sqrt(topo.large_scale_gain("ap_eve")) * complex_gaussian(rng, (cfg.n_ap, cfg.n_ev))
    e_hat = math.sqrt(topo.large_scale_gain("ps_eve")) * complex_gaussian(rng, (cfg.n_ps, cfg.n_ev))

    ups_ap = radius_from_normalized_error(cfg.sigma_eve2, g_hat)
    ups_ps = radius_from_normalized_error(cfg.sigma_eve2, e_hat)
    err_rng = np.random.default_rng(derive_seed(seed, 1))
    true_dg = sample_csi_error(ups_ap, g_hat.shape, err_rng)
    true_de = sample_csi_error(ups_ps, e_hat.shape, err_rng)

    logger.debug("channels seed=%d |L|_F=%.3e |G|_F=%.3e ups=(%.3e, %.3e)",
                 seed, np.linalg.norm(l_mat), np.linalg.norm(g_hat), ups_ap, ups_ps)
    return ChannelSet(l_mat=l_mat, h=h, f=f, g_hat=g_hat, e_hat=e_hat,
                      ups_ap_e=ups_ap, ups_ps_e=ups_ps, true_dg=true_dg, true_de=true_de,
                      seed=int(seed), ir_positions=positions)


# =============================================================================
# DUMP / RESTORE
# =============================================================================

def dump_channels(channel_sets: Sequence[ChannelSet], path: Union[str, Path]) -> Path:
    """Write one record per trial to a JSON file."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = {"format": "wpcn-channels/1", "layout": LAYOUT,
               "records": [c.to_record() for c in channel_sets]}
    path.write_text(json.dumps(payload), encoding="utf-8")
    return path


def load_channels(path: Union[str, Path]) -> List[ChannelSet]:
    payload = json.loads(Path(path).read_text(encoding="utf-8"))
    return [ChannelSet.from_record(r) for r in payload["records"]]
