"""Tests for the physical model: units, distortion, harvesting, link metrics and power accounting."""

import math
from dataclasses import replace
from types import SimpleNamespace

import numpy as np
import pytest

from wpcn.errors import DimensionError, DomainError, InfeasibleTargetError
from wpcn.utils.model import (
    Allocation, EhParams, HwiParams, QosParams, SystemConfig, dbm_to_watt, eve_capacity,
    eve_rate_from_matrices, harvested_power, inverse_harvested_power, ir_sinr, power_accounting,
    rx_distortion, secrecy_rate, transmit_covariances, tx_distortion, watt_to_dbm,
)


# =============================================================================
# UNITS
# =============================================================================

def test_dbm_conversions():
    assert dbm_to_watt(30.0) == pytest.approx(1.0)
    assert dbm_to_watt(-77.0) == pytest.approx(10 ** (-10.7))
    assert watt_to_dbm(1.0) == pytest.approx(30.0)
    assert watt_to_dbm(0.0) == -math.inf


# =============================================================================
# PARAMETERS
# =============================================================================

def test_qos_rates_must_exceed_tolerance():
    with pytest.raises(DomainError):
        QosParams(r_req=(0.1,), r_tol=0.1)


def test_system_config_needs_enough_antennas():
    with pytest.raises(DomainError):
        SystemConfig(n_ps=1, n_ap=1, n_ev=3)


def test_system_config_checks_rate_count():
    with pytest.raises(DimensionError):
        SystemConfig(n_irs=3)


def test_hwi_bounds():
    with pytest.raises(DomainError):
        HwiParams(k2=0.5)
    with pytest.raises(DomainError):
        HwiParams(k3=20.0)
    assert HwiParams(k1=0.0, k3=0.0).ideal


def test_sinr_targets():
    cfg = SystemConfig()
    assert cfg.gamma_req(1.0) == pytest.approx([15.0, 15.0])
    assert cfg.gamma_tol(1.0) == pytest.approx(2 ** 0.1 - 1)
    assert cfg.gamma_req(0.5) == pytest.approx([255.0, 255.0])


def test_sinr_target_overflow_is_infinite():
    cfg = SystemConfig()
    assert np.all(np.isinf(cfg.gamma_req(1e-4)))


def test_gamma_rejects_nonpositive_duration():
    with pytest.raises(DomainError):
        SystemConfig().gamma_req(0.0)


def test_without_impairments_keeps_exponent():
    cfg = SystemConfig(hwi=HwiParams(k1=3.0, k2=2.0, k3=5.0)).without_impairments()
    assert cfg.hwi.k1 == 0.0 and cfg.hwi.k3 == 0.0 and cfg.hwi.k2 == 2.0


# =============================================================================
# DISTORTION
# =============================================================================

def test_tx_distortion():
    hwi = HwiParams(k1=2.0, k2=3.0)
    assert tx_distortion(0.0, hwi) == 0.0
    assert tx_distortion(0.5, hwi) == pytest.approx(0.25)
    np.testing.assert_allclose(tx_distortion([1.0, 2.0], hwi), [2.0, 16.0])
    with pytest.raises(DomainError):
        tx_distortion(-1e-3, hwi)


def test_rx_distortion():
    assert rx_distortion(1.0, 10.0) == pytest.approx(0.01)
    assert rx_distortion(3.0, 0.0) == 0.0
    with pytest.raises(DomainError):
        rx_distortion(-1.0, 5.0)


def test_transmit_covariances_are_diagonal():
    cfg = SystemConfig(hwi=HwiParams(k1=1.0, k2=2.0))
    alloc = Allocation.zeros(cfg, 0.5, 0.5)
    alloc.v_cov = np.array([[0.5, 0.2, 0.0], [0.2, 0.1, 0.0], [0.0, 0.0, 0.0]], dtype=complex)
    phi, theta, psi = transmit_covariances(alloc, cfg.hwi)
    np.testing.assert_allclose(np.diag(phi).real, [0.25, 0.01, 0.0])
    assert np.count_nonzero(phi - np.diag(np.diag(phi))) == 0
    assert np.all(theta == 0) and np.all(psi == 0)


# =============================================================================
# ENERGY HARVESTING
# =============================================================================

def test_harvesting_starts_at_zero():
    assert harvested_power(0.0, EhParams()) == 0.0


def test_harvesting_is_monotone_and_saturates():
    eh = EhParams()
    omega = np.linspace(0.0, 0.1, 1001)
    xi = harvested_power(omega, eh)
    assert np.all(np.diff(xi) > 0)
    assert np.all(xi < eh.m_sat)
    assert harvested_power(1.0, eh) >= 0.999 * eh.m_sat


def test_harvesting_matches_normalized_logistic():
    eh = EhParams()
    omega = np.array([1e-4, 1e-3, 0.0014, 0.01, 0.05])
    logistic = 1.0 / (1.0 + np.exp(-eh.a * (omega - eh.b)))
    expected = eh.m_sat * (logistic - eh.omega_0) / (1.0 - eh.omega_0)
    np.testing.assert_allclose(harvested_power(omega, eh), expected, rtol=1e-10)


def test_inverse_harvesting():
    eh = EhParams()
    omega = np.array([1e-5, 1e-3, 0.02])
    np.testing.assert_allclose(inverse_harvested_power(harvested_power(omega, eh), eh), omega, rtol=1e-9)
    assert inverse_harvested_power(0.0, eh) == 0.0


def test_inverse_harvesting_rejects_saturation():
    eh = EhParams()
    with pytest.raises(InfeasibleTargetError):
        inverse_harvested_power(eh.m_sat, eh)
    with pytest.raises(DomainError):
        inverse_harvested_power(-1e-6, eh)


def test_harvesting_rejects_negative_power():
    with pytest.raises(DomainError):
        harvested_power(-1.0, EhParams())


# =============================================================================
# LINK METRICS
# =============================================================================

def _single_ir_cfg(**kwargs):
    base = dict(n_ps=2, n_ap=2, n_ev=1, n_irs=1, qos=QosParams(r_req=(2.0,), r_tol=0.5),
                hwi=HwiParams(k1=0.0, k3=0.0))
    base.update(kwargs)
    return SystemConfig(**base)


def test_ir_sinr_ideal_hardware():
    cfg = _single_ir_cfg()
    h = np.array([1.0 + 1.0j, 0.5])
    channels = SimpleNamespace(h=[h], f=[np.array([0.3, 0.2j])])
    w = np.array([0.2, -0.1j])
    alloc = Allocation.zeros(cfg, 0.5, 0.5).with_beamformers([w])
    alloc.u_cov = np.eye(2, dtype=complex)
    expected = abs(np.vdot(h, w)) ** 2 / cfg.sigma_ir2
    assert ir_sinr(0, alloc, channels, cfg) == pytest.approx(expected)


def test_ir_sinr_receiver_distortion_counts_artificial_noise():
    cfg = _single_ir_cfg(hwi=HwiParams(k1=0.0, k3=10.0), sigma_ir2=1.0)
    h = np.array([1.0, 0.0])
    channels = SimpleNamespace(h=[h], f=[np.zeros(2)])
    alloc = Allocation.zeros(cfg, 0.5, 0.5).with_beamformers([np.array([1.0, 0.0])])
    alloc.u_cov = np.diag([3.0, 0.0]).astype(complex)
    # received 1 + 3, distortion 1% of it
    assert ir_sinr(0, alloc, channels, cfg) == pytest.approx(1.0 / (1.0 + 0.04))


def test_ir_sinr_index_check():
    cfg = _single_ir_cfg()
    alloc = Allocation.zeros(cfg, 0.5, 0.5)
    with pytest.raises(IndexError):
        ir_sinr(1, alloc, SimpleNamespace(h=[np.ones(2)], f=[np.ones(2)]), cfg)


def test_eve_rate_scalar_case():
    one = np.ones((1, 1), complex)
    rate = eve_rate_from_matrices(one, one, jam_ap=one, jam_ps=0 * one, signal_cov=3 * one)
    assert float(rate) == pytest.approx(2.0)


def test_eve_rate_without_jamming_is_infinite():
    cfg = _single_ir_cfg()
    channels = SimpleNamespace(h=[np.ones(2)], f=[np.ones(2)], g_hat=np.ones((2, 1)), e_hat=np.ones((2, 1)))
    alloc = Allocation.zeros(cfg, 0.5, 0.5).with_beamformers([np.array([1.0, 0.0])])
    assert math.isinf(eve_capacity(0, alloc, channels, cfg))
    assert secrecy_rate(0, alloc, channels, cfg) == 0.0


def test_eve_rate_zero_signal():
    cfg = _single_ir_cfg()
    channels = SimpleNamespace(h=[np.ones(2)], f=[np.ones(2)], g_hat=np.ones((2, 1)), e_hat=np.ones((2, 1)))
    alloc = Allocation.zeros(cfg, 0.5, 0.5)
    assert eve_capacity(0, alloc, channels, cfg) == 0.0


def test_secrecy_rate_with_jamming():
    cfg = _single_ir_cfg(sigma_ir2=1.0)
    channels = SimpleNamespace(h=[np.array([1.0, 0.0])], f=[np.zeros(2)],
                               g_hat=np.array([[1.0], [0.0]]), e_hat=np.zeros((2, 1)))
    alloc = Allocation.zeros(cfg, 1.0, 1.0).with_beamformers([np.array([math.sqrt(3.0), 0.0])])
    alloc.u_cov = np.diag([1.0, 0.0]).astype(complex)
    # IR: log2(1 + 3) = 2, eavesdropper: log2(1 + 3 / 1) = 2
    assert secrecy_rate(0, alloc, channels, cfg) == pytest.approx(0.0, abs=1e-12)
    alloc.u_cov = np.diag([3.0, 0.0]).astype(complex)
    assert secrecy_rate(0, alloc, channels, cfg) == pytest.approx(1.0)


# =============================================================================
# POWER ACCOUNTING
# =============================================================================

def test_idle_allocation_costs_circuit_power():
    cfg = SystemConfig()
    power = power_accounting(Allocation.zeros(cfg, 0.3, 0.6), cfg)
    assert power.objective == pytest.approx(0.3 * cfg.p_c_ps + 0.6 * (cfg.p_c_ap + cfg.p_c_ps))
    assert power.reported == pytest.approx(0.3 * cfg.p_c_ps)


def test_reported_power_draws_on_reserve():
    cfg = replace(_single_ir_cfg(), e_res=0.5)
    alloc = Allocation.zeros(cfg, 0.4, 0.5).with_beamformers([np.array([0.3, 0.0])])
    power = power_accounting(alloc, cfg)
    expected_ap = cfg.rho_ap * 0.09 + cfg.p_c_ap
    assert power.p_ap2 == pytest.approx(expected_ap)
    # nothing harvested at rho_recv = 0, so the whole Phase-II AP energy comes from the reserve
    assert power.reported == pytest.approx(0.4 * power.p_ps1 + 0.5 * expected_ap)
    assert power.objective >= power.reported
