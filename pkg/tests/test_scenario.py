import math

import numpy as np
import pytest

from bpms.errors import ConfigError, DegenerateGeometryError
from bpms.scenario import (
    SPEED_OF_LIGHT,
    ScenarioConfig,
    channel_matrix_bp,
    channel_matrix_ms,
    derive_channel_params,
    load_config,
    steering_derivative,
    steering_matrix,
    steering_vector,
    wrap_angle,
)


def test_steering_vector_examples():
    np.testing.assert_allclose(steering_vector(0.0, 4), np.ones(4))
    np.testing.assert_allclose(steering_vector(np.pi / 2, 2), [np.exp(-0.5j * np.pi), np.exp(0.5j * np.pi)],
                               atol=1e-15)
    a = steering_vector(0.7, 9)
    np.testing.assert_allclose(np.abs(a), 1.0)


def test_steering_derivative_examples():
    np.testing.assert_allclose(steering_derivative(np.pi / 2, 6), 0.0, atol=1e-15)
    np.testing.assert_allclose(steering_derivative(0.0, 4), 1j * np.pi * np.array([-1.5, -0.5, 0.5, 1.5]))


@pytest.mark.parametrize("reference", ["centered", "first"])
def test_steering_derivative_finite_difference(reference):
    rng = np.random.default_rng(3)
    h = 1e-6
    worst = 0.0
    for t in rng.uniform(-np.pi / 2, np.pi / 2, 100):
        fd = (steering_vector(t + h, 12, reference) - steering_vector(t - h, 12, reference)) / (2 * h)
        an = steering_derivative(t, 12, reference)
        worst = max(worst, np.max(np.abs(fd - an)) / np.max(np.abs(an)))
    assert worst < 1e-6


def test_reference_only_changes_a_common_phase():
    a = steering_vector(0.4, 8, "centered")
    b = steering_vector(0.4, 8, "first")
    ratio = b / a
    np.testing.assert_allclose(ratio, ratio[0])
    with pytest.raises(ValueError):
        steering_vector(0.4, 8, "middle")


def test_steering_matrix_columns():
    A = steering_matrix([0.1, -0.3], 5)
    np.testing.assert_allclose(A[:, 1], steering_vector(-0.3, 5))


def test_default_los_delay():
    cfg = ScenarioConfig()
    p = derive_channel_params(cfg)
    d = math.hypot(-5.0, 20.0)
    assert d == pytest.approx(20.6155, abs=1e-4)
    assert p.delay_bp[0] == pytest.approx(d / SPEED_OF_LIGHT + 1e-6, rel=1e-14)
    assert p.delay_bp[0] == pytest.approx(1.0687e-6, abs=1e-10)
    assert p.delay_ms[0] == pytest.approx(2 * d / SPEED_OF_LIGHT, rel=1e-14)


def test_axis_aligned_ue():
    # bearings are measured from broadside (the +y axis)
    cfg = ScenarioConfig(p_ue=(0.0, 30.0), clock_bias=0.0)
    p = derive_channel_params(cfg)
    assert p.delay_bp[0] == pytest.approx(30.0 / SPEED_OF_LIGHT, rel=1e-14)
    assert p.aod[0] == pytest.approx(0.0, abs=1e-15)


def test_monostatic_ue_gain_magnitude():
    d = math.hypot(-5.0, 20.0)
    lam = SPEED_OF_LIGHT / 28e9
    lin = derive_channel_params(ScenarioConfig(rcs_gain="linear"))
    assert abs(lin.gain_ms[0]) == pytest.approx(10 * lam / ((4 * np.pi) ** 1.5 * d ** 2), rel=1e-12)
    sq = derive_channel_params(ScenarioConfig())
    assert abs(sq.gain_ms[0]) == pytest.approx(math.sqrt(10) * lam / ((4 * np.pi) ** 1.5 * d ** 2), rel=1e-12)


def test_los_gain_free_space():
    cfg = ScenarioConfig()
    p = derive_channel_params(cfg)
    d = math.hypot(-5.0, 20.0)
    assert abs(p.gain_bp[0]) == pytest.approx(cfg.wavelength / (4 * np.pi * d), rel=1e-12)


def test_geometry_errors():
    with pytest.raises(DegenerateGeometryError):
        derive_channel_params(ScenarioConfig(p_ue=(5.0, 15.0)))
    with pytest.raises(ConfigError):
        ScenarioConfig(n_targets=0, p_targets=(), rcs_bp=(), rcs_ms=(10.0,))
    with pytest.raises(ConfigError):
        ScenarioConfig(n_slots=4)


def test_orientation_shifts_aoa():
    base = derive_channel_params(ScenarioConfig(ue_orientation=0.0))
    for phi in (0.3, 2.0, -1.1):
        p = derive_channel_params(ScenarioConfig(ue_orientation=phi))
        np.testing.assert_allclose(wrap_angle(p.aoa - base.aoa + phi), 0.0, atol=1e-12)
    assert np.all(base.aoa > -np.pi) and np.all(base.aoa <= np.pi)


def test_radial_motion_reduces_gains():
    cfg = ScenarioConfig()
    p = derive_channel_params(cfg)
    far = cfg.replace(p_targets=((-20.0, 30.0),) + cfg.p_targets[1:])
    q = derive_channel_params(far)
    assert abs(q.gain_bp[1]) < abs(p.gain_bp[1])
    assert abs(q.gain_ms[1]) < abs(p.gain_ms[1])


def test_phases_stable_when_targets_added():
    cfg = ScenarioConfig()
    p3 = derive_channel_params(cfg)
    p1 = derive_channel_params(cfg.with_targets(1))
    np.testing.assert_array_equal(p1.phase_bp, p3.phase_bp[:2])
    np.testing.assert_array_equal(p1.phase_ms, p3.phase_ms[:2])
    again = derive_channel_params(ScenarioConfig())
    np.testing.assert_array_equal(channel_matrix_bp(p3, cfg, 7), channel_matrix_bp(again, cfg, 7))


def test_zero_gains_give_zero_channels(default_cfg, default_params):
    p = default_params.with_gains(np.zeros(4), np.zeros(4))
    assert not np.any(channel_matrix_bp(p, default_cfg, 3))
    assert not np.any(channel_matrix_ms(p, default_cfg, 3))


def test_channel_rank(default_cfg, default_params):
    H = channel_matrix_bp(default_params, default_cfg, 11)
    assert np.linalg.matrix_rank(H, tol=1e-12 * np.linalg.norm(H)) <= default_cfg.n_targets + 1


def test_single_path_phase_wrap():
    # choose delta_f and the LOS delay so that 2 pi m df tau is a multiple of 2 pi at m = 1
    cfg0 = ScenarioConfig()
    tau = derive_channel_params(cfg0).delay_bp[0]
    M = 1024
    cfg = cfg0.replace(bandwidth=M * 3.0 / tau, n_subcarriers=M)
    p = derive_channel_params(cfg)
    gains = np.zeros(4, dtype=complex)
    gains[0] = p.gain_bp[0]
    p = p.with_gains(gain_bp=gains)
    H = channel_matrix_bp(p, cfg, 1)
    a_u = steering_vector(p.aoa[0], cfg.n_rx_ue, cfg.array_reference)
    a_b = steering_vector(p.aod[0], cfg.n_tx_bs, cfg.array_reference)
    np.testing.assert_allclose(H, p.gain_bp[0] * np.outer(a_u, a_b.conj()), rtol=1e-9, atol=1e-20)


def test_single_path_monostatic_norm(default_cfg, default_params):
    g = np.zeros(4, dtype=complex)
    g[0] = default_params.gain_ms[0]
    H = channel_matrix_ms(default_params.with_gains(gain_ms=g), default_cfg, 5)
    assert np.linalg.norm(H) == pytest.approx(abs(g[0]) * default_cfg.n_tx_bs, rel=1e-12)
    # a a^H is Hermitian, so the single-path channel is a complex multiple of a Hermitian matrix
    A = H / H[0, 0]
    np.testing.assert_allclose(A, A.conj().T, atol=1e-12)


def test_monostatic_term_by_term(default_cfg, default_params):
    cfg, p = default_cfg, default_params
    m = 17
    ref = np.zeros((16, 16), dtype=complex)
    for k in range(4):
        a = steering_vector(p.aod[k], 16, cfg.array_reference)
        ref += p.gain_ms[k] * np.exp(-2j * np.pi * m * cfg.subcarrier_spacing * p.delay_ms[k]) * np.outer(a, a.conj())
    np.testing.assert_allclose(channel_matrix_ms(p, cfg, m), ref, rtol=1e-12, atol=1e-12 * np.abs(ref).max())


def test_subcarrier_range(default_cfg, default_params):
    with pytest.raises(ValueError):
        channel_matrix_bp(default_params, default_cfg, 0)
    with pytest.raises(ValueError):
        channel_matrix_ms(default_params, default_cfg, 1025)


def test_load_config_units():
    cfg = load_config('n_targets = 1\np_targets = [[5.0, 15.0]]\nrcs_bp = [100.0]\nrcs_ms = [10.0, 100.0]\n'
                      'power_budget = 0.0\n')
    assert cfg.power_budget == pytest.approx(1e-3)
    assert cfg.n_targets == 1


def test_load_config_rejects_unknown_key():
    with pytest.raises(ConfigError):
        load_config("antennas = 4\n")
