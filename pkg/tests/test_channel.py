import math

import numpy as np
import pytest

from thzmimo import desk_profile, generate_channel
from thzmimo.channel import (MATERIALS, array_response, characteristic_impedance, grid_sines, load_materials,
                             path_gain_magnitude, pulse_shaping_coeff, reflection_coefficient, rrc_pulse,
                             sample_angles_gmm, snap_to_grid, subcarrier_frequencies, subcarrier_frequency)
from thzmimo.config import GmmAngleParams, PulseShape, SystemConfig

PLASTER_S1 = next(m for m in MATERIALS if m.name == "Plaster s1")


def test_subcarrier_frequencies_edges():
    cfg = SystemConfig()
    assert subcarrier_frequency(1, cfg) == pytest.approx(647519531250.0, rel=1e-15)
    assert subcarrier_frequency(128, cfg) == pytest.approx(652.48046875e9, rel=1e-15)
    f = subcarrier_frequencies(cfg)
    assert f.mean() == pytest.approx(cfg.carrier_freq)
    assert np.allclose(np.diff(f), cfg.bandwidth / cfg.num_subcarriers)
    with pytest.raises(IndexError):
        subcarrier_frequency(0, cfg)


def test_array_response_unit_norm_and_squint():
    a = array_response(0.4, 0.66e12, 0.65e12, 16)
    assert np.linalg.norm(a) == pytest.approx(1.0)
    # the squinted response at f_k equals the carrier response at rho * psi
    rho = 0.66 / 0.65
    assert np.allclose(a, array_response(0.4 * rho, 0.65e12, 0.65e12, 16))
    assert array_response([0.1, 0.2], 1.0, 1.0, 8).shape == (8, 2)
    with pytest.raises(ValueError):
        array_response(1.2, 1.0, 1.0, 4)


def test_grid_snap_wraps_plus_one():
    g = grid_sines(8)
    assert g[0] == -1.0 and g[-1] == 0.75
    assert snap_to_grid(1.0, 8) == 0
    assert snap_to_grid(0.26, 8) == 5


def test_reflection_coefficient_oracle():
    # independent high-precision evaluation of the rough-surface Fresnel term
    gamma, tir = reflection_coefficient(0.65e12, math.pi / 4, PLASTER_S1)
    assert not tir
    assert gamma.real == pytest.approx(-0.284135424450741, rel=1e-8)
    assert gamma.imag == pytest.approx(0.00524551475982817, rel=1e-6)


def test_normal_incidence_smooth_lossless_limit():
    from thzmimo.channel import Material
    m = Material("glass", 0.0, 0.0, 1.5)
    gamma, _ = reflection_coefficient(1e12, 0.0, m)
    # lossless dielectric at normal incidence: (1 - n) / (1 + n) with the free-space reference impedance
    z = characteristic_impedance(1e12, m)
    assert gamma == pytest.approx((z - 377.0) / (z + 377.0))
    with pytest.raises(ValueError):
        reflection_coefficient(1e12, math.pi / 2, m)


def test_path_gain_free_space_value():
    # |alpha|^2 at 0.65 THz over 15 m with no absorption
    p = path_gain_magnitude(0.65e12, 15.0, 0.0) ** 2
    assert p == pytest.approx(5.98704395229e-12, rel=1e-10)
    atten = path_gain_magnitude(0.65e12, 15.0, 0.015) / path_gain_magnitude(0.65e12, 15.0, 0.0)
    assert atten**2 == pytest.approx(0.7985162188, rel=1e-9)
    with pytest.raises(ValueError):
        path_gain_magnitude(1e12, 0.0, 0.0)


def test_rrc_pulse_special_points_continuous():
    b = 0.8
    edge = 1 / (4 * b)
    near = rrc_pulse([edge - 1e-6, edge, edge + 1e-6], b)
    assert abs(near[0] - near[1]) < 1e-4 and abs(near[2] - near[1]) < 1e-4
    assert rrc_pulse(0.0, b)[0] == pytest.approx(1 - b + 4 * b / math.pi)
    assert rrc_pulse(1e-7, b)[0] == pytest.approx(1 - b + 4 * b / math.pi, rel=1e-8)


def test_rect_pulse_coefficient_is_pure_phase():
    psf = PulseShape(kind="rect")
    c = pulse_shaping_coeff(2.3e-10, np.arange(16), 16, 2e-10, psf)
    assert np.allclose(np.abs(c), 1.0)
    assert np.allclose(c, np.exp(-2j * np.pi * np.arange(16) * 2 / 16))


def test_gmm_sampler_in_range_and_deterministic():
    p = GmmAngleParams(p1=0.724, p2=2.198, nu1=0.276, nu2=7.297)
    a = sample_angles_gmm(p, np.random.default_rng(3), size=500)
    b = sample_angles_gmm(p, np.random.default_rng(3), size=500)
    assert np.all(np.abs(a) <= 1) and np.array_equal(a, b)
    with pytest.raises(ValueError):
        sample_angles_gmm(GmmAngleParams(1, 0, 0.0, 0.0, r1=2.0), np.random.default_rng(0))


def test_channel_normalization_and_shapes():
    cfg = desk_profile()
    ch = generate_channel(cfg, np.random.default_rng(0))
    assert ch.H.shape == (2, 16, 16, 2)
    for u in range(2):
        assert np.sum(np.abs(ch.H[u]) ** 2) == pytest.approx(16 * 16 * 2)
    assert ch.stacked_all().shape == (16, 16, 4)
    assert np.allclose(np.fft.fft(ch.taps(), axis=1), ch.H)


def test_on_grid_beamspace_reproduces_channel():
    from thzmimo.estimation import reconstruct_channel
    from thzmimo.frontend import dictionaries
    cfg = desk_profile()
    ch = generate_channel(cfg, np.random.default_rng(5))
    A_B, A_T = dictionaries(cfg)
    H = reconstruct_channel(ch.beamspace, A_B, A_T, cfg.num_users)
    assert np.allclose(H, ch.H, atol=1e-10)
    assert np.count_nonzero(np.any(ch.beamspace != 0, axis=1)) <= cfg.num_users * 4


def test_materials_file_round_trip(tmp_path):
    p = tmp_path / "mat.txt"
    p.write_text("# name sigma xi n\nPlaster s1 0.05 10 2.0\n\nGlass 0 0 1.5\n")
    mats = load_materials(p)
    assert [m.name for m in mats] == ["Plaster s1", "Glass"]
    assert mats[0] == PLASTER_S1
