import csv
import math

import numpy as np
import pytest

from conftest import observe
from thzmimo import desk_profile
from thzmimo.beamforming import (EffectiveLink, ber_simulation, build_flat_combiner, build_ttd_hybrid_combiner,
                                 dirichlet_kernel, effective_link, gain_profile, hybrid_link, max_delay_bound,
                                 min_td_elements, normalized_array_gain, optimal_digital_baseline,
                                 psk8_constellation, spectral_efficiency, ttd_column, ttd_delays,
                                 write_gain_profile_csv)
from thzmimo.channel import array_response, subcarrier_frequencies
from thzmimo.config import ConfigError, SystemConfig
from thzmimo.estimation import extract_dominant_angles

TC = 1 / 0.65e12


def test_dirichlet_kernel_values_and_limits():
    assert dirichlet_kernel(64, 0.1) / 64 == pytest.approx(-0.0587092145244846, rel=1e-12)
    assert dirichlet_kernel(8, 0.0) == 8
    assert dirichlet_kernel(8, 2.0) == -8  # N cos(pi (N - 1)) for even N
    assert dirichlet_kernel(7, 2.0) == 7
    x = np.array([1e-9, 2 + 1e-9])
    assert np.allclose(dirichlet_kernel(8, x), [8, -8], rtol=1e-6)


def test_delay_schedule_example():
    d = ttd_delays(1.0, 32, 2, TC)
    assert d == pytest.approx([0.0, 2.46153846153846e-11], rel=1e-12)
    assert np.all(ttd_delays(0.0, 32, 2, TC) == 0)
    assert max_delay_bound(64, TC) == pytest.approx(4.92307692307692e-11, rel=1e-12)


@pytest.mark.parametrize("psi", [-1.0, -0.37, 0.0, 0.5, 1.0])
def test_delays_nonnegative_and_bounded(psi):
    d = ttd_delays(psi, 16, 4, TC)
    assert np.all(d >= 0) and np.all(d <= max_delay_bound(64, TC) + 1e-24)
    # consecutive subarrays differ by P psi / 2 carrier periods
    assert np.allclose(np.diff(d), 16 * psi / 2 * TC)


def test_delay_quantization_knob():
    d = ttd_delays(0.3, 32, 2, TC, resolution=1e-12)
    assert d[1] == pytest.approx(round(0.3 * 16 * TC / 1e-12) * 1e-12)
    cfg = SystemConfig(n_bs=64, tds_per_chain=2)
    coarse = cfg.replace(delay_resolution=2e-12)
    assert not np.allclose(ttd_column(0.3, 0.6525e12, cfg), ttd_column(0.3, 0.6525e12, coarse))
    with pytest.raises(ConfigError):
        cfg.replace(delay_resolution=-1.0)


def test_minimum_delay_elements():
    rho_min = 0.996183894231
    assert 64 * (1 - rho_min) == pytest.approx(0.2442307692, rel=1e-9)
    assert min_td_elements(64, rho_min) == 1
    assert min_td_elements(64, 0.9) == 7


def test_single_delay_element_is_phased_array():
    cfg = SystemConfig(n_bs=64, tds_per_chain=2)
    for f in (0.6475e12, 0.6525e12):
        w = ttd_column(0.4, f, cfg, S=1)
        assert np.allclose(w, array_response(0.4, cfg.carrier_freq, cfg.carrier_freq, 64))
    with pytest.raises(ConfigError):
        ttd_column(0.1, 0.65e12, cfg, S=3)


def test_factorized_gain_equals_direct_gain():
    cfg = SystemConfig(n_bs=64, tds_per_chain=2)
    N, P = 64, 32
    fk = subcarrier_frequencies(cfg)
    rho = fk / cfg.carrier_freq
    for target, path in ((0.7, 0.63), (-0.6, -0.5), (0.2, 0.2)):
        direct = np.array([abs(np.vdot(ttd_column(target, f, cfg), array_response(path, f, cfg.carrier_freq, N)))
                           for f in fk])
        fact = normalized_array_gain(target, path, fk, cfg.carrier_freq, N, S=2, P=P, v_k=(1 - rho) * P * target)
        assert np.max(np.abs(direct - fact)) < 1e-9


def test_ttd_gain_flatter_than_phased_array():
    cfg = SystemConfig(n_bs=64, tds_per_chain=2)
    sines = [-0.9, 0.7, 1.0]
    ttd = gain_profile(sines, cfg)
    flat = gain_profile(sines, cfg, S=1)
    assert ttd.shape == (3, 128)
    assert np.all(ttd.min(axis=1) >= flat.min(axis=1))
    assert np.all(ttd <= 1 + 1e-12)


def test_gain_profile_csv(tmp_path):
    cfg = desk_profile()
    prof = gain_profile([0.5], cfg)
    p = tmp_path / "gain.csv"
    write_gain_profile_csv(p, [0.5], prof)
    rows = list(csv.reader(open(p)))
    assert rows[0] == ["angle_sine", "subcarrier_index", "gain"]
    assert len(rows) == 1 + cfg.num_subcarriers
    assert float(rows[3][2]) == pytest.approx(prof[0, 2], rel=1e-8)


def test_hybrid_combiner_structure():
    cfg = desk_profile()
    ch, obs = observe(cfg, seed=0)
    angles = extract_dominant_angles(ch.beamspace, cfg)
    bf = build_ttd_hybrid_combiner(angles, ch.H, cfg)
    K = cfg.num_subcarriers
    assert bf.W_rf.shape == (K, cfg.n_bs, cfg.n_rf_bs)
    assert bf.W_bb.shape == (K, cfg.n_rf_bs, cfg.n_s)
    assert bf.delays.shape == (cfg.n_rf_bs, cfg.tds_per_chain)
    norms = np.linalg.norm(bf.W_rf, axis=1)
    assert np.allclose(norms, norms[0])
    assert np.allclose(np.abs(bf.W_rf), 1 / math.sqrt(cfg.n_bs))
    for u in range(cfg.num_users):
        assert np.linalg.norm(bf.F[u]) == pytest.approx(math.sqrt(cfg.n_s_u))
    flat = build_flat_combiner(angles, ch.H, cfg)
    assert np.allclose(flat.W_rf, flat.W_rf[0])  # frequency independent
    assert np.all(flat.delays == 0)


def test_unquantized_hybrid_link_matches_full_combiner():
    cfg = desk_profile(adc_bits=math.inf)
    ch, _ = observe(cfg, seed=1)
    bf = build_ttd_hybrid_combiner(extract_dominant_angles(ch.beamspace, cfg), ch.H, cfg)
    a = hybrid_link(ch, bf, cfg, 0.1)
    b = effective_link(ch, bf.combiner(), bf.F, cfg, 0.1)
    assert np.allclose(a.H_eff, b.H_eff) and np.allclose(a.noise_cov, b.noise_cov)


def test_spectral_efficiency_scalar_and_errors():
    assert spectral_efficiency(np.ones((1, 1)), np.eye(1), 1) == pytest.approx(1.0)
    assert spectral_efficiency(np.zeros((3, 2, 2)), np.broadcast_to(np.eye(2), (3, 2, 2)), 2) == 0
    with pytest.raises(np.linalg.LinAlgError):
        spectral_efficiency(np.ones((1, 2, 1)), np.zeros((1, 2, 2)), 1)


def test_optimal_digital_baseline():
    H = np.random.default_rng(0).standard_normal((8, 4)) + 0j
    F, W = optimal_digital_baseline(H, 0.1, 2)
    assert F.shape == (4, 2) and W.shape == (8, 2)
    assert np.allclose(F.conj().T @ F, np.eye(2))
    with pytest.raises(ValueError):
        optimal_digital_baseline(H, 0.1, 5)


def test_gray_labels_adjacent_differ_by_one_bit():
    pts, bits = psk8_constellation()
    assert np.allclose(np.abs(pts), 1)
    for i in range(8):
        assert np.sum(bits[i] != bits[(i + 1) % 8]) == 1


def test_ber_limits():
    K, n, ns = 4, 3, 2
    H = np.broadcast_to(np.eye(n, ns), (K, n, ns)).astype(complex)
    quiet = EffectiveLink(H, np.broadcast_to(1e-8 * np.eye(n), (K, n, n)).copy(), ns)
    assert ber_simulation(quiet, 200, np.random.default_rng(0)) == 0
    loud = EffectiveLink(H, np.broadcast_to(1e4 * np.eye(n), (K, n, n)).copy(), ns)
    assert ber_simulation(loud, 2000, np.random.default_rng(0)) == pytest.approx(0.5, abs=0.03)
