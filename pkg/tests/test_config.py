import math

import pytest

from thzmimo import ConfigError, PulseShape, SystemConfig, desk_profile, paper_profile
from thzmimo.config import GmmAngleParams


def test_full_scale_defaults():
    cfg = paper_profile()
    assert (cfg.n_bs, cfg.n_u, cfg.num_users) == (64, 4, 3)
    assert (cfg.num_subcarriers, cfg.num_pilot_vectors, cfg.num_taps) == (128, 123, 6)
    assert cfg.carrier_freq == 0.65e12 and cfg.bandwidth == 5e9
    assert cfg.num_groups == 128 * 24
    assert cfg.adc_bits == 3


def test_rf_chain_remainder_goes_to_lowest_users():
    assert paper_profile().rx_chains_per_user == (3, 3, 2)
    assert desk_profile().rx_chains_per_user == (2, 2)
    assert sum(paper_profile().rx_chains_per_user) == 8


def test_zero_padding_relation_message_names_fields():
    with pytest.raises(ConfigError, match="num_pilot_vectors"):
        desk_profile(num_pilot_vectors=12)


@pytest.mark.parametrize("changes", [
    dict(n_rf_bs=16),               # not below n_bs
    dict(n_rf_u=3),                 # above n_u
    dict(grid_bs=16),               # under-resolved grid
    dict(grid_tu=3),
    dict(adc_bits=2.5),
    dict(adc_bits=0),
    dict(tds_per_chain=3),
    dict(n_los=0, n_nlos=0),
    dict(noise_power=-1.0),
    dict(em_max_iter=0),
])
def test_structural_violations_rejected(changes):
    with pytest.raises(ConfigError):
        desk_profile(**changes)


def test_infinite_resolution_accepted():
    cfg = desk_profile(adc_bits=math.inf)
    assert not cfg.quantized
    assert desk_profile().quantized


def test_derived_quantities():
    cfg = desk_profile()
    assert cfg.n_t == 4 and cfg.n_s == 2 and cfg.grid_t == 8
    assert cfg.subarray_size == 8
    assert cfg.carrier_period == pytest.approx(1 / 0.65e12)
    assert cfg.replace(n_los=0).n_los == 0


def test_pulse_and_mixture_validation():
    with pytest.raises(ConfigError):
        PulseShape(kind="gauss")
    with pytest.raises(ConfigError):
        PulseShape(roll_off=1.5)
    with pytest.raises(ConfigError):
        GmmAngleParams(p1=0, p2=0, nu1=1, nu2=1)
    w = GmmAngleParams(p1=1, p2=3, nu1=1, nu2=1).weights()
    assert w == pytest.approx((0.25, 0.75))


def test_config_is_immutable():
    cfg = SystemConfig()
    with pytest.raises(Exception):
        cfg.n_bs = 8
