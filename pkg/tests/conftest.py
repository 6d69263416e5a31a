import math

import numpy as np
import pytest

from thzmimo import desk_profile, generate_channel, make_pilot_frame, quantization_params
from thzmimo.config import SystemConfig
from thzmimo.frontend import simulate_received_pilots


def tiny_config(**overrides) -> SystemConfig:
    """Single user, 4-antenna BS, 16 beamspace groups."""
    base = dict(n_bs=4, n_u=1, num_users=1, n_rf_bs=1, n_rf_u=1, n_s_u=1,
                num_subcarriers=4, num_pilot_vectors=2, num_taps=3, num_blocks=4,
                grid_bs=8, grid_tu=2, tds_per_chain=2, on_grid=True, n_nlos=1)
    base.update(overrides)
    return SystemConfig(**base)


def observe(cfg, seed=0, bits=None):
    rng = np.random.default_rng(seed)
    ch = generate_channel(cfg, rng)
    frame = make_pilot_frame(cfg, rng)
    b = cfg.adc_bits if bits is None else bits
    qp = None if math.isinf(b) else quantization_params(b)
    return ch, simulate_received_pilots(ch, frame, cfg, qp, rng)


@pytest.fixture
def desk():
    return desk_profile()


@pytest.fixture
def tiny():
    return tiny_config()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# criterion number -> (passed, detail); filled by the acceptance suite
ACCEPTANCE: dict = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
