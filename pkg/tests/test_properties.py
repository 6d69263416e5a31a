import math

import numpy as np
from hypothesis import given, settings, strategies as st

from thzmimo.beamforming import dirichlet_kernel, max_delay_bound, ttd_delays
from thzmimo.channel import array_response, snap_to_grid
from thzmimo.estimation import m_step, posterior
from thzmimo.experiments import parse_snr_range
from thzmimo.frontend import circular_convolve, midrise_quantize

sines = st.floats(-1.0, 1.0, allow_nan=False)
fast = settings(max_examples=60, deadline=None)


@fast
@given(sines, st.integers(1, 128), st.floats(0.9, 1.1))
def test_array_response_unit_norm(psi, n, rho):
    assert abs(np.linalg.norm(array_response(psi, rho, 1.0, n)) - 1) < 1e-12


@fast
@given(st.integers(1, 64), st.floats(-8, 8, allow_nan=False))
def test_dirichlet_bounded_and_periodic(N, x):
    v = dirichlet_kernel(N, x)
    assert abs(v) <= N + 1e-9
    # period 4 in general, 2 up to sign
    assert abs(dirichlet_kernel(N, x + 4) - v) <= 1e-6 * N


@fast
@given(sines, st.sampled_from([(64, 2), (64, 4), (16, 2), (8, 8)]))
def test_delays_in_range(psi, ns):
    N, S = ns
    d = ttd_delays(psi, N // S, S, 1.0)
    assert np.all(d >= -1e-15) and np.all(d <= max_delay_bound(N, 1.0) + 1e-12)


@fast
@given(sines, st.sampled_from([4, 8, 32, 128]))
def test_snap_is_nearest_bin(psi, G):
    b = snap_to_grid(psi, G)
    grid = 2.0 * np.arange(G) / G - 1.0
    dist = np.abs(((grid - psi + 1) % 2) - 1)  # circular distance on [-1, 1)
    assert dist[b] <= dist.min() + 1e-12


@fast
@given(st.integers(2, 32), st.integers(1, 6), st.integers(0, 2**31 - 1))
def test_convolution_theorem(K, D, seed):
    D = min(D, K)
    rng = np.random.default_rng(seed)
    taps = np.zeros((K, 2, 3), dtype=complex)
    taps[:D] = rng.standard_normal((D, 2, 3)) + 1j * rng.standard_normal((D, 2, 3))
    x = rng.standard_normal((K, 3)) + 1j * rng.standard_normal((K, 3))
    lhs = np.fft.fft(circular_convolve(taps, x), axis=0)
    rhs = np.einsum("kab,kb->ka", np.fft.fft(taps, axis=0), np.fft.fft(x, axis=0))
    assert np.linalg.norm(lhs - rhs) <= 1e-10 * np.linalg.norm(rhs)


@fast
@given(st.integers(1, 6), st.integers(0, 2**31 - 1))
def test_midrise_levels(bits, seed):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(64) + 1j * rng.standard_normal(64)
    y = midrise_quantize(x, bits, 2.0)
    assert len(np.unique(y.real)) <= 2**bits and len(np.unique(y.imag)) <= 2**bits
    # idempotent: quantizing a reconstruction level returns it
    assert np.allclose(midrise_quantize(y, bits, 2.0), y)


@fast
@given(st.integers(0, 2**31 - 1))
def test_posterior_variance_shrinks_prior(seed):
    rng = np.random.default_rng(seed)
    K, n, G = 2, 3, 5
    omega = rng.standard_normal((K, n, G)) + 1j * rng.standard_normal((K, n, G))
    Y = rng.standard_normal((n, K)) + 1j * rng.standard_normal((n, K))
    gamma = rng.uniform(0.1, 3.0, G)
    _, var, _ = posterior(omega, np.eye(n), Y, gamma)
    assert np.all(var <= gamma + 1e-12) and np.all(var > 0)
    assert np.all(m_step(var, np.zeros((G, K))) > 0)


@fast
@given(st.integers(-20, 20), st.floats(0.5, 5), st.integers(0, 10))
def test_snr_range_inclusive(lo, step, count):
    hi = lo + step * count
    grid = parse_snr_range(f"{lo}:{step}:{hi}")
    assert len(grid) == count + 1 and math.isclose(grid[-1], hi, abs_tol=1e-9)
