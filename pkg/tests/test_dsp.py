import time

import numpy as np
import pytest
from scipy import signal

from incdetect.dsp import (
    CANONICAL_BANDS,
    BandSpec,
    analytic_signal,
    car_filter,
    design_bandpass,
    hilbert_envelope,
    notch_filter,
    zerolag_filter,
)

SR = 512


def steady_state(design, f, seconds=20.0):
    """Gain and lag (samples) of a long sinusoid, fitted on the middle half."""
    t = np.arange(int(seconds * SR)) / SR
    y = zerolag_filter(design, np.sin(2 * np.pi * f * t))
    n = len(t)
    sl = slice(n // 4, 3 * n // 4)
    basis = np.column_stack([np.sin(2 * np.pi * f * t[sl]), np.cos(2 * np.pi * f * t[sl])])
    (a, b), *_ = np.linalg.lstsq(basis, y[sl], rcond=None)
    phase = np.arctan2(-b, a)
    return float(np.hypot(a, b)), float(phase / (2 * np.pi * f) * SR)


def contract_violations(band):
    d = design_bandpass(band, SR)
    bad = []
    centre = np.sqrt(band.low * band.high)
    g, lag = steady_state(d, centre)
    if not 0.95 <= g <= 1.05:
        bad.append(f"centre gain {g:.3f}")
    if abs(lag) > 1:
        bad.append(f"centre lag {lag:.2f}")
    for edge in (band.low, band.high):
        ge, lag = steady_state(d, edge)
        if not 0.6 <= ge / g <= 0.8:
            bad.append(f"edge {edge} gain {ge / g:.3f}")
        if abs(lag) > 1:
            bad.append(f"edge {edge} lag {lag:.2f}")
    bw = band.high - band.low
    stops = [band.high + 1.5 * bw]
    if band.low - 1.5 * bw > 0.5:
        stops.append(band.low - 1.5 * bw)
    for f in stops:
        gs, _ = steady_state(d, f, seconds=40.0)
        if gs > 0.05:
            bad.append(f"stopband {f} gain {gs:.4f}")
    return bad


@pytest.mark.parametrize("band", CANONICAL_BANDS, ids=lambda b: b.name)
def test_filter_contract(band):
    assert contract_violations(band) == []


def test_filter_contract_runtime():
    t0 = time.perf_counter()
    for band in CANONICAL_BANDS:
        contract_violations(band)
    assert time.perf_counter() - t0 < 10.0


def test_alpha_band_examples():
    d = design_bandpass(BandSpec(8, 13), SR)
    assert steady_state(d, 10.5)[0] >= 0.95
    assert steady_state(d, 2.0, 40.0)[0] <= 0.05
    assert steady_state(d, 40.0)[0] <= 0.05


@pytest.mark.parametrize("band", CANONICAL_BANDS, ids=lambda b: b.name)
def test_designs_stable_and_match_response(band):
    d = design_bandpass(band, SR)
    assert d.is_stable()
    assert np.all(np.abs(d.poles) < 1)
    assert d.order == 4
    # frequency-response oracle at the edges
    edge = d.zerolag_response([band.low, band.high])
    assert np.allclose(edge, 2 ** -0.5, atol=1e-6)


def test_nyquist_rejected():
    with pytest.raises(ValueError):
        design_bandpass(BandSpec(100, 256), SR)
    with pytest.raises(ValueError):
        BandSpec(10, 5)


def test_window_sinusoid_zero_lag():
    d = design_bandpass(BandSpec(8, 13), SR)
    t = np.arange(768) / SR
    x = np.sin(2 * np.pi * 10.5 * t + 0.3)
    y = zerolag_filter(d, x)
    mid = slice(192, 576)
    ratio = np.max(np.abs(y[mid])) / np.max(np.abs(x[mid]))
    assert 0.95 <= ratio <= 1.05
    xc = signal.correlate(y[mid], x[mid], mode="full")
    lag = int(np.argmax(xc)) - (len(x[mid]) - 1)
    assert lag == 0


def test_zero_and_dc():
    d = design_bandpass(BandSpec(8, 13), SR)
    assert np.all(zerolag_filter(d, np.zeros(768)) == 0)
    y = zerolag_filter(d, np.full(768, 5.0))
    assert np.max(np.abs(y[192:576])) < 1e-3 * 5.0


def test_filter_linearity(rng):
    d = design_bandpass(BandSpec(14, 22), SR)
    x, z = rng.standard_normal((2, 768))
    lhs = zerolag_filter(d, 2.5 * x - 0.7 * z)
    rhs = 2.5 * zerolag_filter(d, x) - 0.7 * zerolag_filter(d, z)
    assert np.max(np.abs(lhs - rhs)) <= 1e-6 * np.max(np.abs(rhs))


def test_filter_length_and_short_input(rng):
    d = design_bandpass(BandSpec(8, 30), SR)
    assert zerolag_filter(d, rng.standard_normal(768)).shape == (768,)
    with pytest.raises(ValueError):
        zerolag_filter(d, np.ones(d.padlen))


def test_filter_batches_match_rows(rng):
    d = design_bandpass(BandSpec(22, 30), SR)
    x = rng.standard_normal((3, 4, 768))
    y = zerolag_filter(d, x)
    assert np.array_equal(y[1, 2], zerolag_filter(d, x[1, 2]))


def test_car_examples(rng):
    assert np.array_equal(car_filter([[5, 5, 5, 5]]), [[0, 0, 0, 0]])
    assert np.allclose(car_filter([[1, 2, 3]]), [[-1, 0, 1]])
    x = rng.standard_normal((500, 16)) * 50
    c = car_filter(x)
    assert np.max(np.abs(c.sum(axis=1))) < 1e-9
    assert np.max(np.abs(car_filter(c) - c)) < 1e-9
    with pytest.raises(ValueError):
        car_filter(np.ones((10, 1)))


def test_hilbert_examples():
    t = np.arange(768) / SR
    env = hilbert_envelope(3 * np.sin(2 * np.pi * 10 * t))
    assert np.all((env[192:576] >= 2.85) & (env[192:576] <= 3.15))
    assert np.all(hilbert_envelope(np.zeros(768)) == 0)
    with pytest.raises(ValueError):
        hilbert_envelope(np.ones(7))


def test_hilbert_random_tones():
    rng = np.random.default_rng(2024)
    t = np.arange(768) / SR
    for _ in range(20):
        band = CANONICAL_BANDS[rng.integers(len(CANONICAL_BANDS))]
        f = rng.uniform(band.low, band.high)
        a = float(np.exp(rng.uniform(np.log(0.1), np.log(100))))
        env = hilbert_envelope(a * np.sin(2 * np.pi * f * t + rng.uniform(0, 2 * np.pi)))
        interior = env[192:576]
        assert np.max(np.abs(interior / a - 1)) <= 0.05, (f, a)


def test_hilbert_sign_symmetry_and_analytic(rng):
    x = rng.standard_normal((4, 768))
    env = hilbert_envelope(x)
    assert np.all(env >= 0)
    assert np.array_equal(env, hilbert_envelope(-x))
    # the envelope is the modulus of the analytic signal, and its real part is x
    z = analytic_signal(x)
    assert np.allclose(z.real, x, atol=1e-12)
    assert np.allclose(np.abs(z), env, atol=1e-12)
    # scipy's analytic signal as an independent oracle
    assert np.allclose(env, np.abs(signal.hilbert(x, axis=-1)), atol=1e-10)
    odd = rng.standard_normal(767)
    assert np.allclose(hilbert_envelope(odd), np.abs(signal.hilbert(odd)), atol=1e-10)


def test_notch_attenuates_mains():
    t = np.arange(20 * SR) / SR
    x = np.column_stack([np.sin(2 * np.pi * 50 * t), np.sin(2 * np.pi * 10 * t)])
    y = notch_filter(x, SR)
    mid = slice(len(t) // 4, 3 * len(t) // 4)
    assert np.max(np.abs(y[mid, 0])) < 0.01
    assert np.max(np.abs(y[mid, 1])) > 0.99
