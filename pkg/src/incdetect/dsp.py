"""Spatial and spectral preprocessing kernels.

Common average reference, fourth-order Butterworth band-pass applied
forward-backward (zero lag), and the Hilbert amplitude envelope.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import fft as sp_fft
from scipy import signal

BUTTER_ORDER = 4


@dataclass(frozen=True)
class BandSpec:
    low: float
    high: float
    name: str = ""

    def __post_init__(self):
        if not 0 < self.low < self.high:
            raise ValueError(f"band needs 0 < low < high, got {self.low}-{self.high}")
        if not self.name:
            object.__setattr__(self, "name", f"{self.low:g}-{self.high:g}")

    def check(self, sample_rate: float) -> None:
        if self.high >= sample_rate / 2:
            raise ValueError(
                f"band edge {self.high} Hz is at or above Nyquist ({sample_rate / 2} Hz)"
            )


CANONICAL_BANDS = (
    BandSpec(8, 13, "8-13"),
    BandSpec(14, 22, "14-22"),
    BandSpec(22, 30, "22-30"),
    BandSpec(30, 45, "30-45"),
    BandSpec(2, 45, "2-45"),
    BandSpec(8, 30, "8-30"),
)


@dataclass(frozen=True, eq=False)
class FilterDesign:
    """Discrete band-pass as second-order sections.

    ``b``/``a`` expose the equivalent transfer-function polynomials.
    ``zi`` is the steady-state initial condition per unit step, used to
    start each pass of the zero-lag filter.
    """

    band: BandSpec
    sample_rate: float
    sos: np.ndarray
    zi: np.ndarray
    order: int = BUTTER_ORDER

    @property
    def b(self) -> np.ndarray:
        return signal.sos2tf(self.sos)[0]

    @property
    def a(self) -> np.ndarray:
        return signal.sos2tf(self.sos)[1]

    @property
    def poles(self) -> np.ndarray:
        return signal.sos2zpk(self.sos)[1]

    @property
    def padlen(self) -> int:
        # same default as scipy's filtfilt for the equivalent (b, a) pair
        return 3 * (2 * self.sos.shape[0] + 1)

    def is_stable(self) -> bool:
        return bool(np.all(np.abs(self.poles) < 1.0))

    def zerolag_response(self, freqs) -> np.ndarray:
        """Magnitude of the forward-backward filter at ``freqs`` (Hz)."""
        _, h = signal.sosfreqz(self.sos, worN=np.atleast_1d(freqs), fs=self.sample_rate)
        return np.abs(h) ** 2


def car_filter(samples) -> np.ndarray:
    """Subtract the instantaneous cross-channel mean from every channel.

    ``samples`` is [n_samples x n_channels].
    """
    x = np.asarray(samples, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] < 2:
        raise ValueError("CAR needs a 2-D matrix with at least two channels")
    return x - x.mean(axis=1, keepdims=True)


def _prewarp(f, fs):
    return 2.0 * fs * np.tan(np.pi * f / fs)


def _unwarp(w, fs):
    return fs / np.pi * np.arctan(w / (2.0 * fs))


def design_bandpass(band: BandSpec, sample_rate: float, order: int = BUTTER_ORDER) -> FilterDesign:
    """Butterworth band-pass whose zero-lag (squared) response is -3 dB at the band edges.

    A forward-backward pass squares the magnitude, so the nominal cutoffs of
    the single-pass design are widened until ``|H|**2 == 1/sqrt(2)`` at
    ``band.low`` and ``band.high``. The geometric centre is preserved.
    """
    band.check(sample_rate)
    fs = float(sample_rate)
    w1, w2 = _prewarp(band.low, fs), _prewarp(band.high, fs)
    # prototype frequency where a single pass has |H|^2 = 2**-0.5
    edge = (np.sqrt(2.0) - 1.0) ** (1.0 / (2 * order))
    bw = (w2 - w1) / edge
    w_lo = 0.5 * (-bw + np.sqrt(bw * bw + 4.0 * w1 * w2))
    w_hi = w_lo + bw
    f_lo, f_hi = _unwarp(w_lo, fs), _unwarp(w_hi, fs)
    if f_hi >= fs / 2:
        raise ValueError(f"band {band.name} too close to Nyquist for a zero-lag design")
    sos = signal.butter(order, [f_lo, f_hi], btype="bandpass", fs=fs, output="sos")
    design = FilterDesign(band, fs, sos, signal.sosfilt_zi(sos), order)
    if not design.is_stable():
        raise ValueError(f"unstable design for band {band.name}")
    return design


def _odd_extend(x: np.ndarray, n: int) -> np.ndarray:
    left = 2.0 * x[..., :1] - x[..., n:0:-1]
    right = 2.0 * x[..., -1:] - x[..., -2:-n - 2:-1]
    return np.concatenate((left, x, right), axis=-1)


def zerolag_filter(design: FilterDesign, x) -> np.ndarray:
    """Forward-backward application of ``design`` along the last axis.

    The input is extended by odd reflection of ``design.padlen`` samples on
    both sides before filtering; the output has the input's length.
    """
    x = np.asarray(x, dtype=np.float64)
    n = design.padlen
    if x.shape[-1] <= n:
        raise ValueError(f"input of length {x.shape[-1]} too short; need more than {n} samples")
    ext = _odd_extend(x, n)
    # zi has shape (n_sections, 2); broadcast over leading axes
    zi_shape = (design.zi.shape[0],) + (1,) * (x.ndim - 1) + (2,)
    zi = design.zi.reshape(zi_shape)
    y, _ = signal.sosfilt(design.sos, ext, axis=-1, zi=zi * ext[..., :1][None])
    y = y[..., ::-1]
    y, _ = signal.sosfilt(design.sos, y, axis=-1, zi=zi * y[..., :1][None])
    return np.ascontiguousarray(y[..., ::-1][..., n:-n])


def analytic_signal(x) -> np.ndarray:
    """Analytic signal along the last axis via an exact-length FFT."""
    x = np.asarray(x, dtype=np.float64)
    n = x.shape[-1]
    spec = sp_fft.rfft(x, axis=-1)
    half = n // 2
    # double the positive frequencies; DC and (even n) Nyquist stay single
    if n % 2 == 0:
        spec[..., 1:half] *= 2.0
    else:
        spec[..., 1:half + 1] *= 2.0
    full = np.zeros(x.shape[:-1] + (n,), dtype=np.complex128)
    full[..., : spec.shape[-1]] = spec
    return sp_fft.ifft(full, axis=-1, overwrite_x=True)


def hilbert_envelope(x) -> np.ndarray:
    """Instantaneous amplitude ``|x + i H[x]|`` along the last axis."""
    x = np.asarray(x, dtype=np.float64)
    n = x.shape[-1]
    if n < 8:
        raise ValueError("hilbert_envelope needs at least 8 samples")
    # the analytic signal's real part is x itself; only the quadrature
    # component is needed, and a real inverse transform gives it directly
    spec = sp_fft.rfft(x, axis=-1)
    spec *= _quadrature_weights(n)
    h = sp_fft.irfft(spec, n, axis=-1)
    h *= h
    h += x * x
    return np.sqrt(h, out=h)


def _quadrature_weights(n: int) -> np.ndarray:
    w = np.full(n // 2 + 1, -1j)
    w[0] = 0.0
    if n % 2 == 0:
        w[-1] = 0.0
    return w


def design_notch(sample_rate: float, freq: float = 50.0, quality: float = 30.0) -> np.ndarray:
    """Mains-interference notch as a single biquad (sos form)."""
    b, a = signal.iirnotch(freq, quality, fs=sample_rate)
    return signal.tf2sos(b, a)


def notch_filter(samples, sample_rate: float, freq: float = 50.0, quality: float = 30.0) -> np.ndarray:
    """Zero-phase notch along the sample axis of a [n_samples x n_channels] matrix."""
    sos = design_notch(sample_rate, freq, quality)
    return signal.sosfiltfilt(sos, np.asarray(samples, dtype=np.float64), axis=0)
