"""Sliding-window framing and per-window features.

Entropy features: for each frame, channel and band the window is band-passed
(zero lag), its Hilbert envelope taken, and the normalized Shannon entropy of
the envelope histogram computed. The PSD baseline uses Welch log-power.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import signal

from .dsp import CANONICAL_BANDS, BandSpec, FilterDesign, car_filter, design_bandpass, hilbert_envelope, zerolag_filter
from .io import Recording

# frames per batch in the offline extractor; bounds peak memory
_CHUNK = 32


@dataclass(frozen=True)
class FramerSpec:
    window_seconds: float = 1.5
    shift_seconds: float = 0.125

    def window_samples(self, sample_rate: float) -> int:
        return int(round(self.window_seconds * sample_rate))

    def shift_samples(self, sample_rate: float) -> int:
        return int(round(self.shift_seconds * sample_rate))

    def check(self, sample_rate: float) -> None:
        w, s = self.window_samples(sample_rate), self.shift_samples(sample_rate)
        if w <= 0 or s <= 0:
            raise ValueError("window and shift must span at least one sample")
        if s > w:
            raise ValueError("shift must not exceed the window")


@dataclass(frozen=True)
class EntropySpec:
    k: int = 32

    def __post_init__(self):
        if int(self.k) != self.k or self.k < 2:
            raise ValueError(f"entropy bin count must be an integer >= 2, got {self.k}")


@dataclass(frozen=True, eq=False)
class FrameFeatures:
    frame_index: int
    t_end: float
    values: np.ndarray  # [n_channels x n_bands]


def frame_indices(n_samples: int, spec: FramerSpec, sample_rate: float = 512) -> list[tuple[int, int]]:
    """Half-open sample ranges ``[i*shift, i*shift + window)`` covering the signal."""
    spec.check(sample_rate)
    w, s = spec.window_samples(sample_rate), spec.shift_samples(sample_rate)
    if n_samples < w:
        raise ValueError(f"recording of {n_samples} samples is shorter than one window ({w})")
    n_frames = (n_samples - w) // s + 1
    return [(i * s, i * s + w) for i in range(n_frames)]


def entropy_rows(x, k: int = 32) -> np.ndarray:
    """Normalized histogram entropy of each row of ``x`` (last axis).

    k equal-width bins span each row's own [min, max]; rows with zero range
    have entropy 0.
    """
    x = np.asarray(x, dtype=np.float64)
    flat = x.reshape(-1, x.shape[-1])
    m, n = flat.shape
    lo = flat.min(axis=1, keepdims=True)
    hi = flat.max(axis=1, keepdims=True)
    span = hi - lo
    degenerate = ~(span > 0)
    span = np.where(degenerate, 1.0, span)
    idx = np.floor((flat - lo) / span * k).astype(np.int64)
    np.clip(idx, 0, k - 1, out=idx)
    idx += (np.arange(m) * k)[:, None]
    counts = np.bincount(idx.ravel(), minlength=m * k).reshape(m, k)
    p = counts / n
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(counts > 0, p * np.log2(np.where(counts > 0, p, 1.0)), 0.0)
    h = -terms.sum(axis=1) / np.log2(k)
    h[degenerate[:, 0]] = 0.0
    # guard tiny negative zero / rounding above 1
    np.clip(h, 0.0, 1.0, out=h)
    return h.reshape(x.shape[:-1])


def shannon_entropy(x, spec: EntropySpec = EntropySpec()) -> float:
    """Normalized Shannon entropy of a 1-D vector in [0, 1]."""
    x = np.asarray(x, dtype=np.float64).ravel()
    if x.size < 2:
        raise ValueError("entropy needs at least two samples")
    return float(entropy_rows(x[None, :], spec.k)[0])


def _designs(bands: Sequence[BandSpec], sample_rate: float) -> list[FilterDesign]:
    return [design_bandpass(b, sample_rate) for b in bands]


def _entropy_block(windows: np.ndarray, designs: Sequence[FilterDesign], k: int) -> np.ndarray:
    """windows: [..., n_channels, window] -> [..., n_channels, n_bands]."""
    out = np.empty(windows.shape[:-1] + (len(designs),))
    for j, d in enumerate(designs):
        env = hilbert_envelope(zerolag_filter(d, windows))
        out[..., j] = entropy_rows(env, k)
    return out


def _window_stack(x: np.ndarray, starts: Sequence[int], w: int) -> np.ndarray:
    # x: [n_samples x n_channels] -> [n_frames, n_channels, w]
    return np.stack([x[s:s + w].T for s in starts])


def entropy_feature_array(
    rec: Recording,
    bands: Sequence[BandSpec] = CANONICAL_BANDS,
    framer: FramerSpec = FramerSpec(),
    espec: EntropySpec = EntropySpec(),
    apply_car: bool = True,
) -> tuple[np.ndarray, np.ndarray]:
    """Entropy features as arrays: ``(t_end [n_frames], values [n_frames, n_ch, n_bands])``."""
    sr = rec.sample_rate
    frames = frame_indices(rec.n_samples, framer, sr)
    x = car_filter(rec.samples) if apply_car else np.asarray(rec.samples)
    designs = _designs(bands, sr)
    w = framer.window_samples(sr)
    starts = [s for s, _ in frames]
    values = np.empty((len(frames), rec.n_channels, len(bands)))
    for c in range(0, len(frames), _CHUNK):
        block = _window_stack(x, starts[c:c + _CHUNK], w)
        values[c:c + _CHUNK] = _entropy_block(block, designs, espec.k)
    t_end = np.array([(e - 1) / sr for _, e in frames])
    return t_end, values


def extract_entropy_features(
    rec: Recording,
    bands: Sequence[BandSpec] = CANONICAL_BANDS,
    framer: FramerSpec = FramerSpec(),
    espec: EntropySpec = EntropySpec(),
    apply_car: bool = True,
) -> list[FrameFeatures]:
    """Per-frame [channel x band] normalized entropies for the whole recording."""
    t_end, values = entropy_feature_array(rec, bands, framer, espec, apply_car)
    return [FrameFeatures(i, float(t_end[i]), values[i]) for i in range(len(t_end))]


class EntropyFrameExtractor:
    """Computes only the requested (channel, band) entropies for one window.

    Used by the streaming path where a trained detector needs a handful of
    the channel-band pairs. ``pairs`` index into the recording's channels
    and ``bands``.
    """

    def __init__(self, pairs: Sequence[tuple[int, int]], bands: Sequence[BandSpec],
                 sample_rate: float, k: int = 32):
        self.pairs = [(int(c), int(b)) for c, b in pairs]
        self.k = k
        self.designs = {b: design_bandpass(bands[b], sample_rate) for _, b in self.pairs}
        groups: dict[int, list[int]] = {}
        for pos, (c, b) in enumerate(self.pairs):
            groups.setdefault(b, []).append(pos)
        self._groups = [(b, np.array([self.pairs[p][0] for p in pos]), np.array(pos))
                        for b, pos in sorted(groups.items())]

    def __call__(self, window: np.ndarray) -> np.ndarray:
        """``window`` is [window_samples x n_channels], already re-referenced."""
        return self.batch(window[None])[0]

    def batch(self, windows: np.ndarray) -> np.ndarray:
        """[n_frames x window_samples x n_channels] -> [n_frames x n_pairs]."""
        out = np.empty((windows.shape[0], len(self.pairs)))
        for b, chans, pos in self._groups:
            rows = np.ascontiguousarray(windows[:, :, chans].transpose(0, 2, 1))
            env = hilbert_envelope(zerolag_filter(self.designs[b], rows))
            out[:, pos] = entropy_rows(env, self.k)
        return out


# --- PSD baseline -----------------------------------------------------------

PSD_SEGMENT_SECONDS = 0.5
PSD_FMIN, PSD_FMAX = 4.0, 48.0


def psd_freqs(sample_rate: float) -> np.ndarray:
    nper = int(round(PSD_SEGMENT_SECONDS * sample_rate))
    f = np.fft.rfftfreq(nper, 1.0 / sample_rate)
    return f[(f >= PSD_FMIN) & (f <= PSD_FMAX)]


def psd_band_names(sample_rate: float) -> list[str]:
    return [f"{f:g}Hz" for f in psd_freqs(sample_rate)]


def welch_logpower(windows: np.ndarray, sample_rate: float) -> np.ndarray:
    """Welch log-power of [..., window] rows, restricted to 4-48 Hz bins."""
    nper = int(round(PSD_SEGMENT_SECONDS * sample_rate))
    f, pxx = signal.welch(windows, fs=sample_rate, window="hann", nperseg=nper,
                          noverlap=nper // 2, axis=-1)
    keep = (f >= PSD_FMIN) & (f <= PSD_FMAX)
    return np.log(pxx[..., keep])


def psd_feature_array(rec: Recording, framer: FramerSpec = FramerSpec(),
                      apply_car: bool = True) -> tuple[np.ndarray, np.ndarray]:
    """``(t_end [n_frames], log-power [n_frames, n_ch, n_freq_bins])``."""
    sr = rec.sample_rate
    frames = frame_indices(rec.n_samples, framer, sr)
    x = car_filter(rec.samples) if apply_car else np.asarray(rec.samples)
    w = framer.window_samples(sr)
    starts = [s for s, _ in frames]
    values = np.empty((len(frames), rec.n_channels, len(psd_freqs(sr))))
    for c in range(0, len(frames), _CHUNK):
        values[c:c + _CHUNK] = welch_logpower(_window_stack(x, starts[c:c + _CHUNK], w), sr)
    t_end = np.array([(e - 1) / sr for _, e in frames])
    return t_end, values


def extract_psd_features(rec: Recording, framer: FramerSpec = FramerSpec(),
                         apply_car: bool = True) -> list[FrameFeatures]:
    t_end, values = psd_feature_array(rec, framer, apply_car)
    return [FrameFeatures(i, float(t_end[i]), values[i]) for i in range(len(t_end))]


class PsdFrameExtractor:
    """Per-window log-power for selected (channel, frequency-bin) pairs."""

    def __init__(self, pairs: Sequence[tuple[int, int]], sample_rate: float):
        self.pairs = [(int(c), int(b)) for c, b in pairs]
        self.sample_rate = sample_rate
        self._chans = sorted({c for c, _ in self.pairs})
        self._row = {c: i for i, c in enumerate(self._chans)}

    def __call__(self, window: np.ndarray) -> np.ndarray:
        return self.batch(window[None])[0]

    def batch(self, windows: np.ndarray) -> np.ndarray:
        rows = np.ascontiguousarray(windows[:, :, self._chans].transpose(0, 2, 1))
        lp = welch_logpower(rows, self.sample_rate)
        ci = np.array([self._row[c] for c, _ in self.pairs])
        bi = np.array([b for _, b in self.pairs])
        return lp[:, ci, bi]


def feature_names(channels: Sequence[str], band_names: Sequence[str]) -> list[tuple[str, str]]:
    """Flattened (channel, band) names matching ``values.reshape(n_frames, -1)``."""
    return [(c, b) for c in channels for b in band_names]


def write_feature_csv(path, t_end: np.ndarray, values: np.ndarray,
                      channels: Sequence[str], band_names: Sequence[str]) -> None:
    """One row per frame: ``frame,t_end,<channel>:<band>,...``."""
    names = feature_names(channels, band_names)
    flat = values.reshape(len(t_end), -1)
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["frame", "t_end"] + [f"{c}:{b}" for c, b in names])
        for i, t in enumerate(t_end):
            wr.writerow([i, repr(float(t))] + [f"{v:.9f}" for v in flat[i]])
