"""Synthetic labeled sessions with the four-phase trial protocol.

Each run repeats ``trials_per_condition`` trials of INC-stationary,
IC-cue, IC-stationary and INC-cue. EEG channels carry pink background
noise plus amplitude-modulated rhythms near the centres of the four narrow
bands. At rest the modulators are sparse and bursty (log-normal), which
concentrates the envelope histogram in a few bins. While the subject moves,
the modulators on the contrast channels blend towards a flat-distributed
one with weight ``delta``, raising the envelope entropy. Central channels
carry a bursty beta rhythm whose amplitude drops during IC-cue (ERD-like),
again scaled by ``delta``. Bimanual EMG bursts at about 2 Hz run from a
random latency after IC-stationary onset to the end of INC-cue.
"""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy import fft as sp_fft
from scipy.special import ndtr

from .features import FramerSpec
from .io import (
    Event,
    EventCode,
    Montage,
    Recording,
    read_recording,
    write_recording,
)
from .labeling import EMG_RATE, EmgChannelPair, LabelMode, LabelTimeline, build_labels

DEFAULT_CONTRAST = {
    "FPc": ("F3", "F4", "P3", "P4"),
    "Mc": ("Fz", "CP3", "CP4"),
}
DEFAULT_CENTRAL = ("C3", "C1", "Cz", "C2", "C4")

RHYTHM_CENTRES = (10.5, 18.0, 26.0, 37.5)
BETA_CENTRE = 18.0

BACKGROUND_UV = 10.0
RHYTHM_GAIN = 1.5        # rhythm amplitude relative to background RMS
CONTRAST_GAIN = 3.0      # same, on contrast channels
BETA_GAIN = 2.0
CENTRAL_FLOOR = 0.25      # background and non-beta scale on central channels
REST_SKEW = 1.2          # log-normal shape of resting modulators
BETA_SKEW = 1.8
ERD_DEPTH = 1.0
MODULATOR_HZ = 2.0
BETA_MODULATOR_HZ = 6.0
RAMP_SECONDS = 0.3

EMG_NOISE_UV = 5.0
EMG_BURST_UV = 50.0
EMG_THRESHOLD_UV = 15.0
SHOT_PERIOD = 0.5
SHOT_LENGTH = 0.3

PHASE_ORDER = (EventCode.INC_STAT_ON, EventCode.IC_CUE_ON, EventCode.IC_STAT_ON, EventCode.INC_CUE_ON)


@dataclass(frozen=True)
class SessionSpec:
    seed: int = 0
    n_runs: int = 5
    trials_per_condition: int = 10
    cue_seconds: float = 3.0
    stationary_seconds: tuple = (3.5, 4.5)
    montage: str = "FPc"
    contrast_channels: tuple | None = None
    central_channels: tuple | None = None
    delta: float = 1.0
    emg_latency: tuple = (0.2, 0.6)
    sample_rate: int = 512
    emg_rate: int = EMG_RATE

    def __post_init__(self):
        if not 0.0 <= self.delta <= 1.0:
            raise ValueError("delta must lie in [0, 1]")
        if self.n_runs < 1 or self.trials_per_condition < 1:
            raise ValueError("need at least one run and one trial")
        lo, hi = self.stationary_seconds
        if self.cue_seconds <= 0 or lo <= 0 or hi < lo:
            raise ValueError("durations must be positive")
        a, b = self.emg_latency
        if a < 0 or b < a:
            raise ValueError("invalid EMG latency range")
        object.__setattr__(self, "stationary_seconds", tuple(self.stationary_seconds))
        object.__setattr__(self, "emg_latency", tuple(self.emg_latency))
        if self.contrast_channels is not None:
            object.__setattr__(self, "contrast_channels", tuple(self.contrast_channels))
        if self.central_channels is not None:
            object.__setattr__(self, "central_channels", tuple(self.central_channels))

    @property
    def montage_obj(self) -> Montage:
        return Montage.by_name(self.montage)

    def resolved_contrast(self) -> tuple:
        labels = self.montage_obj.labels
        chans = self.contrast_channels if self.contrast_channels is not None \
            else DEFAULT_CONTRAST.get(self.montage, ())
        missing = [c for c in chans if c not in labels]
        if missing:
            raise ValueError(f"contrast channels {missing} not in montage {self.montage}")
        return tuple(chans)

    def resolved_central(self) -> tuple:
        labels = self.montage_obj.labels
        chans = self.central_channels if self.central_channels is not None else DEFAULT_CENTRAL
        return tuple(c for c in chans if c in labels)


@dataclass(frozen=True)
class TrialTruth:
    run: int
    trial: int
    inc_stat_on: int      # EEG sample indices
    ic_cue_on: int
    ic_stat_on: int
    inc_cue_on: int
    emg_onset: int
    trial_end: int        # one past the last INC-cue sample


@dataclass(frozen=True, eq=False)
class SessionTruth:
    phase: np.ndarray     # per EEG sample, index into PHASE_ORDER
    activity: np.ndarray  # per EEG sample, EMG-active flag
    run: np.ndarray       # per EEG sample, run number from 1
    trials: tuple


@dataclass(frozen=True, eq=False)
class GeneratedSession:
    recording: Recording
    emg: EmgChannelPair
    truth: SessionTruth
    thresholds: tuple = (EMG_THRESHOLD_UV, EMG_THRESHOLD_UV)
    spec: SessionSpec = field(default_factory=SessionSpec)


def _timeline(spec: SessionSpec, rng: np.random.Generator):
    sr = spec.sample_rate
    cue = int(round(spec.cue_seconds * sr))
    lo, hi = spec.stationary_seconds
    events = []
    trials = []
    pos = 0
    for r in range(1, spec.n_runs + 1):
        events.append(Event(pos, EventCode.RUN_START))
        for t in range(spec.trials_per_condition):
            inc_stat = int(round(rng.uniform(lo, hi) * sr))
            ic_stat = int(round(rng.uniform(lo, hi) * sr))
            latency = int(round(rng.uniform(*spec.emg_latency) * sr))
            onsets = [pos, pos + inc_stat, pos + inc_stat + cue, pos + inc_stat + cue + ic_stat]
            end = onsets[3] + cue
            for code, s in zip(PHASE_ORDER, onsets):
                events.append(Event(s, code))
            emg_onset = min(onsets[2] + latency, end - 1)
            trials.append(TrialTruth(r, t + 1, *onsets, emg_onset, end))
            pos = end
        events.append(Event(pos - 1, EventCode.RUN_END))
    return pos, events, trials


# noise is shaped on an FFT-friendly length and truncated to n

def _pink(rng, n):
    m = sp_fft.next_fast_len(n, real=True)
    spec = sp_fft.rfft(rng.standard_normal(m))
    f = np.arange(spec.shape[-1], dtype=np.float64)
    f[0] = np.inf
    y = sp_fft.irfft(spec / np.sqrt(f), m)[:n]
    return y / y.std()


def _lowpass_noise(rng, n, sr, cutoff):
    # white noise has i.i.d. complex Gaussian Fourier coefficients, so only
    # the bins the Gaussian taper keeps (up to 8 sigma) need drawing
    m = sp_fft.next_fast_len(n, real=True)
    f = np.fft.rfftfreq(m, 1.0 / sr)
    k = int(np.searchsorted(f, 8.0 * cutoff)) + 1
    spec = np.zeros(len(f), dtype=np.complex128)
    spec[:k] = rng.standard_normal(k) + 1j * rng.standard_normal(k)
    spec[:k] *= np.exp(-0.5 * (f[:k] / cutoff) ** 2)
    y = sp_fft.irfft(spec, m)[:n]
    return (y - y.mean()) / y.std()


def _rhythm(rng, n, sr, centre):
    # tone whose phase random-walks, giving a narrow spectral line
    phase = np.cumsum(rng.standard_normal(n))
    phase *= 0.02
    phase += np.arange(n) * (2 * np.pi * centre / sr)
    phase += rng.uniform(0, 2 * np.pi)
    return np.sin(phase, out=phase)


def _rest_modulator(g, skew):
    return np.exp(skew * g - 0.5 * skew * skew)


def _ramp(flag: np.ndarray, sr: int) -> np.ndarray:
    w = max(1, int(round(RAMP_SECONDS * sr)))
    kernel = np.ones(w) / w
    return np.convolve(flag.astype(np.float64), kernel, mode="same")


def _emg_channel(rng, n_emg, rate, active_spans, burst_uv):
    x = EMG_NOISE_UV * rng.standard_normal(n_emg)
    gain = np.zeros(n_emg)
    for start_s, end_s in active_spans:
        t = start_s
        while t < end_s:
            length = SHOT_LENGTH + rng.uniform(-0.02, 0.02)
            a, b = int(round(t * rate)), int(round(min(t + length, end_s) * rate))
            gain[a:b] = 1.0
            t += SHOT_PERIOD + rng.uniform(-0.03, 0.03)
    return x + burst_uv * gain * rng.standard_normal(n_emg)


def generate_session(spec: SessionSpec = SessionSpec()) -> GeneratedSession:
    """Deterministic synthetic session for ``spec`` (seeded by ``spec.seed``)."""
    rng = np.random.default_rng(spec.seed)
    sr = spec.sample_rate
    montage = spec.montage_obj
    contrast = set(spec.resolved_contrast())
    central = set(spec.resolved_central())
    n, events, trials = _timeline(spec, rng)

    phase = np.zeros(n, dtype=np.int8)
    activity = np.zeros(n, dtype=bool)
    run = np.zeros(n, dtype=np.int16)
    for tr in trials:
        phase[tr.inc_stat_on:tr.ic_cue_on] = 0
        phase[tr.ic_cue_on:tr.ic_stat_on] = 1
        phase[tr.ic_stat_on:tr.inc_cue_on] = 2
        phase[tr.inc_cue_on:tr.trial_end] = 3
        activity[tr.emg_onset:tr.trial_end] = True
        run[tr.inc_stat_on:tr.trial_end] = tr.run

    move = _ramp(activity, sr) * spec.delta
    erd = _ramp(phase == 1, sr) * spec.delta

    eeg = np.empty((n, len(montage)))
    for ch, label in enumerate(montage.labels):
        floor = CENTRAL_FLOOR if label in central else 1.0
        x = floor * BACKGROUND_UV * _pink(rng, n)
        for centre in RHYTHM_CENTRES:
            is_beta = label in central and centre == BETA_CENTRE
            g = _lowpass_noise(rng, n, sr, BETA_MODULATOR_HZ if is_beta else MODULATOR_HZ)
            carrier = _rhythm(rng, n, sr, centre)
            if is_beta:
                mod = BETA_GAIN * _rest_modulator(g, BETA_SKEW) * (1.0 - ERD_DEPTH * erd)
            else:
                gain = CONTRAST_GAIN if label in contrast else RHYTHM_GAIN * floor
                mod = gain * _rest_modulator(g, REST_SKEW)
                if label in contrast:
                    flat = 2.0 * ndtr(g)  # uniform on [0, 2], mean 1
                    mod = (1.0 - move) * mod + move * gain * flat
            x += BACKGROUND_UV * mod * carrier
        eeg[:, ch] = x

    rec = Recording(sr, montage.labels, eeg, events)

    rate = spec.emg_rate
    n_emg = int(np.ceil(n * rate / sr))
    spans = [(tr.emg_onset / sr, tr.trial_end / sr) for tr in trials]
    left = _emg_channel(rng, n_emg, rate, spans, EMG_BURST_UV * 0.9)
    right = _emg_channel(rng, n_emg, rate, spans, EMG_BURST_UV)
    truth = SessionTruth(phase, activity, run, tuple(trials))
    return GeneratedSession(rec, EmgChannelPair(left, right, rate), truth,
                            (EMG_THRESHOLD_UV, EMG_THRESHOLD_UV), spec)


def truth_labels(session: GeneratedSession, framer: FramerSpec = FramerSpec(),
                 mode: LabelMode = LabelMode.EXECUTION) -> LabelTimeline:
    """Frame labels straight from generator state (no EMG thresholding)."""
    return build_labels(session.recording, session.truth.activity, framer, mode)


# --- session directories ------------------------------------------------------

EEG_FILE, EVENTS_FILE = "eeg.csv", "events.csv"
EMG_FILE, EMG_EVENTS_FILE = "emg.csv", "emg_events.csv"
TRUTH_FILE, META_FILE = "truth.csv", "session.json"
EMG_LABELS = ("EMG_L", "EMG_R")


@dataclass(frozen=True, eq=False)
class SessionData:
    """A session as read back from disk."""

    recording: Recording
    emg: EmgChannelPair
    thresholds: tuple
    meta: dict
    trials: tuple = ()


def write_session(session: GeneratedSession, directory) -> Path:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    write_recording(session.recording, d / EEG_FILE, d / EVENTS_FILE)
    emg_rec = Recording(session.emg.rate, EMG_LABELS,
                        np.column_stack([session.emg.left, session.emg.right]))
    write_recording(emg_rec, d / EMG_FILE, d / EMG_EVENTS_FILE)
    with open(d / TRUTH_FILE, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        names = list(TrialTruth.__dataclass_fields__)
        wr.writerow(names)
        for tr in session.truth.trials:
            wr.writerow([getattr(tr, k) for k in names])
    meta = {
        "format_version": 1,
        "spec": asdict(session.spec),
        "emg_thresholds": list(session.thresholds),
        "contrast_channels": list(session.spec.resolved_contrast()),
        "central_channels": list(session.spec.resolved_central()),
    }
    (d / META_FILE).write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return d


def read_trials(path) -> tuple:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return tuple(TrialTruth(**{k: int(v) for k, v in row.items()}) for row in rows)


def read_session(directory) -> SessionData:
    d = Path(directory)
    rec = read_recording(d / EEG_FILE, d / EVENTS_FILE)
    emg_rec = read_recording(d / EMG_FILE, d / EMG_EVENTS_FILE)
    if emg_rec.n_channels != 2:
        raise ValueError("EMG file must hold exactly two channels")
    emg = EmgChannelPair(emg_rec.samples[:, 0], emg_rec.samples[:, 1], emg_rec.sample_rate)
    meta = json.loads((d / META_FILE).read_text()) if (d / META_FILE).exists() else {}
    thresholds = tuple(meta.get("emg_thresholds", (EMG_THRESHOLD_UV, EMG_THRESHOLD_UV)))
    trials = read_trials(d / TRUTH_FILE) if (d / TRUTH_FILE).exists() else ()
    return SessionData(rec, emg, thresholds, meta, trials)


def as_session_data(session: GeneratedSession) -> SessionData:
    meta = {"spec": asdict(session.spec), "emg_thresholds": list(session.thresholds)}
    return SessionData(session.recording, session.emg, session.thresholds, meta, session.truth.trials)
