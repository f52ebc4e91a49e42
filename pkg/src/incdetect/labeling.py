"""EMG envelope, bimanual activity detection and frame-level IC/INC labels."""

from __future__ import annotations

import csv
import enum
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .features import FramerSpec, frame_indices
from .io import EXCLUDED, IC, INC, LABEL_NAMES, EventCode, Recording

EMG_RATE = 200
EMG_SMOOTH_SECONDS = 0.25
CLOSING_SECONDS = 0.2


class LabelMode(str, enum.Enum):
    EXECUTION = "execution"
    PREPARATION = "preparation"


@dataclass(frozen=True, eq=False)
class EmgChannelPair:
    left: np.ndarray
    right: np.ndarray
    rate: int = EMG_RATE

    def __post_init__(self):
        left = np.asarray(self.left, dtype=np.float64)
        right = np.asarray(self.right, dtype=np.float64)
        if left.shape != right.shape or left.ndim != 1:
            raise ValueError("left and right EMG must be 1-D and of equal length")
        object.__setattr__(self, "left", left)
        object.__setattr__(self, "right", right)


@dataclass(frozen=True, eq=False)
class LabelTimeline:
    labels: np.ndarray          # IC / INC / EXCLUDED per frame
    t_end: np.ndarray           # seconds, window's last sample
    mask: np.ndarray | None = None  # per-sample activity at the EEG rate
    mode: LabelMode = LabelMode.EXECUTION

    def __len__(self) -> int:
        return len(self.labels)


def emg_envelope(x, smooth_seconds: float = EMG_SMOOTH_SECONDS, rate: float = EMG_RATE) -> np.ndarray:
    """Rectify and smooth with a centred moving average.

    Near the ends the average runs over the part of the window that lies
    inside the signal.
    """
    x = np.abs(np.asarray(x, dtype=np.float64))
    w = max(1, int(round(smooth_seconds * rate)))
    n = len(x)
    left = (w - 1) // 2
    right = w - 1 - left
    csum = np.concatenate(([0.0], np.cumsum(x)))
    i = np.arange(n)
    lo = np.clip(i - left, 0, n)
    hi = np.clip(i + right + 1, 0, n)
    return (csum[hi] - csum[lo]) / (hi - lo)


def bridge_gaps(mask, max_gap: int) -> np.ndarray:
    """Fill interior false runs of at most ``max_gap`` samples (closing)."""
    m = np.asarray(mask, dtype=bool).copy()
    if max_gap <= 0 or not m.any():
        return m
    edges = np.diff(m.astype(np.int8))
    falls = np.nonzero(edges == -1)[0] + 1  # first false after a true run
    rises = np.nonzero(edges == 1)[0] + 1   # first true after a false run
    for f in falls:
        k = np.searchsorted(rises, f)
        if k < len(rises) and rises[k] - f <= max_gap:
            m[f:rises[k]] = True
    return m


def raw_activity(pair: EmgChannelPair, threshold_left: float, threshold_right: float,
                 smooth_seconds: float = EMG_SMOOTH_SECONDS) -> np.ndarray:
    """Both envelopes above their thresholds, before gap bridging."""
    if threshold_left <= 0 or threshold_right <= 0:
        raise ValueError("EMG thresholds must be positive")
    env_l = emg_envelope(pair.left, smooth_seconds, pair.rate)
    env_r = emg_envelope(pair.right, smooth_seconds, pair.rate)
    return (env_l > threshold_left) & (env_r > threshold_right)


def activity_mask(pair: EmgChannelPair, threshold_left: float, threshold_right: float,
                  smooth_seconds: float = EMG_SMOOTH_SECONDS,
                  closing_seconds: float = CLOSING_SECONDS) -> np.ndarray:
    raw = raw_activity(pair, threshold_left, threshold_right, smooth_seconds)
    return bridge_gaps(raw, int(round(closing_seconds * pair.rate)))


def resample_mask(mask, src_rate: float, dst_rate: float, n_dst: int) -> np.ndarray:
    """Zero-order hold onto the destination clock."""
    mask = np.asarray(mask, dtype=bool)
    idx = np.floor(np.arange(n_dst) * (src_rate / dst_rate)).astype(np.int64)
    np.clip(idx, 0, len(mask) - 1, out=idx)
    return mask[idx]


def phase_intervals(rec: Recording) -> list[tuple[EventCode, int, int]]:
    """(phase code, start, stop) for every phase onset; a phase ends at the
    next phase onset or at its run's end."""
    phases = (EventCode.INC_STAT_ON, EventCode.IC_CUE_ON, EventCode.IC_STAT_ON, EventCode.INC_CUE_ON)
    # run ends sort ahead of a phase onset on the same sample
    boundaries = sorted(
        [(e.sample_index, 1, e.code) for e in rec.events if e.code in phases]
        + [(e.sample_index + 1, 0, EventCode.RUN_END) for e in rec.events if e.code == EventCode.RUN_END]
        + [(rec.n_samples, 0, EventCode.RUN_END)]
    )
    out = []
    for (s, _, code), (nxt, _, _) in zip(boundaries, boundaries[1:]):
        if code in phases and nxt > s:
            out.append((code, s, nxt))
    return out


def build_labels(rec: Recording, mask, framer: FramerSpec = FramerSpec(),
                 mode: LabelMode = LabelMode.EXECUTION, time_offset: float = 0.0) -> LabelTimeline:
    """Frame labels for ``rec``.

    EXECUTION: IC iff at least half of the frame's samples are active in
    ``mask`` (EEG rate). PREPARATION: frames wholly inside an INC-stationary
    phase are INC, wholly inside an IC-cue phase are IC, the rest EXCLUDED.
    """
    mode = LabelMode(mode)
    sr = rec.sample_rate
    frames = frame_indices(rec.n_samples, framer, sr)
    t_end = np.array([(e - 1) / sr for _, e in frames]) + time_offset
    labels = np.full(len(frames), EXCLUDED, dtype=np.int64)
    m = None
    if mode is LabelMode.EXECUTION:
        m = np.asarray(mask, dtype=bool)
        if len(m) != rec.n_samples:
            raise ValueError("activity mask must be resampled to the EEG clock first")
        csum = np.concatenate(([0], np.cumsum(m)))
        for i, (s, e) in enumerate(frames):
            labels[i] = IC if 2 * (csum[e] - csum[s]) >= (e - s) else INC
    else:
        intervals = phase_intervals(rec)
        wanted = {EventCode.INC_STAT_ON: INC, EventCode.IC_CUE_ON: IC}
        spans = [(s, e, wanted[c]) for c, s, e in intervals if c in wanted]
        if not any(lab == IC for *_, lab in spans) or not any(lab == INC for *_, lab in spans):
            raise ValueError("PREPARATION labels need INC_STAT_ON and IC_CUE_ON events")
        starts = np.array([s for s, _, _ in spans])
        for i, (s, e) in enumerate(frames):
            j = np.searchsorted(starts, s, side="right") - 1
            if j >= 0 and spans[j][0] <= s and e <= spans[j][1]:
                labels[i] = spans[j][2]
        if mask is not None:
            m = np.asarray(mask, dtype=bool)
    return LabelTimeline(labels, t_end, m, mode)


def write_labels_csv(path, timeline: LabelTimeline) -> None:
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["frame", "t", "label"])
        for i, (t, lab) in enumerate(zip(timeline.t_end, timeline.labels)):
            wr.writerow([i, f"{t:.6f}", LABEL_NAMES[int(lab)]])
