"""Training, offline evaluation and streaming replay of an IC/INC detector.

Training works on a contiguous block of runs: features for every
channel-band pair, frame labels, CVA selection, the prototype classifier
and a leave-one-run-out grid search of the integrator parameters.

Evaluation processes frames in blocks and streaming one frame at a time,
but both re-reference each window on its own, call the same selected-feature
extractor and posterior code and apply the same integrator arithmetic, so
their outputs agree bit for bit.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterator

import numpy as np

from .classifier import CLASSES, GaussianClassifier, build_classifier, posterior, posterior_batch, train
from .config import PipelineConfig
from .cva import CvaModel, LabeledFeatureSet, SelectionPolicy, fit_cva
from .decision import DecisionTrace, IntegratorState, calibrate, integrate_step, run_trace
from .dsp import car_filter
from .evaluation import Report, TrialScores, make_report, score_preparation_trials
from .features import (
    EntropyFrameExtractor,
    PsdFrameExtractor,
    entropy_feature_array,
    feature_names,
    frame_indices,
    psd_band_names,
    psd_feature_array,
)
from .io import EXCLUDED, IC, INC, Recording, run_bounds
from .labeling import LabelMode, LabelTimeline, activity_mask, build_labels, resample_mask
from .simgen import SessionData

FORMAT_VERSION = 1


class PipelineError(ValueError):
    pass


# --- segments and labels ------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Segment:
    """A contiguous block of runs cut from a session."""

    recording: Recording
    offset: int            # first sample in the session
    runs: tuple
    run_of_sample: np.ndarray

    @property
    def time_offset(self) -> float:
        return self.offset / self.recording.sample_rate


def select_runs(rec: Recording, runs) -> Segment:
    bounds = run_bounds(rec)
    runs = tuple(sorted(set(int(r) for r in runs)))
    if not runs:
        raise PipelineError("no runs requested")
    if runs[-1] > len(bounds):
        raise PipelineError(f"run {runs[-1]} requested but the session has {len(bounds)} runs")
    if runs != tuple(range(runs[0], runs[-1] + 1)):
        raise PipelineError(f"runs {runs} are not contiguous")
    start, stop = bounds[runs[0] - 1][0], bounds[runs[-1] - 1][1]
    run_of = np.zeros(stop - start, dtype=np.int64)
    for r in runs:
        s, e = bounds[r - 1]
        run_of[s - start:e - start] = r
    return Segment(rec.crop(start, stop), start, runs, run_of)


def session_mask(session: SessionData, config: PipelineConfig) -> np.ndarray:
    """Bimanual EMG activity on the EEG clock for the whole session."""
    th_l = config.emg_threshold_left if config.emg_threshold_left is not None else session.thresholds[0]
    th_r = config.emg_threshold_right if config.emg_threshold_right is not None else session.thresholds[1]
    m = activity_mask(session.emg, th_l, th_r, config.emg_smooth_seconds, config.emg_closing_seconds)
    rec = session.recording
    return resample_mask(m, session.emg.rate, rec.sample_rate, rec.n_samples)


def segment_labels(session: SessionData, seg: Segment, config: PipelineConfig,
                   mask: np.ndarray | None = None) -> LabelTimeline:
    if config.mode is LabelMode.EXECUTION:
        if mask is None:
            mask = session_mask(session, config)
        m = mask[seg.offset:seg.offset + seg.recording.n_samples]
    else:
        m = None
    return build_labels(seg.recording, m, config.framer, config.mode, seg.time_offset)


def frame_runs(seg: Segment, config: PipelineConfig) -> np.ndarray:
    """Run number of each frame, taken at the frame's last sample."""
    frames = frame_indices(seg.recording.n_samples, config.framer, seg.recording.sample_rate)
    return np.array([seg.run_of_sample[e - 1] for _, e in frames])


# --- features -------------------------------------------------------------------

def band_names(config: PipelineConfig, sample_rate: float) -> list[str]:
    if config.feature_method == "psd":
        return psd_band_names(sample_rate)
    return [b.name for b in config.band_specs]


def feature_table(rec: Recording, config: PipelineConfig) -> tuple[np.ndarray, np.ndarray]:
    """``(t_end, X [n_frames x n_channels*n_bands])`` for every channel-band pair."""
    if config.feature_method == "psd":
        t, v = psd_feature_array(rec, config.framer)
    else:
        t, v = entropy_feature_array(rec, config.band_specs, config.framer, config.entropy)
    return t, v.reshape(len(t), -1)


def make_frame_extractor(detector: "TrainedDetector") -> Callable[[np.ndarray], np.ndarray]:
    cfg = detector.config
    if cfg.feature_method == "psd":
        return PsdFrameExtractor(detector.pairs, detector.sample_rate)
    return EntropyFrameExtractor(detector.pairs, cfg.band_specs, detector.sample_rate, cfg.entropy_bins)


# --- the trained model ----------------------------------------------------------

@dataclass(frozen=True, eq=False)
class TrainedDetector:
    config: PipelineConfig
    sample_rate: int
    channels: tuple
    band_names: tuple
    selected: tuple            # flat feature indices, channel-major
    discrimination: np.ndarray
    classifier: GaussianClassifier
    alpha: float
    th: float
    calibration: np.ndarray = field(default_factory=lambda: np.zeros((0, 0)))
    training_log: dict = field(default_factory=dict)

    @property
    def pairs(self) -> list[tuple[int, int]]:
        nb = len(self.band_names)
        return [(i // nb, i % nb) for i in self.selected]

    @property
    def selected_names(self) -> list[tuple[str, str]]:
        return [(self.channels[c], self.band_names[b]) for c, b in self.pairs]

    def to_dict(self) -> dict:
        clf = self.classifier
        return {
            "format_version": FORMAT_VERSION,
            "config": self.config.to_dict(),
            "sample_rate": self.sample_rate,
            "channels": list(self.channels),
            "band_names": list(self.band_names),
            "selected": list(self.selected),
            "discrimination": self.discrimination.tolist(),
            "classifier": {
                "means": clf.means.tolist(),
                "variances": clf.variances.tolist(),
                "norm_mean": clf.norm_mean.tolist(),
                "norm_std": clf.norm_std.tolist(),
                "priors": clf.priors.tolist(),
            },
            "alpha": self.alpha,
            "th": self.th,
            "calibration": self.calibration.tolist(),
            "training_log": self.training_log,
        }

    def to_json(self) -> str:
        # json writes floats with repr, which round-trips exactly
        return json.dumps(self.to_dict(), indent=1, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, d: dict) -> "TrainedDetector":
        if d.get("format_version") != FORMAT_VERSION:
            raise PipelineError(f"unsupported model format {d.get('format_version')!r}")
        c = d["classifier"]
        clf = GaussianClassifier(np.array(c["means"]), np.array(c["variances"]),
                                 np.array(c["norm_mean"]), np.array(c["norm_std"]), np.array(c["priors"]))
        return cls(PipelineConfig.from_dict(d["config"]), int(d["sample_rate"]), tuple(d["channels"]),
                   tuple(d["band_names"]), tuple(int(i) for i in d["selected"]),
                   np.array(d["discrimination"], dtype=np.float64), clf, float(d["alpha"]),
                   float(d["th"]), np.array(d["calibration"], dtype=np.float64), dict(d["training_log"]))

    def save(self, path) -> None:
        Path(path).write_text(self.to_json())

    @classmethod
    def load(cls, path) -> "TrainedDetector":
        try:
            d = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise PipelineError(f"model file is not valid JSON: {exc}") from exc
        return cls.from_dict(d)


@dataclass(frozen=True, eq=False)
class TrainingData:
    """Everything computed from the training runs before model fitting."""

    t_end: np.ndarray
    X: np.ndarray
    labels: LabelTimeline
    folds: np.ndarray
    segment: Segment


def training_data(session: SessionData, config: PipelineConfig, X: np.ndarray | None = None,
                  t_end: np.ndarray | None = None) -> TrainingData:
    """Label and (unless supplied) extract features for the training runs.

    ``X`` and ``t_end`` may be passed in to reuse a feature table across
    labeling modes.
    """
    seg = select_runs(session.recording, config.train_runs)
    if len(seg.runs) < 3:
        raise PipelineError(f"training needs at least 3 runs, got {len(seg.runs)}")
    if X is None:
        t_end, X = feature_table(seg.recording, config)
        t_end = t_end + seg.time_offset
    labels = segment_labels(session, seg, config)
    if len(labels) != X.shape[0]:
        raise PipelineError("feature table and labels disagree on the frame count")
    return TrainingData(t_end, X, labels, frame_runs(seg, config), seg)


def _fit(config: PipelineConfig, X, y) -> GaussianClassifier:
    clf = build_classifier(X, y, config.n_prototypes)
    return train(clf, X, y, config.learning_rate, config.epochs, config.seed, config.train_variances)


def train_detector(session: SessionData, config: PipelineConfig = PipelineConfig(),
                   data: TrainingData | None = None) -> TrainedDetector:
    rec = session.recording
    if tuple(rec.channels) != config_montage_labels(config):
        raise PipelineError(f"recording channels do not match montage {config.montage}")
    if data is None:
        data = training_data(session, config)
    y = data.labels.labels
    keep = y != EXCLUDED
    if (y[keep] == IC).sum() < config.n_prototypes or (y[keep] == INC).sum() < config.n_prototypes:
        raise PipelineError("too few labelled frames of one class to train")
    bnames = band_names(config, rec.sample_rate)
    names = feature_names(rec.channels, bnames)
    policy = SelectionPolicy(config.cva_tau, config.cva_floor, config.cva_cap)
    try:
        cva: CvaModel = fit_cva(LabeledFeatureSet(data.X[keep], y[keep], names), policy, config.cva_shrinkage)
    except (ValueError, np.linalg.LinAlgError) as exc:
        raise PipelineError(f"degenerate features: {exc}") from exc
    sel = list(cva.selected)
    Xs = data.X[:, sel]

    def fit(Xtr, ytr):
        clf = _fit(config, Xtr, ytr)
        return lambda Xte: posterior_batch(clf, Xte)[:, CLASSES.index(IC)]

    cal = calibrate(Xs, y, data.folds, fit, config.grid_alpha, config.grid_th)
    clf = _fit(config, Xs[keep], y[keep])
    log = {
        "n_frames": int(len(y)),
        "n_ic": int((y == IC).sum()),
        "n_inc": int((y == INC).sum()),
        "n_excluded": int((~keep).sum()),
        "calibration_accuracy": float(cal.accuracy.max()),
    }
    return TrainedDetector(config, int(rec.sample_rate), tuple(rec.channels), tuple(bnames),
                           tuple(int(i) for i in sel), cva.discrimination, clf, float(cal.alpha),
                           float(cal.th), cal.accuracy, log)


def config_montage_labels(config: PipelineConfig) -> tuple:
    from .io import Montage
    return Montage.by_name(config.montage).labels


# --- per-frame processing -------------------------------------------------------

@dataclass(frozen=True)
class FrameDecision:
    t: float
    p_ic: float
    D: float
    label: int


def check_compatible(detector: TrainedDetector, rec: Recording) -> None:
    if tuple(rec.channels) != detector.channels:
        raise PipelineError("recording montage does not match the model "
                            f"({len(rec.channels)} vs {len(detector.channels)} channels)")
    if rec.sample_rate != detector.sample_rate:
        raise PipelineError(f"sample rate {rec.sample_rate} differs from the model's {detector.sample_rate}")


def iter_decisions(detector: TrainedDetector, rec: Recording, time_offset: float = 0.0) -> Iterator[FrameDecision]:
    """Replay ``rec`` frame by frame, yielding one decision per frame."""
    check_compatible(detector, rec)
    cfg = detector.config
    sr = rec.sample_rate
    extract = make_frame_extractor(detector)
    state = IntegratorState(0.5, detector.alpha, detector.th, INC)
    ic_col = CLASSES.index(IC)
    x = rec.samples
    for s, e in frame_indices(rec.n_samples, cfg.framer, sr):
        window = car_filter(x[s:e])
        p_ic = float(posterior(detector.classifier, extract(window))[ic_col])
        state, label = integrate_step(state, p_ic)
        yield FrameDecision((e - 1) / sr + time_offset, p_ic, state.D, label)


_BATCH = 64


def selected_features(detector: TrainedDetector, rec: Recording) -> tuple[np.ndarray, np.ndarray]:
    """``(t_end, X [n_frames x n_selected])`` computed a block of frames at a time."""
    check_compatible(detector, rec)
    cfg = detector.config
    sr = rec.sample_rate
    frames = frame_indices(rec.n_samples, cfg.framer, sr)
    extract = make_frame_extractor(detector)
    x = car_filter(rec.samples)
    w = cfg.framer.window_samples(sr)
    X = np.empty((len(frames), len(detector.selected)))
    for c in range(0, len(frames), _BATCH):
        windows = np.stack([x[s:s + w] for s, _ in frames[c:c + _BATCH]])
        X[c:c + _BATCH] = extract.batch(windows)
    t_end = np.array([(e - 1) / sr for _, e in frames])
    return t_end, X


def decision_trace(detector: TrainedDetector, rec: Recording, time_offset: float = 0.0) -> DecisionTrace:
    """Offline counterpart of :func:`iter_decisions`; same numbers, batched."""
    t_end, X = selected_features(detector, rec)
    p_ic = posterior_batch(detector.classifier, X)[:, CLASSES.index(IC)]
    return run_trace(p_ic, detector.alpha, detector.th, t=t_end + time_offset)


@dataclass(frozen=True, eq=False)
class Evaluation:
    report: Report
    trace: DecisionTrace
    labels: LabelTimeline
    trials: TrialScores | None
    segment: Segment


def evaluate(detector: TrainedDetector, session: SessionData, runs=None,
             config: PipelineConfig | None = None) -> Evaluation:
    """Trace the test runs and score them.

    ``config`` overrides the labeling settings (mode, EMG) used for the
    ground truth; by default the model's own config is used.
    """
    cfg = config or detector.config
    seg = select_runs(session.recording, runs or cfg.test_runs)
    trace = decision_trace(detector, seg.recording, seg.time_offset)
    labels = segment_labels(session, seg, cfg)
    trials = None
    if cfg.mode is LabelMode.PREPARATION:
        trials = score_preparation_trials(trace, seg.recording.events, seg.recording.sample_rate,
                                          time_offset=seg.time_offset)
    report = make_report(detector.config.feature_method, trace, labels, trials,
                         alpha=detector.alpha, th=detector.th, n_selected=len(detector.selected))
    return Evaluation(report, trace, labels, trials, seg)


@dataclass
class StreamStats:
    frames: int = 0
    signal_seconds: float = 0.0
    wall_seconds: float = 0.0

    @property
    def real_time_factor(self) -> float:
        return self.signal_seconds / self.wall_seconds if self.wall_seconds > 0 else float("inf")


def stream(detector: TrainedDetector, session: SessionData, runs=None,
           emit: Callable[[FrameDecision], None] | None = None) -> StreamStats:
    """Replay the selected runs (all when ``runs == 'all'``) and time it."""
    rec = session.recording
    if runs == "all":
        seg_rec, offset = rec, 0.0
    else:
        seg = select_runs(rec, runs or detector.config.test_runs)
        seg_rec, offset = seg.recording, seg.time_offset
    stats = StreamStats(signal_seconds=seg_rec.duration)
    t0 = time.perf_counter()
    for d in iter_decisions(detector, seg_rec, offset):
        stats.frames += 1
        if emit is not None:
            emit(d)
    stats.wall_seconds = time.perf_counter() - t0
    return stats
