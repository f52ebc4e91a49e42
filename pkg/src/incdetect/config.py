"""Pipeline configuration: one flat dataclass, validated up front, stored as JSON."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, fields
from pathlib import Path

from .decision import CANONICAL_ALPHAS, CANONICAL_THRESHOLDS
from .dsp import CANONICAL_BANDS, BandSpec
from .features import EntropySpec, FramerSpec
from .io import Montage
from .labeling import CLOSING_SECONDS, EMG_SMOOTH_SECONDS, LabelMode


class ConfigError(ValueError):
    pass


FEATURE_METHODS = ("entropy", "psd")


@dataclass(frozen=True)
class PipelineConfig:
    montage: str = "FPc"
    bands: tuple = tuple((b.low, b.high) for b in CANONICAL_BANDS)
    window_seconds: float = 1.5
    shift_seconds: float = 0.125
    entropy_bins: int = 32
    cva_tau: float = 0.8
    cva_floor: int = 3
    cva_cap: int = 12
    cva_shrinkage: float = 1e-3
    n_prototypes: int = 4
    learning_rate: float = 0.01
    epochs: int = 20
    train_variances: bool = False
    seed: int = 0
    grid_alpha: tuple = CANONICAL_ALPHAS
    grid_th: tuple = CANONICAL_THRESHOLDS
    emg_smooth_seconds: float = EMG_SMOOTH_SECONDS
    emg_closing_seconds: float = CLOSING_SECONDS
    emg_threshold_left: float | None = None   # None: take the session's value
    emg_threshold_right: float | None = None
    labeling_mode: str = LabelMode.EXECUTION.value
    feature_method: str = "entropy"
    train_runs: tuple = (1, 2, 3)
    test_runs: tuple = (4, 5)

    def __post_init__(self):
        for name in ("bands", "grid_alpha", "grid_th", "train_runs", "test_runs"):
            object.__setattr__(self, name, _tupleize(getattr(self, name)))
        self.validate()

    # -- validation -------------------------------------------------------------
    def validate(self) -> None:
        try:
            Montage.by_name(self.montage)
        except (KeyError, ValueError) as exc:
            raise ConfigError(f"unknown montage {self.montage!r}") from exc
        if not self.bands:
            raise ConfigError("at least one band is required")
        for b in self.bands:
            if len(b) != 2:
                raise ConfigError(f"band {b!r} must be (low, high)")
            try:
                BandSpec(float(b[0]), float(b[1])).check(512)
            except ValueError as exc:
                raise ConfigError(str(exc)) from exc
        _check(0 < self.shift_seconds <= self.window_seconds <= 10,
               "need 0 < shift_seconds <= window_seconds <= 10")
        _check(2 <= self.entropy_bins <= 4096, "entropy_bins must lie in [2, 4096]")
        _check(0 < self.cva_tau <= 1, "cva_tau must lie in (0, 1]")
        _check(1 <= self.cva_floor <= self.cva_cap, "need 1 <= cva_floor <= cva_cap")
        _check(0 <= self.cva_shrinkage < 1, "cva_shrinkage must lie in [0, 1)")
        _check(1 <= self.n_prototypes <= 64, "n_prototypes must lie in [1, 64]")
        _check(0 <= self.learning_rate <= 1, "learning_rate must lie in [0, 1]")
        _check(0 <= self.epochs <= 10_000, "epochs must lie in [0, 10000]")
        _check(isinstance(self.seed, int) and self.seed >= 0, "seed must be a non-negative integer")
        _check(bool(self.grid_alpha) and all(0 <= a < 1 for a in self.grid_alpha),
               "grid_alpha values must lie in [0, 1)")
        _check(bool(self.grid_th) and all(0.5 < t < 1 for t in self.grid_th),
               "grid_th values must lie in (0.5, 1)")
        _check(0 < self.emg_smooth_seconds <= 5, "emg_smooth_seconds must lie in (0, 5]")
        _check(0 <= self.emg_closing_seconds <= 5, "emg_closing_seconds must lie in [0, 5]")
        for t in (self.emg_threshold_left, self.emg_threshold_right):
            _check(t is None or t > 0, "EMG thresholds must be positive")
        _check(self.labeling_mode in {m.value for m in LabelMode},
               f"labeling_mode must be one of {[m.value for m in LabelMode]}")
        _check(self.feature_method in FEATURE_METHODS, f"feature_method must be one of {FEATURE_METHODS}")
        _check(bool(self.train_runs) and bool(self.test_runs), "train_runs and test_runs must be non-empty")
        _check(all(isinstance(r, int) and r >= 1 for r in self.train_runs + self.test_runs),
               "run numbers start at 1")
        _check(not set(self.train_runs) & set(self.test_runs), "train and test runs overlap")

    # -- derived specs ------------------------------------------------------------
    @property
    def band_specs(self) -> tuple[BandSpec, ...]:
        return tuple(BandSpec(float(lo), float(hi)) for lo, hi in self.bands)

    @property
    def framer(self) -> FramerSpec:
        return FramerSpec(self.window_seconds, self.shift_seconds)

    @property
    def entropy(self) -> EntropySpec:
        return EntropySpec(self.entropy_bins)

    @property
    def mode(self) -> LabelMode:
        return LabelMode(self.labeling_mode)

    # -- serialization ------------------------------------------------------------
    def to_dict(self) -> dict:
        d = asdict(self)
        for k, v in d.items():
            if isinstance(v, tuple):
                d[k] = [list(x) if isinstance(x, tuple) else x for x in v]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "PipelineConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(d) - known)
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        try:
            return cls(**d)
        except ConfigError:
            raise
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "PipelineConfig":
        try:
            d = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from exc
        if not isinstance(d, dict):
            raise ConfigError("config must be a JSON object")
        return cls.from_dict(d)

    def save(self, path) -> None:
        Path(path).write_text(self.to_json())

    @classmethod
    def load(cls, path) -> "PipelineConfig":
        return cls.from_json(Path(path).read_text())

    def replace(self, **changes) -> "PipelineConfig":
        d = asdict(self)
        d.update(changes)
        return self.from_dict(d)


def _tupleize(v):
    if isinstance(v, (list, tuple)):
        return tuple(_tupleize(x) for x in v)
    return v


def _check(ok: bool, msg: str) -> None:
    if not ok:
        raise ConfigError(msg)
