"""Recording/event data model, the plain-text on-disk formats, and montages.

Signal file layout::

    #sr=512
    Fz,FC3,FC1,...
    0.123456,-1.000000,...

Events live in a separate two-column file with header ``sample_index,code``.
Amplitudes are microvolts by convention; the format itself is unit-agnostic.
"""

from __future__ import annotations

import enum
import io as _stdio
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

# Frame/class labels shared by labeling, decision and evaluation.
INC = 0
IC = 1
EXCLUDED = -1

LABEL_NAMES = {INC: "INC", IC: "IC", EXCLUDED: "EXCLUDED"}

SAMPLE_FORMAT = "%.6f"
_SR_HEADER = re.compile(r"^#sr=(\d+)\s*$")
EVENTS_HEADER = "sample_index,code"


class RecordingFormatError(ValueError):
    """Base class for malformed recording or event files."""


class MalformedHeaderError(RecordingFormatError):
    pass


class RaggedRowError(RecordingFormatError):
    pass


class EventRangeError(RecordingFormatError):
    pass


class DuplicateChannelError(RecordingFormatError):
    pass


class EventCode(enum.IntEnum):
    # Declaration order is the tie-break order for events sharing a sample.
    INC_STAT_ON = 0
    IC_CUE_ON = 1
    IC_STAT_ON = 2
    INC_CUE_ON = 3
    RUN_START = 4
    RUN_END = 5


PHASE_CODES = (
    EventCode.INC_STAT_ON,
    EventCode.IC_CUE_ON,
    EventCode.IC_STAT_ON,
    EventCode.INC_CUE_ON,
)


@dataclass(frozen=True, order=True)
class Event:
    sample_index: int
    code: EventCode

    def __post_init__(self):
        object.__setattr__(self, "sample_index", int(self.sample_index))
        object.__setattr__(self, "code", EventCode(self.code))


def sort_events(events: Iterable[Event]) -> tuple[Event, ...]:
    return tuple(sorted(events, key=lambda e: (e.sample_index, int(e.code))))


MC_LABELS = ("Fz", "FC3", "FC1", "FCz", "FC2", "FC4",
             "C3", "C1", "Cz", "C2", "C4",
             "CP3", "CP1", "CPz", "CP2", "CP4")
FPC_LABELS = ("F3", "F1", "Fz", "F2", "F4", "FCz",
              "C3", "C1", "Cz", "C2", "C4",
              "P3", "P1", "Pz", "P2", "P4")


def _check_unique(labels: Sequence[str]) -> None:
    seen = set()
    for lab in labels:
        if lab in seen:
            raise DuplicateChannelError(f"duplicate channel label {lab!r}")
        seen.add(lab)


@dataclass(frozen=True)
class Montage:
    """Named ordered electrode set (``Mc``, ``FPc`` or ``custom``)."""

    name: str
    labels: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "labels", tuple(str(x) for x in self.labels))
        if not self.labels:
            raise ValueError("montage needs at least one channel")
        _check_unique(self.labels)
        if self.name == "Mc" and self.labels != MC_LABELS:
            raise ValueError("Mc montage must use the canonical Mc labels")
        if self.name == "FPc" and self.labels != FPC_LABELS:
            raise ValueError("FPc montage must use the canonical FPc labels")
        if self.name not in ("Mc", "FPc", "custom"):
            raise ValueError(f"unknown montage name {self.name!r}")

    @classmethod
    def mc(cls) -> "Montage":
        return cls("Mc", MC_LABELS)

    @classmethod
    def fpc(cls) -> "Montage":
        return cls("FPc", FPC_LABELS)

    @classmethod
    def custom(cls, labels: Sequence[str]) -> "Montage":
        return cls("custom", tuple(labels))

    @classmethod
    def by_name(cls, name: str) -> "Montage":
        if name == "Mc":
            return cls.mc()
        if name == "FPc":
            return cls.fpc()
        raise ValueError(f"no standard montage named {name!r}")

    def __len__(self) -> int:
        return len(self.labels)


@dataclass(frozen=True, eq=False)
class Recording:
    """Immutable multichannel recording.

    ``samples`` has shape (n_samples, n_channels) and is stored read-only.
    """

    sample_rate: int
    channels: tuple[str, ...]
    samples: np.ndarray
    events: tuple[Event, ...] = field(default=())

    def __post_init__(self):
        if int(self.sample_rate) != self.sample_rate or self.sample_rate <= 0:
            raise ValueError(f"sample_rate must be a positive integer, got {self.sample_rate}")
        object.__setattr__(self, "sample_rate", int(self.sample_rate))
        channels = tuple(str(c) for c in self.channels)
        _check_unique(channels)
        object.__setattr__(self, "channels", channels)

        x = np.array(self.samples, dtype=np.float64, order="C")
        if x.ndim != 2:
            raise ValueError("samples must be a 2-D matrix [n_samples x n_channels]")
        if x.shape[1] != len(channels):
            raise RaggedRowError(
                f"samples have {x.shape[1]} columns but {len(channels)} channel labels"
            )
        x.setflags(write=False)
        object.__setattr__(self, "samples", x)

        events = sort_events(self.events)
        n = x.shape[0]
        for ev in events:
            if not 0 <= ev.sample_index < n:
                raise EventRangeError(
                    f"event out of range: {ev.code.name} at {ev.sample_index} (n_samples={n})"
                )
        object.__setattr__(self, "events", events)

    @property
    def n_samples(self) -> int:
        return self.samples.shape[0]

    @property
    def n_channels(self) -> int:
        return self.samples.shape[1]

    @property
    def duration(self) -> float:
        return self.n_samples / self.sample_rate

    def events_of(self, code: EventCode) -> list[Event]:
        return [e for e in self.events if e.code == code]

    def crop(self, start: int, stop: int) -> "Recording":
        """Samples [start, stop) with events re-indexed; out-of-range events drop."""
        start, stop = int(start), int(stop)
        if not 0 <= start < stop <= self.n_samples:
            raise ValueError(f"invalid crop [{start}, {stop}) for {self.n_samples} samples")
        events = [Event(e.sample_index - start, e.code)
                  for e in self.events if start <= e.sample_index < stop]
        return Recording(self.sample_rate, self.channels, self.samples[start:stop], events)

    def select_channels(self, labels: Sequence[str]) -> "Recording":
        idx = [self.channels.index(lab) for lab in labels]
        return Recording(self.sample_rate, tuple(labels), self.samples[:, idx], self.events)


def run_bounds(rec: Recording) -> list[tuple[int, int]]:
    """(start, stop) sample ranges of runs delimited by RUN_START/RUN_END.

    RUN_END marks the last sample of its run, so ``stop`` is one past it.
    """
    starts = [e.sample_index for e in rec.events if e.code == EventCode.RUN_START]
    ends = [e.sample_index for e in rec.events if e.code == EventCode.RUN_END]
    if len(starts) != len(ends):
        raise ValueError("unbalanced RUN_START/RUN_END events")
    bounds = []
    for s, e in zip(starts, ends):
        if e < s:
            raise ValueError(f"RUN_END at {e} precedes RUN_START at {s}")
        bounds.append((s, e + 1))
    return bounds


def write_recording(rec: Recording, signal_path, events_path) -> None:
    """Write ``rec`` as a signal file plus an events file.

    Output is byte-deterministic for identical input.
    """
    buf = _stdio.StringIO()
    buf.write(f"#sr={rec.sample_rate}\n")
    buf.write(",".join(rec.channels) + "\n")
    if rec.n_samples:
        np.savetxt(buf, rec.samples, fmt=SAMPLE_FORMAT, delimiter=",")
    Path(signal_path).write_text(buf.getvalue(), encoding="ascii", newline="\n")

    lines = [EVENTS_HEADER]
    lines += [f"{e.sample_index},{e.code.name}" for e in rec.events]
    Path(events_path).write_text("\n".join(lines) + "\n", encoding="ascii", newline="\n")


def _locate_bad_row(lines: list[str], n_cols: int, first_line_no: int) -> RecordingFormatError:
    for i, line in enumerate(lines):
        if not line.strip():
            continue
        parts = line.split(",")
        if len(parts) != n_cols:
            return RaggedRowError(
                f"line {first_line_no + i}: expected {n_cols} values, found {len(parts)}"
            )
        for p in parts:
            try:
                float(p)
            except ValueError:
                return RecordingFormatError(
                    f"line {first_line_no + i}: non-numeric value {p.strip()!r}"
                )
    return RecordingFormatError("unparseable signal body")


def read_events(events_path) -> list[Event]:
    text = Path(events_path).read_text(encoding="ascii")
    rows = text.splitlines()
    if not rows or rows[0].strip() != EVENTS_HEADER:
        raise MalformedHeaderError(f"events file must start with {EVENTS_HEADER!r}")
    events = []
    for n, row in enumerate(rows[1:], start=2):
        if not row.strip():
            continue
        parts = row.split(",")
        if len(parts) != 2:
            raise RaggedRowError(f"events line {n}: expected 2 columns, found {len(parts)}")
        try:
            idx = int(parts[0])
            code = EventCode[parts[1].strip()]
        except (ValueError, KeyError) as exc:
            raise RecordingFormatError(f"events line {n}: cannot parse {row!r}") from exc
        events.append(Event(idx, code))
    return events


def read_recording(signal_path, events_path) -> Recording:
    """Parse a signal file and its events file into a :class:`Recording`."""
    text = Path(signal_path).read_text(encoding="ascii")
    lines = text.splitlines()
    if len(lines) < 2:
        raise MalformedHeaderError("signal file needs '#sr=<Hz>' and a label row")
    m = _SR_HEADER.match(lines[0])
    if not m:
        raise MalformedHeaderError(f"first line must be '#sr=<Hz>', got {lines[0]!r}")
    sample_rate = int(m.group(1))
    if sample_rate <= 0:
        raise MalformedHeaderError("sample rate must be positive")
    labels = [s.strip() for s in lines[1].split(",")]
    if any(not s for s in labels):
        raise MalformedHeaderError("empty channel label in header")
    _check_unique(labels)

    body = lines[2:]
    n_cols = len(labels)
    if any(line.strip() for line in body):
        try:
            samples = np.loadtxt(_stdio.StringIO("\n".join(body)), delimiter=",",
                                 dtype=np.float64, ndmin=2)
        except ValueError:
            raise _locate_bad_row(body, n_cols, 3) from None
        if samples.shape[1] != n_cols:
            raise RaggedRowError(
                f"rows have {samples.shape[1]} values but header lists {n_cols} labels"
            )
    else:
        samples = np.zeros((0, n_cols))

    events = read_events(events_path)
    return Recording(sample_rate, tuple(labels), samples, events)
