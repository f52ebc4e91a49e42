"""Entropy-based detection of intentional control (IC) vs intentional
non-control (INC) states from multichannel EEG.

The pipeline: common-average reference, per-window zero-lag band-pass,
Hilbert envelope, normalized Shannon entropy per channel-band pair,
canonical-variate feature selection, a Gaussian-prototype classifier and an
exponential evidence integrator with hysteresis.
"""

from .io import (
    IC,
    INC,
    EXCLUDED,
    Event,
    EventCode,
    Montage,
    Recording,
    read_recording,
    write_recording,
)

__version__ = "0.1.0"

__all__ = [
    "IC",
    "INC",
    "EXCLUDED",
    "Event",
    "EventCode",
    "Montage",
    "Recording",
    "read_recording",
    "write_recording",
]
