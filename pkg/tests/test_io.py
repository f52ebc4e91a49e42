import numpy as np
import pytest

from incdetect.io import (
    DuplicateChannelError,
    Event,
    EventCode,
    EventRangeError,
    MalformedHeaderError,
    Montage,
    RaggedRowError,
    Recording,
    RecordingFormatError,
    read_recording,
    run_bounds,
    write_recording,
)


def _rec(rng, n=200, ch=("A", "B", "C")):
    events = [Event(0, EventCode.RUN_START), Event(10, EventCode.INC_STAT_ON),
              Event(10, EventCode.RUN_START), Event(n - 1, EventCode.RUN_END)]
    return Recording(512, ch, rng.standard_normal((n, len(ch))) * 30, events)


def test_round_trip_exact(tmp_path, rng):
    rec = _rec(rng)
    write_recording(rec, tmp_path / "s.csv", tmp_path / "e.csv")
    back = read_recording(tmp_path / "s.csv", tmp_path / "e.csv")
    assert back.sample_rate == rec.sample_rate
    assert back.channels == rec.channels
    # six decimals on disk
    assert np.max(np.abs(back.samples - rec.samples)) <= 1e-6
    assert back.events == rec.events
    # a second trip is lossless
    write_recording(back, tmp_path / "s2.csv", tmp_path / "e2.csv")
    again = read_recording(tmp_path / "s2.csv", tmp_path / "e2.csv")
    assert np.array_equal(again.samples, back.samples)


def test_write_is_byte_deterministic(tmp_path, rng):
    rec = _rec(rng)
    write_recording(rec, tmp_path / "a.csv", tmp_path / "ae.csv")
    write_recording(rec, tmp_path / "b.csv", tmp_path / "be.csv")
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    assert (tmp_path / "ae.csv").read_bytes() == (tmp_path / "be.csv").read_bytes()


def test_events_sorted_with_code_tiebreak(rng):
    rec = _rec(rng)
    at10 = [e.code for e in rec.events if e.sample_index == 10]
    assert at10 == [EventCode.INC_STAT_ON, EventCode.RUN_START]


def test_samples_read_only(rng):
    rec = _rec(rng)
    with pytest.raises(ValueError):
        rec.samples[0, 0] = 1.0


def test_duplicate_channel_rejected(rng):
    with pytest.raises(DuplicateChannelError):
        Recording(512, ("A", "A"), np.zeros((4, 2)))


def test_event_out_of_range(rng):
    with pytest.raises(EventRangeError):
        Recording(512, ("A", "B"), np.zeros((4, 2)), [Event(4, EventCode.RUN_END)])


def test_column_mismatch(rng):
    with pytest.raises(RaggedRowError):
        Recording(512, ("A", "B"), np.zeros((4, 3)))


def test_bad_header(tmp_path):
    (tmp_path / "s.csv").write_text("sr=512\nA,B\n1,2\n")
    (tmp_path / "e.csv").write_text("sample_index,code\n")
    with pytest.raises(MalformedHeaderError):
        read_recording(tmp_path / "s.csv", tmp_path / "e.csv")


def test_ragged_row_reports_line(tmp_path, rng):
    write_recording(_rec(rng), tmp_path / "s.csv", tmp_path / "e.csv")
    lines = (tmp_path / "s.csv").read_text().splitlines()
    lines[5] = lines[5] + ",1.0"
    (tmp_path / "s.csv").write_text("\n".join(lines) + "\n")
    with pytest.raises(RaggedRowError, match="line 6"):
        read_recording(tmp_path / "s.csv", tmp_path / "e.csv")


def test_non_numeric_value(tmp_path, rng):
    write_recording(_rec(rng), tmp_path / "s.csv", tmp_path / "e.csv")
    lines = (tmp_path / "s.csv").read_text().splitlines()
    lines[4] = "x," + ",".join(lines[4].split(",")[1:])
    (tmp_path / "s.csv").write_text("\n".join(lines) + "\n")
    with pytest.raises(RecordingFormatError, match="non-numeric"):
        read_recording(tmp_path / "s.csv", tmp_path / "e.csv")


def test_unknown_event_code(tmp_path, rng):
    write_recording(_rec(rng), tmp_path / "s.csv", tmp_path / "e.csv")
    with open(tmp_path / "e.csv", "a") as fh:
        fh.write("3,BOGUS\n")
    with pytest.raises(RecordingFormatError):
        read_recording(tmp_path / "s.csv", tmp_path / "e.csv")


def test_montages():
    assert len(Montage.mc()) == 16 and len(Montage.fpc()) == 16
    with pytest.raises(ValueError):
        Montage("Mc", ("A",))
    with pytest.raises(ValueError):
        Montage.by_name("nope")
    assert Montage.custom(["X", "Y"]).labels == ("X", "Y")


def test_crop_reindexes_events(rng):
    rec = _rec(rng)
    sub = rec.crop(10, 100)
    assert sub.n_samples == 90
    assert [e.sample_index for e in sub.events] == [0, 0]


def test_run_bounds(rng):
    rec = Recording(512, ("A", "B"), np.zeros((20, 2)),
                    [Event(0, EventCode.RUN_START), Event(9, EventCode.RUN_END),
                     Event(10, EventCode.RUN_START), Event(19, EventCode.RUN_END)])
    assert run_bounds(rec) == [(0, 10), (10, 20)]
