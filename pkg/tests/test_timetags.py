import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qcmux.timetags import EventStream, PhotonBatch, PhotonEvent, Origin, merge_streams, read_tags, shift, write_tags

from conftest import poisson_stream


def streams(max_len=40, max_t=10_000, channels=(1, 2, 3)):
    tag = st.tuples(st.sampled_from(channels), st.integers(0, max_t))
    return st.lists(tag, max_size=max_len).map(
        lambda tags: EventStream.from_unsorted([c for c, _ in tags], [t for _, t in tags], max_t)
    )


def test_merge_empty():
    s = merge_streams([])
    assert len(s) == 0


def test_merge_two_single_tags():
    a = EventStream.from_tags([(1, 5)], 10)
    b = EventStream.from_tags([(2, 3)], 10)
    assert merge_streams([a, b]).tags == [(2, 3), (1, 5)]


def test_merge_ties_break_on_channel_then_input_order():
    a = EventStream.from_tags([(2, 7), (3, 9)], 10)
    b = EventStream.from_tags([(1, 7), (3, 9)], 10)
    m = merge_streams([a, b])
    assert m.tags == [(1, 7), (2, 7), (3, 9), (3, 9)]


def test_merge_large_poisson_matches_full_sort(rng):
    a = poisson_stream(1e5, 10 ** 12, 1, rng)
    b = poisson_stream(1e5, 10 ** 12, 2, rng)
    assert len(a) > 90_000 and len(b) > 90_000
    m = merge_streams([a, b])
    assert np.all(np.diff(m.t) >= 0)
    oracle = sorted(list(a) + list(b), key=lambda tag: (tag.t, tag.channel))
    assert m.tags == oracle
    assert m.duration == max(a.duration, b.duration)


def test_merge_rejects_unsorted():
    good = EventStream.from_tags([(1, 1)], 5)
    bad = EventStream([1, 1], [5, 2], 10, check=False)
    with pytest.raises(ValueError, match="stream 1 is not sorted at index 1"):
        merge_streams([good, bad])


def test_constructor_rejects_unsorted_and_negative():
    with pytest.raises(ValueError, match="not sorted"):
        EventStream([1, 1], [5, 2], 10)
    with pytest.raises(ValueError, match="negative"):
        EventStream([1], [-1], 10)


def test_shift_forced_arithmetic():
    s = EventStream.from_tags([(1, 100)], 200)
    assert shift(s, 0) == s
    assert shift(s, 244_000).tags == [(1, 244_100)]


def test_shift_rejects_negative_result():
    with pytest.raises(ValueError):
        shift(EventStream.from_tags([(1, 100)]), -101)


def test_streams_are_immutable():
    s = EventStream.from_tags([(1, 100)])
    with pytest.raises(AttributeError):
        s.duration = 5
    with pytest.raises(ValueError):
        s.t[0] = 3


@given(streams(), streams())
def test_merge_conserves_tags(a, b):
    assert len(merge_streams([a, b])) == len(a) + len(b)


@given(streams(), streams(), st.integers(0, 10 ** 6))
def test_shift_commutes_with_merge(a, b, d):
    assert merge_streams([shift(a, d), shift(b, d)]) == shift(merge_streams([a, b]), d)


@given(streams())
def test_roundtrip(tmp_path_factory, s):
    p = tmp_path_factory.mktemp("tags") / "t.csv"
    write_tags(s, p)
    assert read_tags(p, duration=s.duration) == s


def test_empty_stream_writes_header_only(tmp_path):
    write_tags(EventStream.empty(), tmp_path / "e.csv")
    assert (tmp_path / "e.csv").read_bytes() == b"channel,t_ps\n"


def test_single_tag_line(tmp_path):
    write_tags(EventStream.from_tags([(1, 42)]), tmp_path / "one.csv")
    assert (tmp_path / "one.csv").read_bytes() == b"channel,t_ps\n1,42\n"


def test_roundtrip_million_tags_bit_exact(tmp_path):
    rng = np.random.default_rng(7)
    n = 10 ** 6
    s = EventStream.from_unsorted(rng.integers(0, 4, n), rng.integers(0, 2 ** 50, n), 2 ** 50)
    write_tags(s, tmp_path / "a.csv")
    back = read_tags(tmp_path / "a.csv", duration=s.duration)
    assert back == s
    write_tags(back, tmp_path / "b.csv")
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()


@pytest.mark.parametrize("body, line", [
    ("1,5\n1,x\n", 3),
    ("1,5\n2\n", 3),
    ("1,5,7\n", 2),
])
def test_malformed_line_reports_line_number(tmp_path, body, line):
    p = tmp_path / "bad.csv"
    p.write_text("channel,t_ps\n" + body)
    with pytest.raises(ValueError, match=f":{line}: malformed"):
        read_tags(p)


def test_non_monotone_file_rejected(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("channel,t_ps\n1,50\n1,40\n")
    with pytest.raises(ValueError, match=":3: timestamps not monotone"):
        read_tags(p)


def test_bad_header_rejected(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("ch,t\n1,5\n")
    with pytest.raises(ValueError, match="header"):
        read_tags(p)


def test_photon_batch_roundtrips_events():
    events = [PhotonEvent(1310.0, 5, Origin.SIGNAL), PhotonEvent(1550.0, 2, Origin.CLASSICAL)]
    batch = PhotonBatch.from_events(events)
    assert list(batch) == events
    assert list(batch.sorted())[0].t == 2
