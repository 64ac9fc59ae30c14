import pytest
from hypothesis import given, settings, strategies as st

from chaffsearch import wire


class TestEncodeFrame:
    def test_layout(self):
        frame = wire.encode_frame(wire.REQUEST, b"abc")
        assert frame[0] == wire.REQUEST
        assert int.from_bytes(frame[1:9], "big") == 3
        assert frame[9:] == b"abc"

    def test_unknown_type_rejected(self):
        with pytest.raises(wire.FrameError):
            wire.encode_frame(99, b"")


class TestFrameReader:
    def test_single_frame(self):
        reader = wire.FrameReader()
        assert reader.feed(wire.encode_frame(wire.RESPONSE, b"hello")) == [
            (wire.RESPONSE, b"hello")
        ]

    def test_byte_at_a_time(self):
        reader = wire.FrameReader()
        frames = []
        for byte in wire.encode_frame(wire.HANDSHAKE, b"xy"):
            frames += reader.feed(bytes([byte]))
        assert frames == [(wire.HANDSHAKE, b"xy")]

    def test_two_frames_one_chunk(self):
        data = wire.encode_frame(wire.REQUEST, b"a") + wire.encode_frame(wire.ERROR, b"b")
        assert wire.FrameReader().feed(data) == [
            (wire.REQUEST, b"a"),
            (wire.ERROR, b"b"),
        ]

    def test_oversize_guard(self):
        reader = wire.FrameReader(max_payload=10)
        header = bytes([wire.REQUEST]) + (11).to_bytes(8, "big")
        with pytest.raises(wire.FrameError):
            reader.feed(header)

    def test_unknown_type_in_stream(self):
        with pytest.raises(wire.FrameError):
            wire.FrameReader().feed(b"\x63" + (0).to_bytes(8, "big"))

    @given(
        st.lists(
            st.tuples(
                st.sampled_from([wire.HANDSHAKE, wire.REQUEST, wire.RESPONSE, wire.ERROR]),
                st.binary(max_size=64),
            ),
            max_size=8,
        ),
        st.integers(1, 40),
    )
    @settings(max_examples=200, deadline=None)
    def test_round_trip_any_chunking(self, frames, chunk_size):
        stream = b"".join(wire.encode_frame(t, p) for t, p in frames)
        reader = wire.FrameReader()
        got = []
        for i in range(0, len(stream), chunk_size):
            got += reader.feed(stream[i : i + chunk_size])
        assert got == frames
        assert reader.pending() == 0
