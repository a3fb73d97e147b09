import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from softcam import pnm
from softcam.errors import FormatError


@given(arrays(np.uint8, st.tuples(st.integers(1, 20), st.integers(1, 20))))
def test_pgm_round_trip(img):
    assert np.array_equal(pnm.decode_pnm(pnm.encode_pnm(img)), img)


@given(arrays(np.uint8, st.tuples(st.integers(1, 9), st.integers(1, 9), st.just(3))))
def test_ppm_round_trip(img):
    assert np.array_equal(pnm.decode_pnm(pnm.encode_pnm(img)), img)


def test_header_comments_and_whitespace():
    buf = b"P5 # a comment\n# another\n 3\t2\n255\n" + bytes(range(6))
    assert pnm.decode_pnm(buf).tolist() == [[0, 1, 2], [3, 4, 5]]


def test_payload_starting_with_whitespace_byte():
    img = np.array([[10, 32], [9, 13]], dtype=np.uint8)
    assert np.array_equal(pnm.decode_pnm(pnm.encode_pnm(img)), img)


@pytest.mark.parametrize("buf", [b"P2\n1 1\n255\n0", b"P5\n2 2\n255\n\x00", b"P5\n2 2\n65535\n" + bytes(8),
                                 b"P5\nx 2\n255\n", b"P5\n2"])
def test_rejects_bad_files(buf):
    with pytest.raises(FormatError):
        pnm.decode_pnm(buf)


def test_file_round_trip(tmp_path):
    img = np.arange(12, dtype=np.uint8).reshape(3, 4)
    pnm.write_pnm(tmp_path / "a.pgm", img)
    assert np.array_equal(pnm.read_pnm(tmp_path / "a.pgm"), img)
