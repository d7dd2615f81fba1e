import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from randgen import random_dtype
from zipcol.errors import FormatError
from zipcol.metadata import Tag, iter_tlv, parse_dtype, serialize_dtype, tlv


@settings(max_examples=200, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_dtype_round_trip(seed):
    dt = random_dtype(np.random.default_rng(seed), 4)
    assert parse_dtype(serialize_dtype(dt)) == dt


def test_tlv_framing():
    buf = tlv(Tag.NAME, b"col") + tlv(Tag.COLUMN, tlv(Tag.NAME, b"x"))
    assert buf[:5] == bytes([0x01, 3, 0, 0, 0])
    recs = list(iter_tlv(buf))
    assert [(t, p) for t, p, _ in recs] == [(Tag.NAME, b"col"), (Tag.COLUMN, tlv(Tag.NAME, b"x"))]
    assert recs[1][2] == 13


@pytest.mark.parametrize("raw", [b"\x01\x05\x00\x00\x00ab", b"\x01\x00"])
def test_tlv_truncation(raw):
    with pytest.raises(FormatError):
        list(iter_tlv(raw))


@pytest.mark.parametrize("raw", [b"", b"\xee\x00", b"\x04\x00\x00"])
def test_bad_dtype_bytes(raw):
    with pytest.raises(FormatError):
        parse_dtype(raw)
