import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from randgen import random_array, random_dtype
from zipcol.arrays import Kind, array_equal, from_pylist, list_, struct, to_pylist, uint32, utf8
from zipcol.errors import UnsupportedOperationError
from zipcol.packing import pack_struct, packed_dtype, packed_width, unpack_struct

PAIR = struct([("a", uint32(False)), ("b", uint32(False))])


def test_two_uint32_fields_pack_to_eight_bytes():
    packed = pack_struct(from_pylist([{"a": 1, "b": 2}], PAIR))
    assert packed_width(PAIR) == 8
    assert packed.dtype.kind == Kind.FIXED_SIZE_LIST
    assert bytes(to_pylist(packed)[0]).hex() == "0100000002000000"


def test_nullable_fields_get_a_bitmap():
    dt = struct([("a", uint32()), ("s", utf8())])
    rows = [{"a": 5, "s": None}, None, {"a": None, "s": "hey"}]
    packed = pack_struct(from_pylist(rows, dt))
    assert packed.dtype.kind == Kind.BINARY
    first = bytes(packed.data[int(packed.offsets[0]) : int(packed.offsets[1])])
    assert first == bytes([0b01]) + (5).to_bytes(4, "little") + bytes(4)
    assert to_pylist(unpack_struct(packed, dt)) == rows


def test_nested_fields_are_rejected():
    with pytest.raises(UnsupportedOperationError):
        packed_dtype(struct([("l", list_(uint32()))]))
    with pytest.raises(UnsupportedOperationError):
        packed_width(uint32())


@settings(max_examples=120, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), density=st.sampled_from([0.0, 0.2, 1.0]))
def test_pack_round_trip(seed, density):
    rng = np.random.default_rng(seed)
    fields = []
    while len(fields) < int(rng.integers(1, 6)):
        ft = random_dtype(rng, 0)
        fields.append((f"f{len(fields)}", ft))
    dt = struct(fields, bool(rng.random() < 0.5))
    a = random_array(rng, dt, int(rng.integers(0, 200)), density)
    packed = pack_struct(a)
    assert packed.length == a.length
    w = packed_width(dt)
    if w is not None:
        assert packed.dtype.dimension == w
    assert array_equal(unpack_struct(packed, dt), a)
