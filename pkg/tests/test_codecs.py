import zlib

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from randgen import random_array, PRIMITIVES
from zipcol.arrays import DataType, Kind, array_equal, fixed_size_list, from_pylist, int32, to_pylist, uint8, uint64, utf8
from zipcol.codecs import (
    FULLZIP,
    MINIBLOCK,
    BlockAlgorithm,
    ByteAlignedLengths,
    CodecDescriptor,
    CodecId,
    Sparsity,
    Transparency,
    _rle_compress,
    _rle_compress_many,
    _rle_decompress,
    _rle_decompress_many,
    decode,
    decode_one,
    encode,
    pack_bits,
    resolve_codec,
    unpack_bits,
)
from zipcol.errors import CodecUnavailableError, DecodeError, IllegalCodecError, UnsupportedOperationError


def naive_pack(values, width):
    acc = 0
    for i, v in enumerate(values):
        acc |= int(v) << (i * width)
    return acc.to_bytes(-(-len(values) * width // 8), "little")


@settings(max_examples=200, deadline=None)
@given(width=st.integers(1, 64), data=st.data())
def test_pack_bits_matches_naive_writer(width, data):
    values = data.draw(st.lists(st.integers(0, 2**width - 1), max_size=70))
    arr = np.array(values, dtype=np.uint64)
    packed = pack_bits(arr, width)
    assert packed == naive_pack(values, width)
    assert unpack_bits(packed, width, len(values)).tolist() == values


def test_bitpack_small_values_use_four_bits():
    a = from_pylist(list(range(16)) * 4, uint64(False))
    buf = encode(a, "bitpack")
    assert buf.descriptor.bit_width == 4
    assert len(buf.data) == 32
    assert array_equal(decode(buf, a.dtype), a)


def test_bitpack_decode_one():
    buf = encode(from_pylist([3, 9, 12], uint64(False)), "bitpack")
    assert buf.descriptor.bit_width == 4
    assert decode_one(buf, uint64(False), 1) == 9


def test_bitpack_signed_values_zigzag():
    a = from_pylist([-3, 0, 2, -1], int32(False))
    buf = encode(a, "bitpack")
    assert buf.descriptor.bit_width == 3
    assert to_pylist(decode(buf, a.dtype)) == [-3, 0, 2, -1]


def test_bitpack_in_fullzip_is_byte_aligned_per_value():
    a = from_pylist([[1, 2, 3]] * 4, fixed_size_list(uint8(False), 3))
    c = resolve_codec("bitpack", a, FULLZIP)
    assert c.value_bits % 8 == 0
    assert resolve_codec("bitpack", a, MINIBLOCK).value_bits == 6


def test_bitpack_rejects_floats():
    with pytest.raises(IllegalCodecError):
        encode(from_pylist([1.0], DataType(Kind.FLOAT32, False)), "bitpack")


def test_dictionary_example():
    a = from_pylist(["a", "b", "a", "a"], utf8(False))
    c = resolve_codec("dictionary", a)
    assert to_pylist(c.dictionary) == ["a", "b"]
    assert c.indices(a).tolist() == [0, 1, 0, 0]
    buf = c.encode(a)
    assert to_pylist(decode(buf, a.dtype)) == ["a", "b", "a", "a"]
    assert decode_one(buf, a.dtype, 1) == "b"


def test_truncated_buffer_raises_decode_error():
    buf = encode(from_pylist(list(range(100)), uint64(False)), "bitpack")
    with pytest.raises(DecodeError):
        unpack_bits(buf.data[:-1], buf.descriptor.bit_width, 100)
    with pytest.raises(DecodeError):
        ByteAlignedLengths(2).unpack(b"\x01\x00\x02", 2)


def test_chunked_block_is_opaque():
    a = from_pylist(["xx", "yyyy"], utf8(False))
    buf = encode(a, "chunked:zlib")
    assert buf.descriptor.transparency is Transparency.OPAQUE
    with pytest.raises(UnsupportedOperationError):
        decode_one(buf, a.dtype, 0)
    assert to_pylist(decode(buf, a.dtype)) == ["xx", "yyyy"]


def test_chunked_block_rejected_by_fullzip():
    a = from_pylist(["xx"], utf8(False))
    with pytest.raises(IllegalCodecError):
        resolve_codec("chunked:rle", a, FULLZIP)


def test_taxonomy():
    assert CodecDescriptor(CodecId.PER_VALUE_BLOCK).sparsity is Sparsity.SPARSE
    assert CodecDescriptor(CodecId.BITPACK).sparsity is Sparsity.DENSE
    assert CodecDescriptor(CodecId.DICTIONARY).transparency is Transparency.TRANSPARENT


@pytest.mark.parametrize("desc", [
    CodecDescriptor(CodecId.PASSTHROUGH),
    CodecDescriptor(CodecId.BITPACK, bit_width=13),
    CodecDescriptor(CodecId.BYTE_ALIGNED_LENGTHS, byte_width=3),
    CodecDescriptor(CodecId.DICTIONARY, index=CodecDescriptor(CodecId.BITPACK, bit_width=2)),
    CodecDescriptor(CodecId.CHUNKED_BLOCK, algorithm=1),
])
def test_descriptor_bytes_round_trip(desc):
    assert CodecDescriptor.from_bytes(desc.to_bytes()) == desc


@pytest.mark.parametrize("raw", [b"", b"\x01", b"\x09", b"\x00\x00"])
def test_bad_descriptors(raw):
    with pytest.raises(DecodeError):
        CodecDescriptor.from_bytes(raw)


def test_per_value_zlib_values_are_independent_streams():
    a = from_pylist(["hello" * 10, "", "abc"], utf8(False))
    buf = encode(a, "block:zlib")
    lo, n = buf.extent(0)
    assert zlib.decompress(buf.data[lo : lo + n]) == b"hello" * 10
    assert decode_one(buf, a.dtype, 2) == "abc"


@settings(max_examples=100, deadline=None)
@given(blobs=st.lists(st.binary(max_size=600), max_size=20))
def test_vectorized_rle_matches_per_value(blobs):
    data = np.frombuffer(b"".join(blobs), dtype=np.uint8)
    offsets = np.zeros(len(blobs) + 1, dtype=np.int64)
    np.cumsum([len(b) for b in blobs], out=offsets[1:])
    packed, ext = _rle_compress_many(data, offsets)
    assert packed == b"".join(_rle_compress(b) for b in blobs)
    plain, off = _rle_decompress_many(packed, ext)
    assert plain == b"".join(blobs)
    assert [_rle_decompress(_rle_compress(b)) for b in blobs] == blobs


@settings(max_examples=120, deadline=None)
@given(seed=st.integers(0, 2**32 - 1),
       request=st.sampled_from([None, "bitpack", "dictionary", "block:rle", "block:zlib", "chunked:rle", "chunked:zlib"]))
def test_codec_round_trip(seed, request):
    rng = np.random.default_rng(seed)
    roll = rng.random()
    if roll < 0.5:
        dtype = DataType(PRIMITIVES[rng.integers(len(PRIMITIVES))], False)
    elif roll < 0.8:
        dtype = DataType(Kind.UTF8 if rng.random() < 0.5 else Kind.BINARY, False)
    else:
        dtype = fixed_size_list(DataType(PRIMITIVES[rng.integers(8)], False), int(rng.integers(1, 4)), False)
    a = random_array(rng, dtype, int(rng.integers(0, 60)), 0.0)
    try:
        codec = resolve_codec(request, a)
    except IllegalCodecError:
        assert request == "bitpack"
        return
    buf = codec.encode(a)
    assert array_equal(codec.decode(buf), a)
    if codec.transparency is Transparency.TRANSPARENT and a.length:
        i = int(rng.integers(a.length))
        assert codec.decode_one(buf, i) == to_pylist(a)[i]


def test_reserved_algorithms_are_unavailable():
    with pytest.raises(CodecUnavailableError):
        encode(from_pylist(["x"], utf8(False)), f"block:{BlockAlgorithm.LZ4.name.lower()}")
