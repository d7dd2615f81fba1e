"""Compressive encodings for leaf values.

Every codec is tagged with two properties:

transparent / opaque
    A transparent codec lets one value be decoded from its own byte
    extent. Opaque codecs need the whole buffer.
sparse / dense
    Dense codecs keep a fixed per-value footprint (so nulls need filler);
    sparse codecs only store what is present.

Full-zip pages only accept transparent codecs. ``ChunkedBlock`` is opaque
and is only legal inside miniblock chunks.

Descriptor wire format (little-endian)::

    Passthrough           0x00
    BitPack               0x01 bit_width:u8
    ByteAlignedLengths    0x02 byte_width:u8
    Dictionary            0x03 <index descriptor>
    PerValueBlock         0x04 algorithm:u8
    ChunkedBlock          0x05 algorithm:u8

Dictionary values travel separately as an auxiliary buffer (see
:func:`serialize_dictionary`).
"""

from __future__ import annotations

import enum
import struct
import zlib
from dataclasses import dataclass

import numpy as np

from zipcol.arrays import DataType, Kind, LogicalArray, fixed_bytes, from_fixed_bytes, take, to_pylist, uint32
from zipcol.errors import CodecUnavailableError, DecodeError, IllegalCodecError, UnsupportedOperationError


class CodecId(enum.IntEnum):
    PASSTHROUGH = 0
    BITPACK = 1
    BYTE_ALIGNED_LENGTHS = 2
    DICTIONARY = 3
    PER_VALUE_BLOCK = 4
    CHUNKED_BLOCK = 5


class Transparency(enum.Enum):
    TRANSPARENT = "transparent"
    OPAQUE = "opaque"


class Sparsity(enum.Enum):
    SPARSE = "sparse"
    DENSE = "dense"


class BlockAlgorithm(enum.IntEnum):
    RLE = 0
    ZLIB = 1
    LZ4 = 2  # reserved
    ZSTD = 3  # reserved


FULLZIP = "fullzip"
MINIBLOCK = "miniblock"

_TAXONOMY = {
    CodecId.PASSTHROUGH: (Transparency.TRANSPARENT, Sparsity.DENSE),
    CodecId.BITPACK: (Transparency.TRANSPARENT, Sparsity.DENSE),
    CodecId.BYTE_ALIGNED_LENGTHS: (Transparency.TRANSPARENT, Sparsity.DENSE),
    CodecId.DICTIONARY: (Transparency.TRANSPARENT, Sparsity.DENSE),
    CodecId.PER_VALUE_BLOCK: (Transparency.TRANSPARENT, Sparsity.SPARSE),
    CodecId.CHUNKED_BLOCK: (Transparency.OPAQUE, Sparsity.SPARSE),
}


@dataclass(frozen=True)
class CodecDescriptor:
    id: CodecId
    bit_width: int = 0
    byte_width: int = 0
    algorithm: int = 0
    index: CodecDescriptor | None = None
    aux: bytes = b""

    @property
    def transparency(self) -> Transparency:
        return _TAXONOMY[self.id][0]

    @property
    def sparsity(self) -> Sparsity:
        return _TAXONOMY[self.id][1]

    def to_bytes(self) -> bytes:
        if self.id == CodecId.PASSTHROUGH:
            return bytes([self.id])
        if self.id == CodecId.BITPACK:
            return bytes([self.id, self.bit_width])
        if self.id == CodecId.BYTE_ALIGNED_LENGTHS:
            return bytes([self.id, self.byte_width])
        if self.id == CodecId.DICTIONARY:
            return bytes([self.id]) + self.index.to_bytes()
        return bytes([self.id, self.algorithm])

    @classmethod
    def from_bytes(cls, raw: bytes, aux: bytes = b"") -> CodecDescriptor:
        desc, used = cls._parse(bytes(raw), 0)
        if used != len(raw):
            raise DecodeError("trailing bytes after codec descriptor", used)
        if aux:
            desc = CodecDescriptor(desc.id, desc.bit_width, desc.byte_width, desc.algorithm, desc.index, aux)
        return desc

    @classmethod
    def _parse(cls, raw: bytes, pos: int) -> tuple[CodecDescriptor, int]:
        if pos >= len(raw):
            raise DecodeError("truncated codec descriptor", pos)
        try:
            cid = CodecId(raw[pos])
        except ValueError:
            raise DecodeError(f"unknown codec tag {raw[pos]}", pos) from None
        if cid == CodecId.PASSTHROUGH:
            return cls(cid), pos + 1
        if cid == CodecId.DICTIONARY:
            index, end = cls._parse(raw, pos + 1)
            return cls(cid, index=index), end
        if pos + 1 >= len(raw):
            raise DecodeError("truncated codec descriptor", pos + 1)
        param = raw[pos + 1]
        if cid == CodecId.BITPACK:
            return cls(cid, bit_width=param), pos + 2
        if cid == CodecId.BYTE_ALIGNED_LENGTHS:
            return cls(cid, byte_width=param), pos + 2
        return cls(cid, algorithm=param), pos + 2


@dataclass(frozen=True, eq=False)
class CompressedBuffer:
    """Encoded leaf values.

    Variable-size encodings record ``extents`` (``value_count + 1`` byte
    offsets into ``data``). Dense fixed-size encodings record
    ``value_bits`` instead; value ``i`` then lives at bits
    ``[i * value_bits, (i + 1) * value_bits)``.
    """

    data: bytes
    value_count: int
    descriptor: CodecDescriptor
    extents: np.ndarray | None = None
    value_bits: int | None = None

    def extent(self, i: int) -> tuple[int, int]:
        """Byte ``(offset, length)`` holding value ``i``."""
        if not 0 <= i < self.value_count:
            raise IndexError(i)
        if self.value_bits is not None:
            lo = i * self.value_bits // 8
            hi = -(-(i + 1) * self.value_bits // 8)
            return lo, hi - lo
        if self.extents is None:
            raise UnsupportedOperationError("buffer has no per-value extents")
        lo = int(self.extents[i])
        return lo, int(self.extents[i + 1]) - lo


# ---------------------------------------------------------------------------
# bit packing


def pack_bits(values: np.ndarray, width: int) -> bytes:
    """Pack unsigned integers LSB-first into a contiguous bit stream."""
    n = len(values)
    if width == 0 or n == 0:
        return b""
    v = np.asarray(values).astype(np.uint64, copy=False)
    if width == 8:
        return v.astype(np.uint8).tobytes()
    if width in (16, 32, 64):
        return v.astype(f"<u{width // 8}").tobytes()
    shifts = np.arange(width, dtype=np.uint64)
    out = []
    step = max(1, (1 << 20) // width)
    for s in range(0, n, step):
        bits = ((v[s : s + step, None] >> shifts) & np.uint64(1)).astype(np.uint8)
        out.append(bits.ravel())
    return np.packbits(np.concatenate(out), bitorder="little").tobytes()


def unpack_bits(buf: bytes | memoryview | np.ndarray, width: int, count: int) -> np.ndarray:
    if width == 0 or count == 0:
        return np.zeros(count, dtype=np.uint64)
    need = -(-count * width // 8)
    raw = np.frombuffer(buf, dtype=np.uint8) if not isinstance(buf, np.ndarray) else buf
    if len(raw) < need:
        raise DecodeError(f"bit-packed buffer truncated: need {need} bytes, have {len(raw)}", len(raw))
    raw = raw[:need]
    if width in (8, 16, 32, 64):
        return np.frombuffer(raw.tobytes(), dtype=f"<u{width // 8}").astype(np.uint64)
    shifts = np.arange(width, dtype=np.uint64)
    bits = np.unpackbits(raw, bitorder="little")[: count * width].reshape(count, width).astype(np.uint64)
    return (bits << shifts).sum(axis=1, dtype=np.uint64)


def min_bit_width(values: np.ndarray) -> int:
    if len(values) == 0:
        return 0
    return int(np.asarray(values).astype(np.uint64).max()).bit_length()


def min_byte_width(max_value: int) -> int:
    return max(1, -(-int(max_value).bit_length() // 8))


# ---------------------------------------------------------------------------
# block algorithms


def _rle_compress(raw: bytes) -> bytes:
    """Repetition collapse: ``u32 runs`` then run lengths (u8) then run bytes."""
    a = np.frombuffer(raw, dtype=np.uint8)
    if len(a) == 0:
        return struct.pack("<I", 0)
    change = np.flatnonzero(np.diff(a)) + 1
    starts = np.concatenate(([0], change))
    lens = np.diff(np.append(starts, len(a)))
    # split runs longer than 255
    pieces = -(-lens // 255)
    run_start = np.repeat(starts, pieces)
    k = np.arange(len(run_start)) - np.repeat(np.cumsum(pieces) - pieces, pieces)
    run_len = np.minimum(np.repeat(lens, pieces) - k * 255, 255).astype(np.uint8)
    run_val = a[run_start + k * 255]
    return struct.pack("<I", len(run_len)) + run_len.tobytes() + run_val.tobytes()


def _rle_decompress(raw: bytes) -> bytes:
    if len(raw) < 4:
        raise DecodeError("rle block truncated", len(raw))
    (runs,) = struct.unpack_from("<I", raw)
    if len(raw) != 4 + 2 * runs:
        raise DecodeError("rle block size mismatch", len(raw))
    lens = np.frombuffer(raw, dtype=np.uint8, count=runs, offset=4)
    vals = np.frombuffer(raw, dtype=np.uint8, count=runs, offset=4 + runs)
    return np.repeat(vals, lens).tobytes()


def _rle_compress_many(data: np.ndarray, offsets: np.ndarray) -> tuple[bytes, np.ndarray]:
    """:func:`_rle_compress` applied to each ``data[offsets[i]:offsets[i + 1]]``
    at once; returns the concatenated blocks and their extents."""
    data = np.asarray(data, dtype=np.uint8)
    off = np.asarray(offsets, dtype=np.int64)
    n = len(off) - 1
    total = len(data)
    boundary = np.zeros(total + 1, dtype=bool)
    boundary[off] = True
    if total > 1:
        boundary[1:total] |= data[1:] != data[:-1]
    starts = np.flatnonzero(boundary[:total])
    lens = np.diff(np.append(starts, total))
    pieces = -(-lens // 255)
    run_start = np.repeat(starts, pieces)
    k = np.arange(len(run_start)) - np.repeat(np.cumsum(pieces) - pieces, pieces)
    run_len = np.minimum(np.repeat(lens, pieces) - k * 255, 255).astype(np.uint8)
    run_pos = run_start + k * 255
    run_val = data[run_pos]
    owner = np.searchsorted(off, run_pos, side="right") - 1
    runs = np.bincount(owner, minlength=n).astype(np.int64)
    ext = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(4 + 2 * runs, out=ext[1:])
    out = np.zeros(int(ext[-1]), dtype=np.uint8)
    hdr = runs.astype("<u4").view(np.uint8).reshape(n, 4)
    out[(ext[:-1, None] + np.arange(4)).ravel()] = hdr.ravel()
    first = np.cumsum(runs) - runs
    j = np.arange(len(run_len)) - np.repeat(first, runs)
    base = np.repeat(ext[:-1] + 4, runs)
    out[base + j] = run_len
    out[base + np.repeat(runs, runs) + j] = run_val
    return out.tobytes(), ext.astype(np.uint64)


def _rle_decompress_many(raw: bytes, extents: np.ndarray) -> tuple[bytes, np.ndarray]:
    buf = np.frombuffer(raw, dtype=np.uint8)
    ext = np.asarray(extents, dtype=np.int64)
    n = len(ext) - 1
    sizes = np.diff(ext)
    if n and (sizes < 4).any():
        raise DecodeError("rle block truncated", int(ext[:-1][sizes < 4][0]))
    hdr = buf[(ext[:-1, None] + np.arange(4)).ravel()].reshape(n, 4) if n else np.zeros((0, 4), np.uint8)
    runs = np.ascontiguousarray(hdr).view("<u4").ravel().astype(np.int64)
    bad = np.flatnonzero(sizes != 4 + 2 * runs)
    if len(bad):
        raise DecodeError("rle block size mismatch", int(ext[bad[0]]))
    first = np.cumsum(runs) - runs
    j = np.arange(int(runs.sum())) - np.repeat(first, runs)
    base = np.repeat(ext[:-1] + 4, runs)
    run_len = buf[base + j]
    run_val = buf[base + np.repeat(runs, runs) + j]
    plain = np.repeat(run_val, run_len)
    owner_lens = np.bincount(np.repeat(np.arange(n), runs), weights=run_len, minlength=n).astype(np.int64)
    offsets = np.zeros(n + 1, dtype=np.uint64)
    np.cumsum(owner_lens, out=offsets[1:])
    return plain.tobytes(), offsets


def _zlib_decompress(raw: bytes) -> bytes:
    try:
        return zlib.decompress(raw)
    except zlib.error as exc:
        raise DecodeError(f"zlib block corrupt: {exc}") from None


_BLOCK = {
    BlockAlgorithm.RLE: (_rle_compress, _rle_decompress),
    BlockAlgorithm.ZLIB: (lambda b: zlib.compress(b, 6), _zlib_decompress),
}


def block_functions(algorithm: int):
    try:
        return _BLOCK[BlockAlgorithm(algorithm)]
    except (KeyError, ValueError):
        raise CodecUnavailableError(f"block algorithm {algorithm} is not available in this build") from None


# ---------------------------------------------------------------------------
# codecs


def _nonnull(dtype: DataType) -> DataType:
    return dtype.with_nullable(False)


def _variable_array(dtype: DataType, extents: np.ndarray, data: bytes) -> LogicalArray:
    offsets = np.asarray(extents, dtype=np.uint64)
    base = int(offsets[0]) if len(offsets) else 0
    if base:
        offsets = offsets - np.uint64(base)
    payload = np.frombuffer(data, dtype=np.uint8)[base : base + int(offsets[-1])].copy() if len(offsets) else np.zeros(0, np.uint8)
    return LogicalArray(_nonnull(dtype), len(offsets) - 1, offsets=offsets, data=payload)


class Codec:
    """A configured codec for one leaf type."""

    descriptor: CodecDescriptor
    variable: bool = False

    def __init__(self, dtype: DataType):
        self.dtype = _nonnull(dtype)

    @property
    def transparency(self) -> Transparency:
        return self.descriptor.transparency

    @property
    def sparsity(self) -> Sparsity:
        return self.descriptor.sparsity

    @property
    def fixed_value_bytes(self) -> int | None:
        """Byte width of every encoded value, when it is fixed and byte aligned."""
        return None

    @property
    def value_bits(self) -> int | None:
        """Bits per encoded value for dense fixed-size codecs."""
        return None

    def encode(self, values: LogicalArray) -> CompressedBuffer:
        raise NotImplementedError

    def decode(self, buf: CompressedBuffer) -> LogicalArray:
        raise NotImplementedError

    def decode_one(self, buf: CompressedBuffer, i: int):
        if self.transparency is Transparency.OPAQUE:
            raise UnsupportedOperationError(
                f"{self.descriptor.id.name} is opaque; a single value cannot be decoded in isolation"
            )
        if not 0 <= i < buf.value_count:
            raise IndexError(i)
        lo, length = buf.extent(i)
        return self._decode_extent(buf, i, bytes(buf.data[lo : lo + length]))

    def _decode_extent(self, buf: CompressedBuffer, i: int, raw: bytes):
        raise NotImplementedError

    def encoded_size(self, values: LogicalArray) -> int:
        """Size of the data bytes that :meth:`encode` would produce."""
        return len(self.encode(values).data)

    def __repr__(self) -> str:
        return f"{type(self).__name__}({self.dtype})"


class PassthroughCodec(Codec):
    def __init__(self, dtype: DataType):
        super().__init__(dtype)
        self.descriptor = CodecDescriptor(CodecId.PASSTHROUGH)
        self.variable = dtype.byte_width is None
        self.width = dtype.byte_width

    @property
    def fixed_value_bytes(self) -> int | None:
        return self.width

    @property
    def value_bits(self) -> int | None:
        return None if self.variable else self.width * 8

    def encode(self, values: LogicalArray) -> CompressedBuffer:
        if self.variable:
            off = values.offsets
            base = int(off[0]) if len(off) else 0
            return CompressedBuffer(values.data.tobytes(), values.length, self.descriptor, extents=off - np.uint64(base))
        return CompressedBuffer(fixed_bytes(values).tobytes(), values.length, self.descriptor, value_bits=self.width * 8)

    def decode(self, buf: CompressedBuffer) -> LogicalArray:
        if self.variable:
            if buf.extents is None or len(buf.extents) != buf.value_count + 1:
                raise DecodeError("missing value extents")
            if int(buf.extents[-1]) > len(buf.data):
                raise DecodeError("value extents exceed buffer", len(buf.data))
            return _variable_array(self.dtype, buf.extents, buf.data)
        need = buf.value_count * self.width
        if len(buf.data) < need:
            raise DecodeError(f"fixed-width buffer truncated: need {need} bytes", len(buf.data))
        return from_fixed_bytes(self.dtype, buf.data, buf.value_count)

    def encoded_size(self, values: LogicalArray) -> int:
        if self.variable:
            return int(values.offsets[-1] - values.offsets[0])
        return values.length * self.width

    def _decode_extent(self, buf, i, raw):
        if self.variable:
            return to_pylist(_variable_array(self.dtype, np.array([0, len(raw)]), raw))[0]
        return to_pylist(from_fixed_bytes(self.dtype, raw, 1))[0]


def _integer_items(dtype: DataType) -> tuple[DataType, int]:
    """The integer item type and items per value, for bit packing."""
    items = 1
    t = dtype
    while t.kind == Kind.FIXED_SIZE_LIST:
        items *= t.dimension
        t = t.child
    if not t.is_primitive or t.kind in (Kind.FLOAT32, Kind.FLOAT64):
        raise IllegalCodecError(f"bit packing needs integer values, got {dtype}")
    return t, items


def _flat_items(values: LogicalArray) -> np.ndarray:
    while values.dtype.kind == Kind.FIXED_SIZE_LIST:
        values = values.child
    return values.values


def _zigzag(v: np.ndarray) -> np.ndarray:
    s = v.astype(np.int64)
    return ((s << 1) ^ (s >> 63)).astype(np.uint64)


def _unzigzag(u: np.ndarray) -> np.ndarray:
    u = u.astype(np.uint64)
    return ((u >> np.uint64(1)).astype(np.int64)) ^ -((u & np.uint64(1)).astype(np.int64))


class BitPackCodec(Codec):
    def __init__(self, dtype: DataType, bit_width: int):
        super().__init__(dtype)
        self.item_type, self.items = _integer_items(dtype)
        self.signed = self.item_type.numpy_dtype.kind == "i"
        if not 0 <= bit_width <= self.item_type.numpy_dtype.itemsize * 8:
            raise IllegalCodecError(f"bit width {bit_width} invalid for {self.item_type}")
        self.bit_width = bit_width
        self.descriptor = CodecDescriptor(CodecId.BITPACK, bit_width=bit_width)

    @property
    def value_bits(self) -> int:
        return self.bit_width * self.items

    @property
    def fixed_value_bytes(self) -> int | None:
        return self.value_bits // 8 if self.value_bits % 8 == 0 else None

    def _unsigned(self, values: LogicalArray) -> np.ndarray:
        raw = _flat_items(values)
        return _zigzag(raw) if self.signed else raw.astype(np.uint64)

    @staticmethod
    def width_for(dtype: DataType, values: LogicalArray) -> int:
        item, _ = _integer_items(dtype)
        raw = _flat_items(values)
        if item.numpy_dtype.kind == "i":
            raw = _zigzag(raw)
        return min_bit_width(raw)

    def encode(self, values: LogicalArray) -> CompressedBuffer:
        u = self._unsigned(values)
        if len(u) and self.bit_width < 64 and int(u.max()) >> self.bit_width:
            raise IllegalCodecError(f"value does not fit in {self.bit_width} bits")
        return CompressedBuffer(pack_bits(u, self.bit_width), values.length, self.descriptor, value_bits=self.value_bits)

    def _from_unsigned(self, u: np.ndarray, count: int) -> LogicalArray:
        items = _unzigzag(u) if self.signed else u
        flat = items.astype(self.item_type.numpy_dtype)
        return from_fixed_bytes(self.dtype, flat.view(np.uint8), count)

    def decode(self, buf: CompressedBuffer) -> LogicalArray:
        u = unpack_bits(buf.data, self.bit_width, buf.value_count * self.items)
        return self._from_unsigned(u, buf.value_count)

    def encoded_size(self, values: LogicalArray) -> int:
        return -(-values.length * self.value_bits // 8)

    def _decode_extent(self, buf, i, raw):
        skip = (i * self.value_bits) % 8
        bits = np.unpackbits(np.frombuffer(raw, dtype=np.uint8), bitorder="little")[skip : skip + self.value_bits]
        u = unpack_bits(np.packbits(bits, bitorder="little"), self.bit_width, self.items)
        return to_pylist(self._from_unsigned(u, 1))[0]


class ByteAlignedLengths:
    """Unsigned integers stored at a fixed 1-8 byte width (used for lengths)."""

    def __init__(self, byte_width: int):
        if not 1 <= byte_width <= 8:
            raise IllegalCodecError(f"byte width {byte_width} outside 1..8")
        self.byte_width = byte_width
        self.descriptor = CodecDescriptor(CodecId.BYTE_ALIGNED_LENGTHS, byte_width=byte_width)

    @classmethod
    def for_max(cls, max_value: int) -> ByteAlignedLengths:
        return cls(min_byte_width(max_value))

    def pack(self, lengths: np.ndarray) -> bytes:
        w = self.byte_width
        v = np.asarray(lengths, dtype=np.uint64)
        if len(v) and w < 8 and int(v.max()) >> (8 * w):
            raise IllegalCodecError(f"length does not fit in {w} bytes")
        return v.astype("<u8").view(np.uint8).reshape(-1, 8)[:, :w].tobytes()

    def unpack(self, raw: bytes, count: int) -> np.ndarray:
        w = self.byte_width
        if len(raw) < count * w:
            raise DecodeError(f"length buffer truncated: need {count * w} bytes", len(raw))
        m = np.zeros((count, 8), dtype=np.uint8)
        m[:, :w] = np.frombuffer(raw, dtype=np.uint8, count=count * w).reshape(count, w)
        return m.view("<u8").ravel().astype(np.uint64)


class PerValueBlockCodec(Codec):
    """A block algorithm applied to every value independently."""

    variable = True

    def __init__(self, dtype: DataType, algorithm: int):
        super().__init__(dtype)
        self.compress, self.decompress = block_functions(algorithm)
        self.descriptor = CodecDescriptor(CodecId.PER_VALUE_BLOCK, algorithm=algorithm)
        self.inner = PassthroughCodec(dtype)

    def _raw_values(self, values: LogicalArray) -> list[bytes]:
        if self.inner.variable:
            raw = values.data.tobytes()
            off = values.offsets.tolist()
            return [raw[off[i] : off[i + 1]] for i in range(values.length)]
        return [row.tobytes() for row in fixed_bytes(values)]

    def _plain(self, values: LogicalArray) -> tuple[np.ndarray, np.ndarray]:
        if self.inner.variable:
            return values.data, values.offsets.astype(np.int64)
        m = fixed_bytes(values)
        return m.reshape(-1), np.arange(values.length + 1, dtype=np.int64) * m.shape[1]

    def encode(self, values: LogicalArray) -> CompressedBuffer:
        if self.descriptor.algorithm == BlockAlgorithm.RLE:
            data, ext = _rle_compress_many(*self._plain(values))
            return CompressedBuffer(data, values.length, self.descriptor, extents=ext)
        blobs = [self.compress(v) for v in self._raw_values(values)]
        ext = np.zeros(len(blobs) + 1, dtype=np.uint64)
        np.cumsum([len(b) for b in blobs], out=ext[1:])
        return CompressedBuffer(b"".join(blobs), values.length, self.descriptor, extents=ext)

    def decode(self, buf: CompressedBuffer) -> LogicalArray:
        if self.descriptor.algorithm == BlockAlgorithm.RLE:
            plain, off = _rle_decompress_many(bytes(buf.data), buf.extents)
            if self.inner.variable:
                return _variable_array(self.dtype, off, plain)
            return from_fixed_bytes(self.dtype, plain, buf.value_count)
        ext = buf.extents.tolist()
        raw = [self.decompress(bytes(buf.data[ext[i] : ext[i + 1]])) for i in range(buf.value_count)]
        if self.inner.variable:
            off = np.zeros(len(raw) + 1, dtype=np.uint64)
            np.cumsum([len(r) for r in raw], out=off[1:])
            return _variable_array(self.dtype, off, b"".join(raw))
        return from_fixed_bytes(self.dtype, b"".join(raw), buf.value_count)

    def _decode_extent(self, buf, i, raw):
        plain = self.decompress(raw)
        return self.inner._decode_extent(None, 0, plain)


class ChunkedBlockCodec(Codec):
    """A block algorithm applied to a whole chunk of values (opaque)."""

    def __init__(self, dtype: DataType, algorithm: int):
        super().__init__(dtype)
        self.compress, self.decompress = block_functions(algorithm)
        self.descriptor = CodecDescriptor(CodecId.CHUNKED_BLOCK, algorithm=algorithm)
        self.inner = PassthroughCodec(dtype)
        self.variable = self.inner.variable

    def encode(self, values: LogicalArray) -> CompressedBuffer:
        plain = self.inner.encode(values)
        return CompressedBuffer(self.compress(plain.data), values.length, self.descriptor, extents=plain.extents)

    def decode(self, buf: CompressedBuffer) -> LogicalArray:
        plain = self.decompress(bytes(buf.data))
        return self.inner.decode(CompressedBuffer(plain, buf.value_count, self.inner.descriptor, extents=buf.extents))


def serialize_dictionary(dictionary: LogicalArray) -> bytes:
    """``u32 count`` then either raw fixed-width values or u32 lengths + bytes."""
    head = struct.pack("<I", dictionary.length)
    if dictionary.dtype.byte_width is not None:
        return head + fixed_bytes(dictionary).tobytes()
    lengths = np.diff(dictionary.offsets).astype("<u4")
    return head + lengths.tobytes() + dictionary.data.tobytes()


def deserialize_dictionary(dtype: DataType, raw: bytes) -> LogicalArray:
    if len(raw) < 4:
        raise DecodeError("dictionary buffer truncated", len(raw))
    (count,) = struct.unpack_from("<I", raw)
    dtype = _nonnull(dtype)
    if dtype.byte_width is not None:
        if len(raw) < 4 + count * dtype.byte_width:
            raise DecodeError("dictionary buffer truncated", len(raw))
        return from_fixed_bytes(dtype, raw[4:], count)
    lengths = np.frombuffer(raw, dtype="<u4", count=count, offset=4).astype(np.uint64)
    off = np.zeros(count + 1, dtype=np.uint64)
    np.cumsum(lengths, out=off[1:])
    data = raw[4 + 4 * count :]
    if len(data) != int(off[-1]):
        raise DecodeError("dictionary data length mismatch", len(raw))
    return _variable_array(dtype, off, data)


def _value_keys(values: LogicalArray) -> list[bytes]:
    if values.dtype.byte_width is not None:
        return [row.tobytes() for row in fixed_bytes(values)]
    raw = values.data.tobytes()
    off = values.offsets.tolist()
    return [raw[off[i] : off[i + 1]] for i in range(values.length)]


def build_dictionary(values: LogicalArray) -> tuple[LogicalArray, np.ndarray]:
    """Unique values in first-appearance order, and each value's index."""
    lookup: dict[bytes, int] = {}
    firsts = []
    indices = np.empty(values.length, dtype=np.uint32)
    for i, key in enumerate(_value_keys(values)):
        idx = lookup.get(key)
        if idx is None:
            idx = lookup[key] = len(firsts)
            firsts.append(i)
        indices[i] = idx
    return take(values, np.asarray(firsts, dtype=np.int64)), indices


class DictionaryCodec(Codec):
    def __init__(self, dtype: DataType, dictionary: LogicalArray, index_bits: int):
        super().__init__(dtype)
        self.dictionary = dictionary
        self.index = BitPackCodec(uint32(False), index_bits)
        self._lookup = {k: i for i, k in enumerate(_value_keys(dictionary))}
        self.descriptor = CodecDescriptor(
            CodecId.DICTIONARY, index=self.index.descriptor, aux=serialize_dictionary(dictionary)
        )

    @property
    def fixed_value_bytes(self) -> int | None:
        return self.index.fixed_value_bytes

    @property
    def value_bits(self) -> int | None:
        return self.index.value_bits

    def indices(self, values: LogicalArray) -> np.ndarray:
        try:
            return np.fromiter((self._lookup[k] for k in _value_keys(values)), dtype=np.uint32, count=values.length)
        except KeyError:
            raise IllegalCodecError("value missing from dictionary") from None

    def encode(self, values: LogicalArray) -> CompressedBuffer:
        idx = LogicalArray(uint32(False), values.length, values=self.indices(values))
        inner = self.index.encode(idx)
        return CompressedBuffer(inner.data, values.length, self.descriptor, value_bits=inner.value_bits)

    def decode(self, buf: CompressedBuffer) -> LogicalArray:
        idx = unpack_bits(buf.data, self.index.bit_width, buf.value_count)
        if len(idx) and int(idx.max()) >= self.dictionary.length:
            raise DecodeError("dictionary index out of range")
        return take(self.dictionary, idx.astype(np.int64))

    def encoded_size(self, values: LogicalArray) -> int:
        return self.index.encoded_size(values)

    def _decode_extent(self, buf, i, raw):
        k = self.index._decode_extent(buf, i, raw)
        return to_pylist(take(self.dictionary, [k]))[0]


# ---------------------------------------------------------------------------
# resolution


def _align_bits(bit_width: int, items: int) -> int:
    while (bit_width * items) % 8:
        bit_width += 1
    return bit_width


def _parse_request(request) -> tuple[str, int]:
    if request is None:
        return "passthrough", 0
    if isinstance(request, CodecDescriptor):
        return request.id.name.lower(), request.algorithm
    name, _, algo = str(request).partition(":")
    algo_id = BlockAlgorithm[algo.upper()] if algo else BlockAlgorithm.ZLIB
    return name.lower(), int(algo_id)


def resolve_codec(request, values: LogicalArray, context: str = MINIBLOCK) -> Codec:
    """Configure a codec for one page of leaf values.

    ``request`` is ``None`` (passthrough), a name such as ``"bitpack"``,
    ``"dictionary"``, ``"block:rle"`` or ``"chunked:zlib"``, or a
    :class:`CodecDescriptor`.
    """
    name, algo = _parse_request(request)
    dtype = values.dtype
    if name in ("passthrough", "none"):
        return PassthroughCodec(dtype)
    if name == "bitpack":
        width = BitPackCodec.width_for(dtype, values)
        if context == FULLZIP:
            width = _align_bits(width, _integer_items(dtype)[1])
        return BitPackCodec(dtype, width)
    if name == "dictionary":
        dictionary, idx = build_dictionary(values)
        bits = max(1, min_bit_width(idx))
        if context == FULLZIP:
            bits = _align_bits(bits, 1)
        return DictionaryCodec(dtype, dictionary, bits)
    if name in ("block", "per_value_block"):
        return PerValueBlockCodec(dtype, algo)
    if name in ("chunked", "chunked_block"):
        if context == FULLZIP:
            raise IllegalCodecError("chunked block compression is opaque and cannot be used with full-zip")
        return ChunkedBlockCodec(dtype, algo)
    raise IllegalCodecError(f"unknown codec request {request!r}")


def codec_from_descriptor(desc: CodecDescriptor, dtype: DataType) -> Codec:
    if desc.id == CodecId.PASSTHROUGH:
        return PassthroughCodec(dtype)
    if desc.id == CodecId.BITPACK:
        return BitPackCodec(dtype, desc.bit_width)
    if desc.id == CodecId.DICTIONARY:
        dictionary = deserialize_dictionary(dtype, desc.aux)
        return DictionaryCodec(dtype, dictionary, desc.index.bit_width)
    if desc.id == CodecId.PER_VALUE_BLOCK:
        return PerValueBlockCodec(dtype, desc.algorithm)
    if desc.id == CodecId.CHUNKED_BLOCK:
        return ChunkedBlockCodec(dtype, desc.algorithm)
    raise IllegalCodecError(f"{desc.id.name} is not a value codec")


def require_transparent(codec: Codec) -> None:
    if codec.transparency is not Transparency.TRANSPARENT:
        raise IllegalCodecError(f"{codec.descriptor.id.name} is opaque; full-zip requires transparent codecs")


def encode(values: LogicalArray, request=None, context: str = MINIBLOCK) -> CompressedBuffer:
    return resolve_codec(request, values, context).encode(values)


def decode(buf: CompressedBuffer, dtype: DataType) -> LogicalArray:
    return codec_from_descriptor(buf.descriptor, dtype).decode(buf)


def decode_one(buf: CompressedBuffer, dtype: DataType, i: int):
    return codec_from_descriptor(buf.descriptor, dtype).decode_one(buf, i)
