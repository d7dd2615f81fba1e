"""Miniblock structural encoding.

A page is a run of small, independently decodable chunks::

    chunk words      u16 x C, padded to 8
    chunk rep index  (u16 rows completed, u16 trailing items) x C, padded to 8
                     (only for columns with repetition)
    chunk bodies     each 8-byte aligned

A chunk word keeps the body size in 8-byte words (low 12 bits) and log2 of
the value count (high 4 bits). Every chunk except the last holds a power of
two number of level entries; the last holds the remainder and records the
rounded-up exponent.

A chunk body is ``u16 buffer count``, ``u16 size`` per buffer, then the
buffers (rep levels, def levels, then data buffers), each starting on an
8-byte boundary. Variable-width data uses two buffers: one length per level
entry at the page's byte width, then the value bytes.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from zipcol.arrays import LogicalArray, empty_array, slice_array
from zipcol.codecs import ByteAlignedLengths, Codec, CompressedBuffer, Transparency, min_byte_width, pack_bits, unpack_bits
from zipcol.errors import CorruptLevelsError, DecodeError, RoutingError
from zipcol.repdef import LEVEL_DTYPE, RepDefLevels, bits_for, concat_levels

MAX_CHUNK_VALUES = 4096
MAX_CHUNK_WORDS = 4095
MAX_CHUNK_BYTES = MAX_CHUNK_WORDS * 8
DEFAULT_CHUNK_TARGET = 8192
TRAILING_FLAG = 0x8000

_U16 = struct.Struct("<H")


def pad8(n: int) -> int:
    return (n + 7) & ~7


def encode_chunk_meta(value_count: int, body_bytes: int, final: bool = False) -> int:
    """Pack a chunk's value count and body size into the 2-byte chunk word.

    Non-final chunks must hold a power of two values. A final chunk may hold
    any count up to 4096 and stores the exponent rounded up.
    """
    if not 1 <= value_count <= MAX_CHUNK_VALUES:
        raise ValueError(f"chunk value count {value_count} outside 1..{MAX_CHUNK_VALUES}")
    log2 = (value_count - 1).bit_length()
    if not final and (1 << log2) != value_count:
        raise ValueError(f"chunk value count {value_count} is not a power of two")
    if body_bytes % 8 or not 8 <= body_bytes <= MAX_CHUNK_BYTES:
        raise ValueError(f"chunk body of {body_bytes} bytes must be a multiple of 8 in 8..{MAX_CHUNK_BYTES}")
    return (log2 << 12) | (body_bytes // 8)


def decode_chunk_meta(word: int) -> tuple[int, int]:
    """Inverse of :func:`encode_chunk_meta`: ``(value_count, body_bytes)``."""
    if not 0 <= word <= 0xFFFF:
        raise ValueError(f"chunk word {word} is not 16 bits")
    words = word & 0xFFF
    log2 = word >> 12
    if words == 0 or log2 > 12:
        raise DecodeError(f"invalid chunk word 0x{word:04x}")
    return 1 << log2, words * 8


# ---------------------------------------------------------------------------
# chunk bodies


def build_chunk_body(buffers: list[bytes]) -> bytes:
    out = bytearray(_U16.pack(len(buffers)))
    for b in buffers:
        out += _U16.pack(len(b))
    out += bytes(pad8(len(out)) - len(out))
    for b in buffers:
        out += b
        out += bytes(pad8(len(b)) - len(b))
    return bytes(out)


def parse_chunk_body(body: bytes | memoryview, base: int = 0) -> list[bytes]:
    if len(body) < 2:
        raise DecodeError("chunk body truncated", base)
    (count,) = _U16.unpack_from(body, 0)
    head = 2 + 2 * count
    if len(body) < head:
        raise DecodeError("chunk buffer table truncated", base)
    sizes = struct.unpack_from(f"<{count}H", body, 2)
    pos = pad8(head)
    out = []
    for size in sizes:
        if pos + size > len(body):
            raise DecodeError("chunk buffer exceeds chunk body", base + pos)
        out.append(bytes(body[pos : pos + size]))
        pos += pad8(size)
    if pad8(pos) != len(body):
        raise DecodeError(f"chunk buffers cover {pos} bytes, body has {len(body)}", base + pos)
    return out


@dataclass(frozen=True)
class ChunkContext:
    """Page-wide parameters shared by every chunk."""

    max_rep: int
    max_def: int
    codec: Codec
    lengths_width: int  # 0 for fixed-width codecs

    @property
    def rep_bits(self) -> int:
        return bits_for(self.max_rep)

    @property
    def def_bits(self) -> int:
        return bits_for(self.max_def)

    @property
    def buffer_count(self) -> int:
        return (self.rep_bits > 0) + (self.def_bits > 0) + (2 if self.codec.variable else 1)


def chunk_buffers(levels: RepDefLevels, ctx: ChunkContext) -> list[bytes]:
    """Buffers of one chunk in canonical order."""
    out = []
    if ctx.rep_bits:
        out.append(pack_bits(levels.rep, ctx.rep_bits))
    if ctx.def_bits:
        out.append(pack_bits(levels.def_, ctx.def_bits))
    enc = ctx.codec.encode(levels.leaf_values)
    if ctx.codec.variable:
        lengths = np.zeros(len(levels), dtype=np.uint64)
        lengths[levels.def_ == 0] = np.diff(np.asarray(enc.extents, dtype=np.uint64))
        out.append(ByteAlignedLengths(ctx.lengths_width).pack(lengths))
    out.append(enc.data)
    return out


def decode_chunk(body: bytes | memoryview, count: int, ctx: ChunkContext, base: int = 0) -> RepDefLevels:
    """Decode every level entry and value of one chunk."""
    buffers = parse_chunk_body(body, base)
    if len(buffers) != ctx.buffer_count:
        raise DecodeError(f"chunk has {len(buffers)} buffers, expected {ctx.buffer_count}", base)
    pos = 0
    if ctx.rep_bits:
        rep = unpack_bits(buffers[pos], ctx.rep_bits, count).astype(LEVEL_DTYPE)
        pos += 1
    else:
        rep = np.zeros(count, dtype=LEVEL_DTYPE)
    if ctx.def_bits:
        def_ = unpack_bits(buffers[pos], ctx.def_bits, count).astype(LEVEL_DTYPE)
        pos += 1
    else:
        def_ = np.zeros(count, dtype=LEVEL_DTYPE)
    if len(def_) and int(def_.max()) > ctx.max_def:
        raise DecodeError("definition level exceeds maximum", base)
    present = def_ == 0
    nvals = int(np.count_nonzero(present))
    codec = ctx.codec
    if codec.variable:
        lengths = ByteAlignedLengths(ctx.lengths_width).unpack(buffers[pos], count)
        ext = np.zeros(nvals + 1, dtype=np.uint64)
        np.cumsum(lengths[present], out=ext[1:])
        buf = CompressedBuffer(buffers[pos + 1], nvals, codec.descriptor, extents=ext)
    else:
        buf = CompressedBuffer(buffers[pos], nvals, codec.descriptor, value_bits=codec.value_bits)
    values = codec.decode(buf)
    if values.length != nvals:
        raise DecodeError("chunk value count mismatch", base)
    return RepDefLevels(rep, def_, ctx.max_rep, ctx.max_def, values)


# ---------------------------------------------------------------------------
# chunking


class _Sizer:
    """Computes the encoded body size of entries ``[s, s + m)`` of a page."""

    def __init__(self, levels: RepDefLevels, ctx: ChunkContext, value_lengths: np.ndarray | None, prefix: np.ndarray):
        self.levels = levels
        self.ctx = ctx
        self.prefix = prefix
        self.header = pad8(2 + 2 * ctx.buffer_count)
        codec = ctx.codec
        self.opaque = codec.transparency is Transparency.OPAQUE
        self.data_prefix = None
        if codec.variable and not self.opaque:
            self.data_prefix = np.zeros(len(value_lengths) + 1, dtype=np.int64)
            np.cumsum(value_lengths, out=self.data_prefix[1:])
        self.value_bits = codec.value_bits

    def size(self, s: int, m: int) -> int:
        ctx = self.ctx
        total = self.header
        if ctx.rep_bits:
            total += pad8(-(-m * ctx.rep_bits // 8))
        if ctx.def_bits:
            total += pad8(-(-m * ctx.def_bits // 8))
        lo, hi = int(self.prefix[s]), int(self.prefix[s + m])
        if ctx.codec.variable:
            total += pad8(m * ctx.lengths_width)
        if self.opaque:
            vals = slice_array(self.levels.leaf_values, lo, hi - lo)
            total += pad8(len(ctx.codec.encode(vals).data))
        elif ctx.codec.variable:
            total += pad8(int(self.data_prefix[hi] - self.data_prefix[lo]))
        else:
            total += pad8(-(-(hi - lo) * self.value_bits // 8))
        return total


def page_lengths_width(codec: Codec, values: LogicalArray) -> tuple[int, np.ndarray | None]:
    """Byte width of the per-entry length buffer and each value's encoded length."""
    if not codec.variable:
        return 0, None
    enc = codec.encode(values)
    lengths = np.diff(np.asarray(enc.extents, dtype=np.int64))
    return min_byte_width(int(lengths.max()) if len(lengths) else 0), lengths


def plan_chunks(levels: RepDefLevels, ctx: ChunkContext, target: int = DEFAULT_CHUNK_TARGET,
                value_lengths: np.ndarray | None = None) -> list[tuple[int, int]]:
    """Chunk boundaries as ``(start, count)`` pairs.

    Each chunk takes the largest power-of-two count (at most 4096) whose
    body fits ``target`` bytes. Once the rest of the page is no larger than
    the previous chunk and fits, it becomes the final chunk. A single entry
    larger than ``target`` still gets its own chunk as long as it stays
    under the 32,760-byte hard cap.
    """
    n = len(levels)
    prefix = levels.valid_prefix()
    sizer = _Sizer(levels, ctx, value_lengths, prefix)
    out = []
    s = 0
    limit = MAX_CHUNK_VALUES
    while s < n:
        remaining = n - s
        if remaining <= limit and sizer.size(s, remaining) <= target:
            m = remaining
        else:
            m = 1 << (min(remaining, MAX_CHUNK_VALUES).bit_length() - 1)
            while m > 1 and sizer.size(s, m) > target:
                m //= 2
            if m == 1:
                size = sizer.size(s, 1)
                if size > MAX_CHUNK_BYTES:
                    raise RoutingError(
                        f"entry {s} needs a {size}-byte chunk (limit {MAX_CHUNK_BYTES}); route this page to full-zip"
                    )
        limit = m
        out.append((s, m))
        s += m
    return out


@dataclass(frozen=True, eq=False)
class MiniBlockPage:
    entry_count: int
    row_count: int
    max_rep: int
    max_def: int
    lengths_width: int
    words: np.ndarray  # u16 per chunk
    rep_index: np.ndarray | None  # (C, 2) u16: rows completed, trailing items
    bodies: bytes

    @property
    def chunk_count(self) -> int:
        return len(self.words)

    def meta_bytes(self) -> bytes:
        out = bytearray(self.words.astype("<u2").tobytes())
        out += bytes(pad8(len(out)) - len(out))
        if self.rep_index is not None:
            start = len(out)
            out += self.rep_index.astype("<u2").tobytes()
            out += bytes(pad8(len(out) - start) - (len(out) - start))
        return bytes(out)

    def to_bytes(self) -> bytes:
        return self.meta_bytes() + self.bodies


def chunk_rep_index(levels: RepDefLevels, chunks: list[tuple[int, int]]) -> np.ndarray:
    """Per chunk: rows completed in the chunk and items after the last completed row."""
    n = len(levels)
    is_start = np.ones(n + 1, dtype=bool)
    is_start[:n] = levels.rep == levels.max_rep
    ends = np.flatnonzero(is_start[1:])  # entry e ends a row when e + 1 starts one
    out = np.zeros((len(chunks), 2), dtype=np.uint16)
    for k, (s, m) in enumerate(chunks):
        lo, hi = np.searchsorted(ends, [s, s + m])
        completed = int(hi - lo)
        trailing = m if completed == 0 else s + m - 1 - int(ends[hi - 1])
        out[k] = (completed, trailing)
    return out


def encode_miniblock(levels: RepDefLevels, codec: Codec, target: int = DEFAULT_CHUNK_TARGET) -> MiniBlockPage:
    lengths_width, value_lengths = page_lengths_width(codec, levels.leaf_values)
    ctx = ChunkContext(levels.max_rep, levels.max_def, codec, lengths_width)
    chunks = plan_chunks(levels, ctx, target, value_lengths)
    prefix = levels.valid_prefix()
    words = np.zeros(len(chunks), dtype=np.uint16)
    bodies = []
    for k, (s, m) in enumerate(chunks):
        body = build_chunk_body(chunk_buffers(levels.slice_entries(s, s + m, prefix), ctx))
        words[k] = encode_chunk_meta(m, len(body), final=k == len(chunks) - 1)
        bodies.append(body)
    rep_index = chunk_rep_index(levels, chunks) if levels.max_rep > 0 else None
    return MiniBlockPage(
        len(levels), levels.row_count, levels.max_rep, levels.max_def, lengths_width, words, rep_index, b"".join(bodies)
    )


def meta_length(chunk_count: int, has_rep: bool) -> int:
    return pad8(2 * chunk_count) + (pad8(4 * chunk_count) if has_rep else 0)


def parse_page_meta(raw: bytes, chunk_count: int, has_rep: bool) -> tuple[np.ndarray, np.ndarray | None]:
    if len(raw) < meta_length(chunk_count, has_rep):
        raise DecodeError("miniblock page metadata truncated", len(raw))
    words = np.frombuffer(raw, dtype="<u2", count=chunk_count).astype(np.uint16)
    rep = None
    if has_rep:
        rep = np.frombuffer(raw, dtype="<u2", count=2 * chunk_count, offset=pad8(2 * chunk_count)).reshape(-1, 2)
        rep = rep.astype(np.uint16)
    return words, rep


# ---------------------------------------------------------------------------
# search cache


@dataclass(frozen=True, eq=False)
class ChunkIndex:
    """Search-cache view of one miniblock page.

    Only the chunk words and (for list columns) one packed u16 per chunk are
    retained: rows completed in the low 15 bits, and a flag telling whether
    the chunk ends in the middle of a row. Offsets and cumulative counts are
    derived on demand.
    """

    entry_count: int
    row_count: int
    words: np.ndarray
    rep: np.ndarray | None

    @classmethod
    def from_meta(cls, entry_count: int, row_count: int, words: np.ndarray, rep_index: np.ndarray | None) -> ChunkIndex:
        compact = None
        if rep_index is not None:
            compact = (rep_index[:, 0].astype(np.uint16) | np.where(rep_index[:, 1] > 0, TRAILING_FLAG, 0)).astype(np.uint16)
        return cls(entry_count, row_count, np.asarray(words, dtype=np.uint16), compact)

    @property
    def nbytes(self) -> int:
        return self.words.nbytes + (0 if self.rep is None else self.rep.nbytes)

    @property
    def chunk_count(self) -> int:
        return len(self.words)

    def counts(self) -> np.ndarray:
        counts = np.left_shift(1, (self.words >> 12).astype(np.int64))
        if len(counts):
            counts[-1] = self.entry_count - int(counts[:-1].sum())
            if counts[-1] <= 0:
                raise DecodeError("chunk words inconsistent with page entry count")
        return counts

    def body_offsets(self) -> np.ndarray:
        """``C + 1`` byte offsets of chunk bodies relative to the data region."""
        sizes = (self.words & 0xFFF).astype(np.int64) * 8
        out = np.zeros(len(sizes) + 1, dtype=np.int64)
        np.cumsum(sizes, out=out[1:])
        return out

    def entry_starts(self) -> np.ndarray:
        out = np.zeros(self.chunk_count + 1, dtype=np.int64)
        np.cumsum(self.counts(), out=out[1:])
        return out

    def locate(self, rows: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """For each row: first chunk, last chunk and the row's ordinal among
        row starts inside the first chunk."""
        rows = np.asarray(rows, dtype=np.int64)
        if len(rows) and (rows.min() < 0 or rows.max() >= self.row_count):
            raise IndexError("row out of range for page")
        if self.rep is None:
            starts = self.entry_starts()
            k = np.searchsorted(starts, rows, side="right") - 1
            return k, k, rows - starts[k]
        completed = (self.rep & 0x7FFF).astype(np.int64)
        trailing = (self.rep & TRAILING_FLAG) > 0
        done_before = np.zeros(len(completed) + 1, dtype=np.int64)
        np.cumsum(completed, out=done_before[1:])
        last = np.searchsorted(done_before[1:], rows, side="right")
        first = last.copy()
        for t in range(len(rows)):
            r, k = int(rows[t]), int(last[t])
            if r > done_before[k]:
                continue
            j = k
            while j > 0 and trailing[j - 1]:
                j -= 1
                if completed[j] > 0:
                    break
            first[t] = j
        first_row = done_before[first] + np.where(first > 0, trailing[np.maximum(first - 1, 0)], False)
        return first, last, rows - first_row


def decode_page(page_bytes: bytes, index: ChunkIndex, meta_len: int, ctx: ChunkContext) -> RepDefLevels:
    """Decode every chunk of a page read in one piece."""
    offsets = index.body_offsets() + meta_len
    counts = index.counts()
    if int(offsets[-1]) > len(page_bytes):
        raise DecodeError("miniblock page truncated", len(page_bytes))
    mv = memoryview(page_bytes)
    parts = [
        decode_chunk(mv[int(offsets[k]) : int(offsets[k + 1])], int(counts[k]), ctx, int(offsets[k]))
        for k in range(index.chunk_count)
    ]
    if not parts:
        return RepDefLevels(
            np.zeros(0, LEVEL_DTYPE), np.zeros(0, LEVEL_DTYPE), ctx.max_rep, ctx.max_def,
            empty_array(ctx.codec.dtype),
        )
    levels = concat_levels(parts, ctx.codec.dtype, ctx.max_rep, ctx.max_def)
    if levels.row_count != index.row_count:
        raise CorruptLevelsError(f"page decodes to {levels.row_count} rows, metadata says {index.row_count}")
    return levels


def search_cache_bytes(chunk_count: int, has_rep: bool, aux_bytes: int = 0, page_overhead: int = 24) -> int:
    """Accounting used for the warmed cache: words, packed rep entries, codec aux, page fields."""
    return 2 * chunk_count + (2 * chunk_count if has_rep else 0) + aux_bytes + page_overhead
