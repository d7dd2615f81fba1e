"""Full-zip structural encoding.

Each level entry becomes one record::

    control word | [value length] | [value bytes]

The control word packs the definition level in its low ``def_bits`` and the
repetition level in the next ``rep_bits``; it is 1-4 bytes wide and always
byte aligned. Values are compressed before zipping, so every value slice
is a transparent extent of the codec's output.

Pages with no repetition and a fixed-width codec use fixed-size records
(nulls get zero filler) and need no index. All other pages store a
repetition index: one byte offset per top-level row plus a terminal
offset, packed at a byte-aligned width. Random access to rows ``[i, j)``
reads index entries ``i..j`` and then the record bytes between them.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from zipcol.arrays import LogicalArray, gather
from zipcol.codecs import Codec, CompressedBuffer, min_byte_width, require_transparent
from zipcol.errors import DecodeError, IllegalCodecError, UnsupportedOperationError
from zipcol.repdef import LEVEL_DTYPE, RepDefLevels, bits_for


def le_matrix(values: np.ndarray, width: int) -> np.ndarray:
    """``(n, width)`` little-endian byte matrix of unsigned integers."""
    v = np.ascontiguousarray(np.asarray(values, dtype=np.uint64).astype("<u8"))
    return v.view(np.uint8).reshape(-1, 8)[:, :width]


def from_le_matrix(m: np.ndarray) -> np.ndarray:
    n, width = m.shape
    full = np.zeros((n, 8), dtype=np.uint8)
    full[:, :width] = m
    return full.view("<u8").ravel().astype(np.uint64)


@dataclass(frozen=True)
class ControlWordSpec:
    rep_bits: int
    def_bits: int

    @classmethod
    def for_levels(cls, max_rep: int, max_def: int) -> ControlWordSpec:
        return cls(bits_for(max_rep), bits_for(max_def))

    @property
    def width_bytes(self) -> int:
        width = max(1, -(-(self.rep_bits + self.def_bits) // 8))
        if width > 4:
            raise UnsupportedOperationError(
                f"control word needs {self.rep_bits + self.def_bits} bits; at most 32 are supported"
            )
        return width

    def pack(self, rep: np.ndarray, def_: np.ndarray) -> np.ndarray:
        return (np.asarray(rep, dtype=np.uint32) << np.uint32(self.def_bits)) | np.asarray(def_, dtype=np.uint32)

    def unpack(self, words: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        w = np.asarray(words, dtype=np.uint32)
        def_ = w & np.uint32((1 << self.def_bits) - 1)
        rep = (w >> np.uint32(self.def_bits)) & np.uint32((1 << self.rep_bits) - 1)
        return rep.astype(LEVEL_DTYPE), def_.astype(LEVEL_DTYPE)


@dataclass(frozen=True)
class FullZipLayout:
    """Everything needed to interpret a page's bytes, kept in column metadata."""

    max_rep: int
    max_def: int
    row_count: int
    entry_count: int
    length_width: int  # 0 when the codec is fixed-width
    value_width: int  # bytes per value for fixed-width codecs, else 0
    fixed_record_width: int  # 0 for variable pages
    rep_index_width: int  # 0 for fixed pages

    @property
    def control(self) -> ControlWordSpec:
        return ControlWordSpec.for_levels(self.max_rep, self.max_def)

    @property
    def is_fixed(self) -> bool:
        return self.fixed_record_width > 0


@dataclass(frozen=True, eq=False)
class FullZipPage:
    layout: FullZipLayout
    zipped: bytes
    rep_index: np.ndarray | None

    @property
    def fixed_record_width(self) -> int | None:
        return self.layout.fixed_record_width or None

    @property
    def row_count(self) -> int:
        return self.layout.row_count

    def rep_index_bytes(self) -> bytes:
        if self.rep_index is None:
            return b""
        return le_matrix(self.rep_index, self.layout.rep_index_width).tobytes()


def _value_source(codec: Codec, buf: CompressedBuffer) -> tuple[np.ndarray, np.ndarray, int]:
    """Start offsets and lengths of every encoded value, and the fixed width (or 0)."""
    count = buf.value_count
    if codec.variable:
        ext = np.asarray(buf.extents, dtype=np.int64)
        return ext[:-1], np.diff(ext), 0
    width = codec.fixed_value_bytes
    if width is None:
        raise IllegalCodecError(f"{codec.descriptor.id.name} values are not byte aligned; full-zip needs byte extents")
    starts = np.arange(count, dtype=np.int64) * width
    return starts, np.full(count, width, dtype=np.int64), width


def encode_full_zip(levels: RepDefLevels, codec: Codec) -> FullZipPage:
    require_transparent(codec)
    spec = ControlWordSpec.for_levels(levels.max_rep, levels.max_def)
    cw_w = spec.width_bytes
    n = len(levels)
    present = levels.def_ == 0
    buf = codec.encode(levels.leaf_values)
    src_starts, lens, fixed_w = _value_source(codec, buf)
    data = np.frombuffer(buf.data, dtype=np.uint8)
    cw = spec.pack(levels.rep, levels.def_)
    row_count = levels.row_count

    if levels.max_rep == 0 and not codec.variable:
        rec_w = cw_w + fixed_w
        out = np.zeros((n, rec_w), dtype=np.uint8)
        out[:, :cw_w] = le_matrix(cw, cw_w)
        if fixed_w:
            out[present, cw_w:] = data[: len(lens) * fixed_w].reshape(len(lens), fixed_w)
        layout = FullZipLayout(levels.max_rep, levels.max_def, row_count, n, 0, fixed_w, rec_w, 0)
        return FullZipPage(layout, out.tobytes(), None)

    len_w = min_byte_width(int(lens.max()) if len(lens) else 0) if codec.variable else 0
    entry_lens = np.zeros(n, dtype=np.int64)
    entry_lens[present] = lens
    rec_len = cw_w + np.where(present, len_w + entry_lens, 0)
    starts = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(rec_len, out=starts[1:])
    total = int(starts[-1])
    out = np.zeros(total, dtype=np.uint8)
    cw_bytes = le_matrix(cw, cw_w)
    for b in range(cw_w):
        out[starts[:-1] + b] = cw_bytes[:, b]
    value_pos = starts[:-1][present] + cw_w
    if len_w:
        len_bytes = le_matrix(lens, len_w)
        for b in range(len_w):
            out[value_pos + b] = len_bytes[:, b]
    gather(data, src_starts, lens, out, value_pos + len_w)

    row_entries = levels.row_starts()
    rep_index = np.append(starts[row_entries], total).astype(np.uint64)
    layout = FullZipLayout(
        levels.max_rep, levels.max_def, row_count, n, len_w, fixed_w, 0, min_byte_width(total)
    )
    return FullZipPage(layout, out.tobytes(), rep_index)


# ---------------------------------------------------------------------------
# decoding


def _parse_variable(raw: bytes, layout: FullZipLayout, base: int = 0):
    """Walk records sequentially; returns control words and present value extents."""
    cw_w = layout.control.width_bytes
    def_mask = (1 << layout.control.def_bits) - 1
    len_w = layout.length_width
    fixed_len = layout.value_width
    words: list[int] = []
    v_starts: list[int] = []
    v_lens: list[int] = []
    pos = 0
    end = len(raw)
    from_bytes = int.from_bytes
    while pos < end:
        if pos + cw_w > end:
            raise DecodeError("truncated control word", base + pos)
        cw = raw[pos] if cw_w == 1 else from_bytes(raw[pos : pos + cw_w], "little")
        pos += cw_w
        words.append(cw)
        if cw & def_mask:
            continue
        if len_w:
            if pos + len_w > end:
                raise DecodeError("truncated value length", base + pos)
            length = raw[pos] if len_w == 1 else from_bytes(raw[pos : pos + len_w], "little")
            pos += len_w
        else:
            length = fixed_len
        if pos + length > end:
            raise DecodeError("value extends past end of page", base + pos)
        v_starts.append(pos)
        v_lens.append(length)
        pos += length
    return np.asarray(words, dtype=np.uint32), np.asarray(v_starts, dtype=np.int64), np.asarray(v_lens, dtype=np.int64)


def _decode_values(codec: Codec, raw: np.ndarray, starts: np.ndarray, lens: np.ndarray) -> LogicalArray:
    joined = gather(raw, starts, lens).tobytes()
    count = len(starts)
    if codec.variable:
        ext = np.zeros(count + 1, dtype=np.uint64)
        np.cumsum(lens, out=ext[1:])
        buf = CompressedBuffer(joined, count, codec.descriptor, extents=ext)
    else:
        buf = CompressedBuffer(joined, count, codec.descriptor, value_bits=codec.fixed_value_bytes * 8)
    return codec.decode(buf)


def _decode_records(raw: bytes, layout: FullZipLayout, codec: Codec, base: int = 0) -> RepDefLevels:
    spec = layout.control
    cw_w = spec.width_bytes
    arr = np.frombuffer(raw, dtype=np.uint8)
    if layout.is_fixed:
        rec_w = layout.fixed_record_width
        if len(arr) % rec_w:
            raise DecodeError(f"fixed-record page length {len(arr)} is not a multiple of {rec_w}", base + len(arr))
        m = arr.reshape(-1, rec_w)
        rep, def_ = spec.unpack(from_le_matrix(m[:, :cw_w]))
        present = np.flatnonzero(def_ == 0)
        w = layout.value_width
        values = _decode_values(codec, arr, present * rec_w + cw_w, np.full(len(present), w, dtype=np.int64))
    else:
        words, starts, lens = _parse_variable(raw, layout, base)
        rep, def_ = spec.unpack(words)
        values = _decode_values(codec, arr, starts, lens)
    if len(def_) and int(def_.max()) > layout.max_def:
        raise DecodeError("definition level exceeds maximum", base)
    return RepDefLevels(rep, def_, layout.max_rep, layout.max_def, values)


def decode_full_zip_scan(zipped: bytes, layout: FullZipLayout, codec: Codec) -> RepDefLevels:
    """Decode a whole page without looking at the repetition index."""
    levels = _decode_records(zipped, layout, codec)
    if len(levels) != layout.entry_count:
        raise DecodeError(f"page holds {len(levels)} entries, metadata says {layout.entry_count}", len(zipped))
    return levels


def decode_rows(raw: bytes, layout: FullZipLayout, codec: Codec, expected_rows: int, base: int = 0) -> RepDefLevels:
    """Decode the records of a contiguous row range read via :func:`locate_rows`."""
    levels = _decode_records(raw, layout, codec, base)
    if levels.max_rep and len(levels) and levels.rep[0] != levels.max_rep:
        raise DecodeError("row range does not begin at a row boundary", base)
    if levels.row_count != expected_rows:
        raise DecodeError(f"expected {expected_rows} rows, decoded {levels.row_count}", base)
    return levels


# ---------------------------------------------------------------------------
# random access planning


def _check_range(layout: FullZipLayout, i: int, j: int) -> None:
    if not 0 <= i <= j <= layout.row_count:
        raise IndexError(f"rows [{i}, {j}) out of range for page of {layout.row_count}")


def fixed_range(layout: FullZipLayout, i: int, j: int) -> tuple[int, int]:
    """Byte range of rows ``[i, j)`` in a fixed-record page (no index needed)."""
    _check_range(layout, i, j)
    w = layout.fixed_record_width
    return i * w, (j - i) * w


def rep_index_range(layout: FullZipLayout, i: int, j: int) -> tuple[int, int]:
    """Byte range within the repetition index holding entries ``i`` and ``j``."""
    _check_range(layout, i, j)
    w = layout.rep_index_width
    return i * w, (j - i + 1) * w


def data_range_from_index(raw: bytes, layout: FullZipLayout) -> tuple[int, int]:
    """Record byte range given the index bytes read by :func:`rep_index_range`."""
    w = layout.rep_index_width
    if len(raw) < w or len(raw) % w:
        raise DecodeError("repetition index slice truncated", len(raw))
    lo = int.from_bytes(raw[:w], "little")
    hi = int.from_bytes(raw[-w:], "little")
    if hi < lo:
        raise DecodeError("repetition index not monotone")
    return lo, hi - lo


def locate_rows(page: FullZipPage, i: int, j: int) -> list[tuple[str, int, int]]:
    """Reads needed for rows ``[i, j)`` as ``(extent, offset, length)`` steps.

    Fixed pages need one data read. Variable pages need an index read
    followed by a data read addressed by it.
    """
    layout = page.layout
    if layout.is_fixed:
        off, length = fixed_range(layout, i, j)
        return [("data", off, length)]
    off, length = rep_index_range(layout, i, j)
    raw = page.rep_index_bytes()[off : off + length]
    d_off, d_len = data_range_from_index(raw, layout)
    return [("rep_index", off, length), ("data", d_off, d_len)]
