"""Struct packing: store a whole struct as a single leaf column.

Packed value layout (little-endian)::

    [field null bitmap, ceil(k / 8) bytes]   only if any field is nullable
    per field, in order:
        fixed-width field     value bytes (zeros when null)
        variable-width field  u32 length, then the bytes

If every field is fixed-width the packed leaf is ``FSL<UInt8, W>``,
otherwise it is ``Binary``. The struct's own validity becomes the leaf's.
"""

from __future__ import annotations

import numpy as np

from zipcol.arrays import (
    DataType,
    Kind,
    LogicalArray,
    binary,
    fixed_bytes,
    fixed_size_list,
    from_fixed_bytes,
    gather,
    uint8,
)
from zipcol.errors import UnsupportedOperationError


def _check_fields(dtype: DataType) -> None:
    if dtype.kind != Kind.STRUCT:
        raise UnsupportedOperationError(f"only structs can be packed, got {dtype}")
    for name, ftype in dtype.fields:
        if not ftype.is_leaf:
            raise UnsupportedOperationError(f"packed struct field {name!r} must be a leaf type, got {ftype}")


def _has_bitmap(dtype: DataType) -> bool:
    return any(ftype.nullable for _, ftype in dtype.fields)


def packed_width(dtype: DataType) -> int | None:
    """Bytes per packed value when every field is fixed-width, else ``None``."""
    _check_fields(dtype)
    widths = [ftype.byte_width for _, ftype in dtype.fields]
    if any(w is None for w in widths):
        return None
    bitmap = -(-len(widths) // 8) if _has_bitmap(dtype) else 0
    return bitmap + sum(widths)


def packed_dtype(dtype: DataType) -> DataType:
    width = packed_width(dtype)
    if width is None:
        return binary(dtype.nullable)
    return fixed_size_list(uint8(False), width, dtype.nullable)


def pack_struct(array: LogicalArray) -> LogicalArray:
    """Pack the struct's fields into one value per row."""
    dtype = array.dtype
    _check_fields(dtype)
    n = array.length
    valid_rows = array.is_valid()
    segments: list[tuple[np.ndarray, np.ndarray | None, np.ndarray | None]] = []
    # (fixed matrix, None, None) or (None, source bytes, [starts, lengths])
    if _has_bitmap(dtype):
        bits = np.stack([c.is_valid() & valid_rows for c in array.children], axis=1)
        nb = -(-len(dtype.fields) // 8)
        segments.append((np.packbits(bits, axis=1, bitorder="little").reshape(n, nb), None, None))
    for child, (_, ftype) in zip(array.children, dtype.fields):
        live = child.is_valid() & valid_rows
        if ftype.byte_width is not None:
            m = fixed_bytes(child).copy()
            m[~live] = 0
            segments.append((m, None, None))
        else:
            off = child.offsets.astype(np.int64)
            lens = np.where(live, off[1:] - off[:-1], 0)
            segments.append((lens.astype("<u4").view(np.uint8).reshape(n, 4), None, None))
            segments.append((None, child.data, np.stack([off[:-1], lens])))
    width = packed_width(dtype)
    if width is not None:
        mat = np.concatenate([s[0] for s in segments], axis=1) if segments else np.zeros((n, 0), np.uint8)
        fixed = from_fixed_bytes(packed_dtype(dtype), mat, n)
        return LogicalArray(fixed.dtype, n, array.validity, children=fixed.children)
    seg_lens = [np.full(n, s[0].shape[1], dtype=np.int64) if s[0] is not None else s[2][1] for s in segments]
    row_lens = np.sum(seg_lens, axis=0) if seg_lens else np.zeros(n, dtype=np.int64)
    offsets = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(row_lens, out=offsets[1:])
    out = np.zeros(int(offsets[-1]), dtype=np.uint8)
    pos = offsets[:-1].copy()
    for (mat, src, spans), lens in zip(segments, seg_lens):
        if mat is not None:
            w = mat.shape[1]
            out[(pos[:, None] + np.arange(w)).ravel()] = mat.ravel()
        else:
            gather(src, spans[0], lens, out, pos)
        pos += lens
    return LogicalArray(packed_dtype(dtype), n, array.validity, offsets=offsets.astype(np.uint64), data=out)


def unpack_struct(packed: LogicalArray, dtype: DataType) -> LogicalArray:
    """Inverse of :func:`pack_struct`."""
    _check_fields(dtype)
    n = packed.length
    if packed.dtype.kind == Kind.FIXED_SIZE_LIST:
        raw = fixed_bytes(packed.child).reshape(-1) if n else np.zeros(0, np.uint8)
        width = packed.dtype.dimension
        pos = np.arange(n, dtype=np.int64) * width
    else:
        raw = packed.data
        pos = packed.offsets[:-1].astype(np.int64)
    k = len(dtype.fields)
    field_valid = None
    if _has_bitmap(dtype):
        nb = -(-k // 8)
        bm = raw[(pos[:, None] + np.arange(nb)).ravel()].reshape(n, nb)
        field_valid = np.unpackbits(bm, axis=1, bitorder="little", count=k).astype(bool) if n else np.zeros((0, k), bool)
        pos = pos + nb
    children = []
    for i, (_, ftype) in enumerate(dtype.fields):
        validity = None
        if ftype.nullable and field_valid is not None:
            v = field_valid[:, i]
            validity = None if v.all() else v.copy()
        w = ftype.byte_width
        if w is not None:
            m = raw[(pos[:, None] + np.arange(w)).ravel()]
            col = from_fixed_bytes(ftype, m, n)
            pos = pos + w
        else:
            lb = raw[(pos[:, None] + np.arange(4)).ravel()].reshape(n, 4)
            lens = np.ascontiguousarray(lb).view("<u4").ravel().astype(np.int64) if n else np.zeros(0, np.int64)
            pos = pos + 4
            off = np.zeros(n + 1, dtype=np.uint64)
            np.cumsum(lens, out=off[1:])
            col = LogicalArray(ftype, n, offsets=off, data=gather(raw, pos, lens))
            pos = pos + lens
        children.append(LogicalArray(ftype, n, validity, col.values, col.offsets, col.data, col.children))
    return LogicalArray(dtype, n, packed.validity, children=tuple(children))
