"""Logical data model: data types and immutable nested arrays.

A :class:`LogicalArray` mirrors the Arrow in-memory layout. Primitive arrays
hold a numpy value buffer, ``Utf8``/``Binary`` hold 64-bit offsets plus a
``uint8`` byte buffer, ``List`` holds offsets plus one child, and
``FixedSizeList``/``Struct`` hold their children. Validity is a boolean
numpy array (``True`` = valid) or ``None`` when every row is valid.

Rows marked invalid may carry arbitrary payload. Slicing preserves that
payload, and :func:`array_equal` never looks at it.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Any, Iterable, Sequence

import numpy as np

from zipcol.errors import UndefinedWidthError

# Offsets are counted at this width when estimating serialized payload size.
SERIALIZED_OFFSET_WIDTH = 4


class Kind(enum.IntEnum):
    UINT8 = 1
    UINT16 = 2
    UINT32 = 3
    UINT64 = 4
    INT8 = 5
    INT16 = 6
    INT32 = 7
    INT64 = 8
    FLOAT32 = 9
    FLOAT64 = 10
    BINARY = 11
    UTF8 = 12
    FIXED_SIZE_LIST = 13
    LIST = 14
    STRUCT = 15


_NUMPY_DTYPES = {
    Kind.UINT8: np.dtype("<u1"),
    Kind.UINT16: np.dtype("<u2"),
    Kind.UINT32: np.dtype("<u4"),
    Kind.UINT64: np.dtype("<u8"),
    Kind.INT8: np.dtype("<i1"),
    Kind.INT16: np.dtype("<i2"),
    Kind.INT32: np.dtype("<i4"),
    Kind.INT64: np.dtype("<i8"),
    Kind.FLOAT32: np.dtype("<f4"),
    Kind.FLOAT64: np.dtype("<f8"),
}

_NAMES = {
    Kind.UINT8: "UInt8",
    Kind.UINT16: "UInt16",
    Kind.UINT32: "UInt32",
    Kind.UINT64: "UInt64",
    Kind.INT8: "Int8",
    Kind.INT16: "Int16",
    Kind.INT32: "Int32",
    Kind.INT64: "Int64",
    Kind.FLOAT32: "Float32",
    Kind.FLOAT64: "Float64",
    Kind.BINARY: "Binary",
    Kind.UTF8: "Utf8",
}


@dataclass(frozen=True)
class DataType:
    """A (possibly nested) logical type.

    ``nullable`` belongs to the type so that shredding knows which layers
    need a definition level.
    """

    kind: Kind
    nullable: bool = True
    child: DataType | None = None
    dimension: int = 0
    fields: tuple[tuple[str, DataType], ...] = ()

    @property
    def is_primitive(self) -> bool:
        return self.kind in _NUMPY_DTYPES

    @property
    def is_binary_like(self) -> bool:
        return self.kind in (Kind.BINARY, Kind.UTF8)

    @property
    def is_leaf(self) -> bool:
        """Leaves are shredded as a unit; fixed-size lists count as leaves."""
        return self.is_primitive or self.is_binary_like or self.kind == Kind.FIXED_SIZE_LIST

    @property
    def numpy_dtype(self) -> np.dtype:
        return _NUMPY_DTYPES[self.kind]

    @property
    def byte_width(self) -> int | None:
        """Bytes per value for fixed-width types, ``None`` otherwise."""
        if self.is_primitive:
            return self.numpy_dtype.itemsize
        if self.kind == Kind.FIXED_SIZE_LIST and self.child is not None:
            inner = self.child.byte_width
            return None if inner is None else inner * self.dimension
        return None

    def field_type(self, name: str) -> DataType:
        for fname, ftype in self.fields:
            if fname == name:
                return ftype
        raise KeyError(name)

    def with_nullable(self, nullable: bool) -> DataType:
        return DataType(self.kind, nullable, self.child, self.dimension, self.fields)

    def __str__(self) -> str:
        if self.kind in _NAMES:
            name = _NAMES[self.kind]
        elif self.kind == Kind.LIST:
            name = f"List<{self.child}>"
        elif self.kind == Kind.FIXED_SIZE_LIST:
            name = f"FSL<{self.child},{self.dimension}>"
        else:
            name = "Struct<" + ", ".join(f"{n}: {t}" for n, t in self.fields) + ">"
        return name if self.nullable else name + " not null"


def _prim(kind: Kind):
    def make(nullable: bool = True) -> DataType:
        return DataType(kind, nullable)

    make.__name__ = _NAMES[kind].lower()
    return make


uint8 = _prim(Kind.UINT8)
uint16 = _prim(Kind.UINT16)
uint32 = _prim(Kind.UINT32)
uint64 = _prim(Kind.UINT64)
int8 = _prim(Kind.INT8)
int16 = _prim(Kind.INT16)
int32 = _prim(Kind.INT32)
int64 = _prim(Kind.INT64)
float32 = _prim(Kind.FLOAT32)
float64 = _prim(Kind.FLOAT64)
binary = _prim(Kind.BINARY)
utf8 = _prim(Kind.UTF8)


def list_(child: DataType, nullable: bool = True) -> DataType:
    return DataType(Kind.LIST, nullable, child=child)


def fixed_size_list(child: DataType, dimension: int, nullable: bool = True) -> DataType:
    return DataType(Kind.FIXED_SIZE_LIST, nullable, child=child, dimension=dimension)


def struct(fields: Iterable[tuple[str, DataType]], nullable: bool = True) -> DataType:
    return DataType(Kind.STRUCT, nullable, fields=tuple(fields))


def dtype_problem(dtype: DataType) -> str | None:
    """Return the first violated type invariant, or ``None``."""
    if dtype.is_primitive or dtype.is_binary_like:
        return None
    if dtype.kind == Kind.FIXED_SIZE_LIST:
        if dtype.dimension < 1:
            return "fixed-size-list dimension must be >= 1"
        if dtype.child is None or dtype.child.byte_width is None:
            return "fixed-size-list child must be fixed-width"
        return dtype_problem(dtype.child)
    if dtype.kind == Kind.LIST:
        if dtype.child is None:
            return "list without child type"
        return dtype_problem(dtype.child)
    if dtype.kind == Kind.STRUCT:
        if not dtype.fields:
            return "struct must have at least one field"
        names = [n for n, _ in dtype.fields]
        if len(set(names)) != len(names):
            return "duplicate struct field names"
        for _, ftype in dtype.fields:
            problem = dtype_problem(ftype)
            if problem:
                return problem
        return None
    return f"unknown kind {dtype.kind!r}"


@dataclass(frozen=True, eq=False)
class LogicalArray:
    dtype: DataType
    length: int
    validity: np.ndarray | None = None
    values: np.ndarray | None = None
    offsets: np.ndarray | None = None
    data: np.ndarray | None = None
    children: tuple[LogicalArray, ...] = field(default=())

    def __len__(self) -> int:
        return self.length

    @property
    def child(self) -> LogicalArray:
        return self.children[0]

    def field(self, name: str) -> LogicalArray:
        for (fname, _), child in zip(self.dtype.fields, self.children):
            if fname == name:
                return child
        raise KeyError(name)

    def is_valid(self) -> np.ndarray:
        if self.validity is None:
            return np.ones(self.length, dtype=bool)
        return self.validity

    @property
    def null_count(self) -> int:
        return 0 if self.validity is None else int(self.length - self.validity.sum())

    def __repr__(self) -> str:
        return f"LogicalArray({self.dtype}, length={self.length})"

    def to_pylist(self) -> list:
        return to_pylist(self)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, LogicalArray):
            return NotImplemented
        return array_equal(self, other)

    __hash__ = None  # type: ignore[assignment]


def _offsets(values: Sequence[int] | np.ndarray) -> np.ndarray:
    return np.asarray(values, dtype=np.uint64)


def primitive_array(dtype: DataType, values, validity=None) -> LogicalArray:
    values = np.ascontiguousarray(values, dtype=dtype.numpy_dtype)
    if validity is not None:
        validity = np.asarray(validity, dtype=bool)
    return LogicalArray(dtype, len(values), validity=validity, values=values)


def binary_array(dtype: DataType, offsets, data, validity=None) -> LogicalArray:
    offsets = _offsets(offsets)
    data = np.frombuffer(bytes(data), dtype=np.uint8) if isinstance(data, (bytes, bytearray)) else np.asarray(data, dtype=np.uint8)
    return LogicalArray(dtype, len(offsets) - 1, validity=validity, offsets=offsets, data=data)


def list_array(dtype: DataType, offsets, child: LogicalArray, validity=None) -> LogicalArray:
    offsets = _offsets(offsets)
    return LogicalArray(dtype, len(offsets) - 1, validity=validity, offsets=offsets, children=(child,))


def fixed_size_list_array(dtype: DataType, child: LogicalArray, validity=None) -> LogicalArray:
    return LogicalArray(dtype, child.length // max(dtype.dimension, 1), validity=validity, children=(child,))


def struct_array(dtype: DataType, children: Sequence[LogicalArray], length: int | None = None, validity=None) -> LogicalArray:
    if length is None:
        length = children[0].length if children else 0
    return LogicalArray(dtype, length, validity=validity, children=tuple(children))


def empty_array(dtype: DataType) -> LogicalArray:
    return from_pylist([], dtype)


# ---------------------------------------------------------------------------
# validation


def validate(array: LogicalArray) -> str | None:
    """Check every structural invariant.

    Returns ``None`` when the array is well formed, otherwise a short
    description of the first violated invariant. Never mutates the input.
    """
    problem = dtype_problem(array.dtype)
    if problem:
        return problem
    return _validate(array)


def _validate(a: LogicalArray) -> str | None:
    dt = a.dtype
    if a.length < 0:
        return "negative length"
    if a.validity is not None:
        if len(a.validity) != a.length:
            return "validity length mismatch"
        if not dt.nullable and not a.validity.all():
            return "null in non-nullable array"
    if dt.is_primitive:
        if a.values is None or len(a.values) != a.length:
            return "value buffer length mismatch"
        if a.values.dtype != dt.numpy_dtype:
            return "value buffer has wrong element type"
        return None
    if dt.is_binary_like or dt.kind == Kind.LIST:
        off = a.offsets
        if off is None or len(off) != a.length + 1:
            return "offsets length mismatch"
        if off[0] != 0:
            return "offsets must start at 0"
        if len(off) > 1 and np.any(np.diff(off.astype(np.int64)) < 0):
            return "offsets not monotone"
        end = int(off[-1])
        if dt.is_binary_like:
            if a.data is None or end != len(a.data):
                return "offsets do not end at byte-buffer length"
            return None
        if len(a.children) != 1:
            return "list must have exactly one child"
        if end != a.child.length:
            return "offsets do not end at child length"
        return _validate(a.child)
    if dt.kind == Kind.FIXED_SIZE_LIST:
        if len(a.children) != 1:
            return "fixed-size-list must have exactly one child"
        if a.child.length != a.length * dt.dimension:
            return "fixed-size-list child length mismatch"
        if a.child.validity is not None and not a.child.validity.all():
            return "fixed-size-list items may not be null"
        return _validate(a.child)
    if dt.kind == Kind.STRUCT:
        if len(a.children) != len(dt.fields):
            return "struct child count mismatch"
        for child, (_, ftype) in zip(a.children, dt.fields):
            if child.dtype != ftype:
                return "struct child type mismatch"
            if child.length != a.length:
                return "child length mismatch"
        for child in a.children:
            problem = _validate(child)
            if problem:
                return problem
        return None
    return "unknown kind"


def check(array: LogicalArray) -> LogicalArray:
    problem = validate(array)
    if problem:
        raise ValueError(f"invalid array: {problem}")
    return array


# ---------------------------------------------------------------------------
# width accounting


def payload_bytes(a: LogicalArray) -> int:
    """Serialized leaf payload: value buffers plus offsets at 4 bytes each."""
    dt = a.dtype
    if dt.is_primitive:
        return a.length * dt.numpy_dtype.itemsize
    if dt.is_binary_like:
        return int(a.offsets[-1] - a.offsets[0]) + (a.length + 1) * SERIALIZED_OFFSET_WIDTH
    if dt.kind == Kind.LIST:
        return (a.length + 1) * SERIALIZED_OFFSET_WIDTH + payload_bytes(a.child)
    if dt.kind == Kind.FIXED_SIZE_LIST:
        return payload_bytes(a.child)
    return sum(payload_bytes(c) for c in a.children)


def avg_value_width(a: LogicalArray) -> float:
    """Average serialized payload bytes per top-level row."""
    if a.length == 0:
        raise UndefinedWidthError("undefined width: zero-length array")
    return payload_bytes(a) / a.length


# ---------------------------------------------------------------------------
# slicing / take / concat


def slice_array(a: LogicalArray, start: int, length: int) -> LogicalArray:
    """Rows ``[start, start + length)`` with offsets re-based to zero."""
    if start < 0 or length < 0 or start + length > a.length:
        raise IndexError(f"slice [{start}, {start + length}) out of range for length {a.length}")
    stop = start + length
    validity = None if a.validity is None else a.validity[start:stop]
    dt = a.dtype
    if dt.is_primitive:
        return LogicalArray(dt, length, validity, values=a.values[start:stop])
    if dt.is_binary_like or dt.kind == Kind.LIST:
        off = a.offsets[start : stop + 1]
        lo, hi = int(off[0]), int(off[-1])
        off = off - off[0]
        if dt.is_binary_like:
            return LogicalArray(dt, length, validity, offsets=off, data=a.data[lo:hi])
        return LogicalArray(dt, length, validity, offsets=off, children=(slice_array(a.child, lo, hi - lo),))
    if dt.kind == Kind.FIXED_SIZE_LIST:
        d = dt.dimension
        return LogicalArray(dt, length, validity, children=(slice_array(a.child, start * d, length * d),))
    return LogicalArray(dt, length, validity, children=tuple(slice_array(c, start, length) for c in a.children))


def ranges(starts: np.ndarray, lengths: np.ndarray) -> np.ndarray:
    """Concatenation of ``arange(s, s + n)`` for each pair, vectorized."""
    starts = np.asarray(starts, dtype=np.int64)
    lengths = np.asarray(lengths, dtype=np.int64)
    total = int(lengths.sum())
    if total == 0:
        return np.zeros(0, dtype=np.int64)
    group_starts = np.cumsum(lengths) - lengths
    out = np.arange(total, dtype=np.int64)
    out += np.repeat(starts - group_starts, lengths)
    return out


_GATHER_BLOCK = 1 << 22
_SLICE_COPY_MIN = 256


def gather(src: np.ndarray, starts, lengths, dst: np.ndarray | None = None, dst_starts=None) -> np.ndarray:
    """Copy ``src[s:s + n]`` for each pair into ``dst`` at ``dst_starts``
    (default: concatenated into a new array).

    Long runs are copied as slices; short ones are gathered with index
    arrays built in blocks of about 4 Mi elements.
    """
    starts = np.asarray(starts, dtype=np.int64)
    lengths = np.asarray(lengths, dtype=np.int64)
    cum = np.cumsum(lengths)
    total = int(cum[-1]) if len(cum) else 0
    if dst is None:
        dst = np.empty(total, dtype=src.dtype)
        dst_starts = cum - lengths
    else:
        dst_starts = np.asarray(dst_starts, dtype=np.int64)
    big = np.flatnonzero(lengths >= _SLICE_COPY_MIN)
    for s, d, n in zip(starts[big].tolist(), dst_starts[big].tolist(), lengths[big].tolist()):
        dst[d : d + n] = src[s : s + n]
    if len(big):
        small = lengths < _SLICE_COPY_MIN
        starts, lengths, dst_starts = starts[small], lengths[small], dst_starts[small]
        cum = np.cumsum(lengths)
        total = int(cum[-1]) if len(cum) else 0
    edges = [0]
    if total > _GATHER_BLOCK:
        marks = np.searchsorted(cum, np.arange(_GATHER_BLOCK, total, _GATHER_BLOCK), side="left") + 1
        edges.extend(np.unique(marks).tolist())
    edges.append(len(lengths))
    for a, b in zip(edges, edges[1:]):
        if b > a:
            dst[ranges(dst_starts[a:b], lengths[a:b])] = src[ranges(starts[a:b], lengths[a:b])]
    return dst


def take(a: LogicalArray, indices) -> LogicalArray:
    """Gather rows by index (any order, repeats allowed)."""
    idx = np.asarray(indices, dtype=np.int64)
    if len(idx) and (idx.min() < 0 or idx.max() >= a.length):
        raise IndexError("take index out of range")
    n = len(idx)
    validity = None if a.validity is None else a.validity[idx]
    dt = a.dtype
    if dt.is_primitive:
        return LogicalArray(dt, n, validity, values=a.values[idx])
    if dt.is_binary_like or dt.kind == Kind.LIST:
        off = a.offsets.astype(np.int64)
        starts = off[idx]
        lens = off[idx + 1] - starts
        new_off = np.zeros(n + 1, dtype=np.uint64)
        np.cumsum(lens, out=new_off[1:])
        if dt.is_binary_like:
            return LogicalArray(dt, n, validity, offsets=new_off, data=gather(a.data, starts, lens))
        sel = ranges(starts, lens)
        return LogicalArray(dt, n, validity, offsets=new_off, children=(take(a.child, sel),))
    if dt.kind == Kind.FIXED_SIZE_LIST:
        d = dt.dimension
        sel = (idx[:, None] * d + np.arange(d, dtype=np.int64)).ravel()
        return LogicalArray(dt, n, validity, children=(take(a.child, sel),))
    return LogicalArray(dt, n, validity, children=tuple(take(c, idx) for c in a.children))


def concat(arrays: Sequence[LogicalArray], dtype: DataType | None = None) -> LogicalArray:
    if not arrays:
        if dtype is None:
            raise ValueError("cannot concatenate zero arrays without a dtype")
        return empty_array(dtype)
    dt = arrays[0].dtype if dtype is None else dtype
    if len(arrays) == 1:
        return arrays[0]
    n = sum(a.length for a in arrays)
    if any(a.validity is not None for a in arrays):
        validity = np.concatenate([a.is_valid() for a in arrays])
    else:
        validity = None
    if dt.is_primitive:
        return LogicalArray(dt, n, validity, values=np.concatenate([a.values for a in arrays]))
    if dt.is_binary_like or dt.kind == Kind.LIST:
        parts = [np.zeros(1, dtype=np.uint64)]
        base = 0
        for a in arrays:
            parts.append(a.offsets[1:] + np.uint64(base))
            base += int(a.offsets[-1])
        off = np.concatenate(parts)
        if dt.is_binary_like:
            return LogicalArray(dt, n, validity, offsets=off, data=np.concatenate([a.data for a in arrays]))
        return LogicalArray(dt, n, validity, offsets=off, children=(concat([a.child for a in arrays], dt.child),))
    if dt.kind == Kind.FIXED_SIZE_LIST:
        return LogicalArray(dt, n, validity, children=(concat([a.child for a in arrays], dt.child),))
    children = tuple(
        concat([a.children[i] for a in arrays], ftype) for i, (_, ftype) in enumerate(dt.fields)
    )
    return LogicalArray(dt, n, validity, children=children)


# ---------------------------------------------------------------------------
# logical equality


def array_equal(a: LogicalArray, b: LogicalArray) -> bool:
    """Equal iff dtype, length, validity and payload of valid rows match.

    Floating point values are compared bit for bit, so NaN payloads compare
    equal to themselves.
    """
    if a.dtype != b.dtype or a.length != b.length:
        return False
    return _equal(a, b, np.ones(a.length, dtype=bool))


def _bits_view(values: np.ndarray) -> np.ndarray:
    return values.view(np.dtype(f"<u{values.dtype.itemsize}"))


def _equal(a: LogicalArray, b: LogicalArray, mask: np.ndarray) -> bool:
    va, vb = a.is_valid(), b.is_valid()
    if not np.array_equal(va[mask], vb[mask]):
        return False
    rows = np.flatnonzero(mask & va)
    dt = a.dtype
    if dt.is_primitive:
        return np.array_equal(_bits_view(a.values[rows]), _bits_view(b.values[rows]))
    if dt.kind == Kind.STRUCT:
        m = np.zeros(a.length, dtype=bool)
        m[rows] = True
        return all(_equal(ca, cb, m) for ca, cb in zip(a.children, b.children))
    if dt.kind == Kind.FIXED_SIZE_LIST:
        d = dt.dimension
        sel = (rows[:, None] * d + np.arange(d, dtype=np.int64)).ravel()
        ta, tb = take(a.child, sel), take(b.child, sel)
        return _equal(ta, tb, np.ones(ta.length, dtype=bool))
    oa, ob = a.offsets.astype(np.int64), b.offsets.astype(np.int64)
    la = oa[rows + 1] - oa[rows]
    lb = ob[rows + 1] - ob[rows]
    if not np.array_equal(la, lb):
        return False
    sa, sb = ranges(oa[rows], la), ranges(ob[rows], lb)
    if dt.is_binary_like:
        return np.array_equal(a.data[sa], b.data[sb])
    ta, tb = take(a.child, sa), take(b.child, sb)
    return _equal(ta, tb, np.ones(ta.length, dtype=bool))


# ---------------------------------------------------------------------------
# python conversion


def _placeholder(dtype: DataType) -> Any:
    if dtype.nullable:
        return None
    if dtype.is_primitive:
        return 0
    if dtype.kind == Kind.UTF8:
        return ""
    if dtype.kind == Kind.BINARY:
        return b""
    if dtype.kind == Kind.LIST:
        return []
    if dtype.kind == Kind.FIXED_SIZE_LIST:
        return [_placeholder(dtype.child)] * dtype.dimension
    return {name: _placeholder(ftype) for name, ftype in dtype.fields}


def from_pylist(values: Sequence[Any], dtype: DataType) -> LogicalArray:
    """Build an array from python objects; ``None`` marks a null row.

    Structs are given as dicts, lists and fixed-size lists as sequences.
    """
    n = len(values)
    nulls = [v is None for v in values]
    if any(nulls):
        if not dtype.nullable:
            raise ValueError(f"null value for non-nullable {dtype}")
        validity = ~np.asarray(nulls, dtype=bool)
    else:
        validity = None
    if dtype.is_primitive:
        fill = [0 if v is None else v for v in values]
        return LogicalArray(dtype, n, validity, values=np.array(fill, dtype=dtype.numpy_dtype).reshape(n))
    if dtype.is_binary_like:
        if dtype.kind == Kind.UTF8:
            encoded = [b"" if v is None else v.encode("utf-8") for v in values]
        else:
            encoded = [b"" if v is None else bytes(v) for v in values]
        off = np.zeros(n + 1, dtype=np.uint64)
        np.cumsum([len(e) for e in encoded], out=off[1:])
        data = np.frombuffer(b"".join(encoded), dtype=np.uint8).copy()
        return LogicalArray(dtype, n, validity, offsets=off, data=data)
    if dtype.kind == Kind.LIST:
        items: list[Any] = []
        lens = []
        for v in values:
            seq = [] if v is None else list(v)
            items.extend(seq)
            lens.append(len(seq))
        off = np.zeros(n + 1, dtype=np.uint64)
        np.cumsum(lens, out=off[1:])
        return LogicalArray(dtype, n, validity, offsets=off, children=(from_pylist(items, dtype.child),))
    if dtype.kind == Kind.FIXED_SIZE_LIST:
        d = dtype.dimension
        flat: list[Any] = []
        for v in values:
            if v is None:
                flat.extend([_placeholder(dtype.child.with_nullable(False))] * d)
            else:
                if len(v) != d:
                    raise ValueError(f"expected {d} items, got {len(v)}")
                flat.extend(v)
        child = from_pylist(flat, dtype.child)
        return LogicalArray(dtype, n, validity, children=(child,))
    children = []
    for name, ftype in dtype.fields:
        col = [_placeholder(ftype) if v is None else v.get(name, _placeholder(ftype)) for v in values]
        children.append(from_pylist(col, ftype))
    return LogicalArray(dtype, n, validity, children=tuple(children))


def to_pylist(a: LogicalArray) -> list:
    valid = a.is_valid()
    dt = a.dtype
    if dt.is_primitive:
        vals = a.values.tolist()
        out = vals
    elif dt.is_binary_like:
        raw = a.data.tobytes()
        off = a.offsets.tolist()
        out = [raw[off[i] : off[i + 1]] for i in range(a.length)]
        if dt.kind == Kind.UTF8:
            out = [b.decode("utf-8", errors="surrogateescape") if valid[i] else None for i, b in enumerate(out)]
    elif dt.kind == Kind.LIST:
        items = to_pylist(a.child)
        off = a.offsets.tolist()
        out = [items[off[i] : off[i + 1]] for i in range(a.length)]
    elif dt.kind == Kind.FIXED_SIZE_LIST:
        items = to_pylist(a.child)
        d = dt.dimension
        out = [items[i * d : (i + 1) * d] for i in range(a.length)]
    else:
        cols = [to_pylist(c) for c in a.children]
        names = [n for n, _ in dt.fields]
        out = [dict(zip(names, row)) for row in zip(*cols)] if cols else [{} for _ in range(a.length)]
    if a.validity is None:
        return out
    return [v if ok else None for v, ok in zip(out, valid.tolist())]


# ---------------------------------------------------------------------------
# fixed-width byte views used by the codecs


def fixed_bytes(a: LogicalArray) -> np.ndarray:
    """Little-endian value bytes of a fixed-width array as an ``(n, w)`` matrix."""
    dt = a.dtype
    width = dt.byte_width
    if width is None:
        raise TypeError(f"{dt} is not fixed-width")
    if dt.is_primitive:
        raw = np.ascontiguousarray(a.values).view(np.uint8)
        return raw.reshape(a.length, width)
    return fixed_bytes(a.child).reshape(a.length, width)


def from_fixed_bytes(dtype: DataType, raw: np.ndarray | bytes, count: int) -> LogicalArray:
    """Inverse of :func:`fixed_bytes` producing a non-null array."""
    buf = np.frombuffer(raw, dtype=np.uint8) if isinstance(raw, (bytes, bytearray, memoryview)) else np.asarray(raw, dtype=np.uint8).reshape(-1)
    width = dtype.byte_width
    buf = np.ascontiguousarray(buf[: count * width])
    if dtype.is_primitive:
        return LogicalArray(dtype, count, values=buf.view(dtype.numpy_dtype).copy())
    child = from_fixed_bytes(dtype.child, buf, count * dtype.dimension)
    return LogicalArray(dtype, count, children=(child,))
