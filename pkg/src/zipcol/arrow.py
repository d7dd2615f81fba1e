"""Arrow-style baseline layout.

Buffers are written densely in pre-order: for every node its validity
bitmap (nullable types only), its offsets (``List``/``Binary``/``Utf8``,
u64), and its values (primitives and string bytes), followed by the
children. There is no paging, chunking or compression.

Random access follows the buffer dependencies: a list's offsets must be
read before its child can be addressed, so every list layer (and every
string's byte buffer) adds a phase of reads.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from zipcol.arrays import DataType, Kind, LogicalArray
from zipcol.io import SECTOR, IoEngine, ReadRequest
from zipcol.errors import DecodeError

VALIDITY = "validity"
OFFSETS = "offsets"
VALUES = "values"


@dataclass
class _Node:
    dtype: DataType
    validity: int | None = None  # buffer ids
    offsets: int | None = None
    values: int | None = None
    children: list[_Node] = field(default_factory=list)


def buffer_layout(dtype: DataType) -> list[tuple[str, DataType]]:
    """``(buffer kind, owning type)`` for every buffer in file order."""
    out: list[tuple[str, DataType]] = []
    _build_tree(dtype, out)
    return out


def _build_tree(dtype: DataType, out: list) -> _Node:
    node = _Node(dtype)
    if dtype.nullable:
        node.validity = len(out)
        out.append((VALIDITY, dtype))
    if dtype.kind == Kind.LIST or dtype.is_binary_like:
        node.offsets = len(out)
        out.append((OFFSETS, dtype))
    if dtype.is_primitive or dtype.is_binary_like:
        node.values = len(out)
        out.append((VALUES, dtype))
    if dtype.kind in (Kind.LIST, Kind.FIXED_SIZE_LIST):
        node.children.append(_build_tree(dtype.child, out))
    elif dtype.kind == Kind.STRUCT:
        node.children.extend(_build_tree(ftype, out) for _, ftype in dtype.fields)
    return node


def arrow_buffers(array: LogicalArray) -> list[bytes]:
    out: list[bytes] = []
    _emit(array, out)
    return out


def _emit(a: LogicalArray, out: list[bytes]) -> None:
    dt = a.dtype
    if dt.nullable:
        out.append(np.packbits(a.is_valid(), bitorder="little").tobytes())
    if dt.kind == Kind.LIST or dt.is_binary_like:
        out.append(a.offsets.astype("<u8").tobytes())
    if dt.is_primitive:
        out.append(np.ascontiguousarray(a.values).tobytes())
    elif dt.is_binary_like:
        out.append(a.data.tobytes())
    for child in a.children:
        _emit(child, out)


def _bits(raw: bytes, start_bit: int, count: int) -> np.ndarray:
    bits = np.unpackbits(np.frombuffer(raw, dtype=np.uint8), bitorder="little")
    if start_bit + count > len(bits):
        raise DecodeError("validity bitmap truncated")
    return bits[start_bit : start_bit + count].astype(bool)


def _with_validity(dt: DataType, length: int, validity: np.ndarray | None, **kw) -> LogicalArray:
    if validity is not None and validity.all():
        validity = None
    return LogicalArray(dt, length, validity, **kw)


class ArrowColumn:
    """Reader over one column stored in the baseline layout."""

    def __init__(self, dtype: DataType, length: int, extents: list[tuple[int, int]]):
        layout: list = []
        self.root = _build_tree(dtype, layout)
        if len(layout) != len(extents):
            raise DecodeError(f"type needs {len(layout)} buffers, metadata lists {len(extents)}")
        self.dtype = dtype
        self.length = length
        self.extents = extents
        self.kinds = [k for k, _ in layout]

    # -- scan --------------------------------------------------------------

    def scan(self, engine: IoEngine) -> LogicalArray:
        raws = engine.submit([ReadRequest(o, n, "data") for o, n in self.extents])
        return self._decode(self.root, raws, self.length)

    def _decode(self, node: _Node, raws: list[bytes], n: int) -> LogicalArray:
        dt = node.dtype
        validity = _bits(raws[node.validity], 0, n) if node.validity is not None else None
        if dt.is_primitive:
            vals = np.frombuffer(raws[node.values], dtype=dt.numpy_dtype, count=n).copy()
            return _with_validity(dt, n, validity, values=vals)
        offsets = None
        if node.offsets is not None:
            offsets = np.frombuffer(raws[node.offsets], dtype="<u8", count=n + 1).astype(np.uint64)
        if dt.is_binary_like:
            data = np.frombuffer(raws[node.values], dtype=np.uint8).copy()
            return _with_validity(dt, n, validity, offsets=offsets, data=data)
        if dt.kind == Kind.LIST:
            child = self._decode(node.children[0], raws, int(offsets[-1]))
            return _with_validity(dt, n, validity, offsets=offsets, children=(child,))
        if dt.kind == Kind.FIXED_SIZE_LIST:
            child = self._decode(node.children[0], raws, n * dt.dimension)
            return _with_validity(dt, n, validity, children=(child,))
        kids = tuple(self._decode(c, raws, n) for c in node.children)
        return _with_validity(dt, n, validity, children=kids)

    # -- take --------------------------------------------------------------

    def take(self, engine: IoEngine, rows) -> tuple[LogicalArray, list[tuple[int, ReadRequest]]]:
        """Gather ``rows`` (one row range per index); returns the rows and a
        ``(phase, request)`` trace."""
        rows = np.asarray(rows, dtype=np.int64)
        if len(rows) and (rows.min() < 0 or rows.max() >= self.length):
            raise IndexError("row out of range")
        root = _Task(self.root, rows, rows + 1)
        trace: list[tuple[int, ReadRequest]] = []
        ready = [root]
        phase = 0
        while ready:
            phase += 1
            expanded = []
            stack = list(ready)
            while stack:
                task = stack.pop()
                expanded.append(task)
                stack.extend(task.same_phase_children())
            requests: list[ReadRequest] = []
            owners: list[tuple[_Task, str, int]] = []
            for task in expanded:
                for kind, req, i in task.requests(self.extents):
                    owners.append((task, kind, i))
                    requests.append(req)
            raws = engine.submit(requests) if requests else []
            trace.extend((phase, r) for r in requests)
            for (task, kind, i), raw in zip(owners, raws):
                task.accept(kind, i, raw)
            ready = [nxt for task in expanded for nxt in task.next_phase()]
        return root.build(), trace


def _sector_span(lo: int, hi: int, length: int) -> tuple[int, int]:
    """Sector-aligned byte range of a bitmap covering bits ``[lo, hi)``."""
    first = (lo // 8) // SECTOR * SECTOR
    if hi <= lo:
        return first, first
    end = -(-hi // 8)
    end = -(-end // SECTOR) * SECTOR
    return first, min(end, length)


class _Task:
    """Reads needed for one node over a list of row ranges ``[lo[i], hi[i])``."""

    def __init__(self, node: _Node, lo: np.ndarray, hi: np.ndarray, data_only: bool = False):
        self.node = node
        self.lo = lo
        self.hi = hi
        self.data_only = data_only  # string byte reads of a binary node
        self.validity_parts: list = [None] * len(lo)
        self.offset_parts: list = [None] * len(lo)
        self.value_parts: list = [None] * len(lo)
        self.children: list[_Task] = []
        self.data_task: _Task | None = None

    def same_phase_children(self) -> list[_Task]:
        dt = self.node.dtype
        if self.data_only:
            return []
        if dt.kind == Kind.FIXED_SIZE_LIST:
            d = dt.dimension
            self.children = [_Task(self.node.children[0], self.lo * d, self.hi * d)]
        elif dt.kind == Kind.STRUCT:
            self.children = [_Task(c, self.lo, self.hi) for c in self.node.children]
        return self.children

    def requests(self, extents):
        node = self.node
        dt = node.dtype
        out = []
        for i, (lo, hi) in enumerate(zip(self.lo.tolist(), self.hi.tolist())):
            if self.data_only:
                off, _ = extents[node.values]
                out.append((VALUES, ReadRequest(off + lo, hi - lo, "data"), i))
                continue
            if node.validity is not None:
                off, length = extents[node.validity]
                first, last = _sector_span(lo, hi, length)
                out.append((VALIDITY, ReadRequest(off + first, last - first, "validity"), i))
            if node.offsets is not None:
                off, _ = extents[node.offsets]
                out.append((OFFSETS, ReadRequest(off + 8 * lo, 8 * (hi - lo + 1), "offsets"), i))
            if dt.is_primitive:
                off, _ = extents[node.values]
                w = dt.numpy_dtype.itemsize
                out.append((VALUES, ReadRequest(off + w * lo, w * (hi - lo), "data"), i))
        return out

    def accept(self, kind: str, i: int, raw: bytes) -> None:
        if kind == VALIDITY:
            lo, hi = int(self.lo[i]), int(self.hi[i])
            first, _ = _sector_span(lo, hi, len(raw) + 1)
            self.validity_parts[i] = _bits(raw, lo - first * 8, hi - lo) if hi > lo else np.zeros(0, bool)
        elif kind == OFFSETS:
            self.offset_parts[i] = np.frombuffer(raw, dtype="<u8").astype(np.int64)
        else:
            self.value_parts[i] = raw

    def next_phase(self) -> list[_Task]:
        if self.data_only:
            return []
        dt = self.node.dtype
        if self.node.offsets is None:
            return []
        starts = np.array([p[0] for p in self.offset_parts], dtype=np.int64)
        ends = np.array([p[-1] for p in self.offset_parts], dtype=np.int64)
        if dt.is_binary_like:
            self.data_task = _Task(self.node, starts, ends, data_only=True)
            return [self.data_task]
        self.children = [_Task(self.node.children[0], starts, ends)]
        return self.children

    def build(self) -> LogicalArray:
        dt = self.node.dtype
        n = int((self.hi - self.lo).sum())
        validity = None
        if self.node.validity is not None:
            validity = np.concatenate(self.validity_parts) if self.validity_parts else np.zeros(0, bool)
        if dt.is_primitive:
            raw = b"".join(self.value_parts)
            return _with_validity(dt, n, validity, values=np.frombuffer(raw, dtype=dt.numpy_dtype).copy())
        if self.node.offsets is not None:
            lens = [np.diff(p) for p in self.offset_parts]
            lens = np.concatenate(lens) if lens else np.zeros(0, np.int64)
            offsets = np.zeros(n + 1, dtype=np.uint64)
            np.cumsum(lens, out=offsets[1:])
            if dt.is_binary_like:
                data = np.frombuffer(b"".join(self.data_task.value_parts), dtype=np.uint8).copy()
                return _with_validity(dt, n, validity, offsets=offsets, data=data)
            return _with_validity(dt, n, validity, offsets=offsets, children=(self.children[0].build(),))
        kids = tuple(c.build() for c in self.children)
        return _with_validity(dt, n, validity, children=kids)


def take_iops(dtype: DataType) -> tuple[int, int]:
    """Raw IOPS and phases needed to fetch one row, from the type alone."""
    layout: list = []
    root = _build_tree(dtype, layout)

    def walk(node: _Node, phase: int) -> tuple[int, int]:
        dt = node.dtype
        iops = (node.validity is not None) + (node.offsets is not None) + (dt.is_primitive and node.values is not None)
        deepest = phase
        if dt.is_binary_like:
            iops += 1
            deepest = phase + 1
        child_phase = phase + 1 if dt.kind == Kind.LIST else phase
        for c in node.children:
            ci, cp = walk(c, child_phase)
            iops += ci
            deepest = max(deepest, cp)
        return iops, deepest

    return walk(root, 1)

