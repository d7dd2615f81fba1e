"""Repetition / definition level shredding.

Conventions (bit-compatible with the full-zip control words):

* Definition level 0 means the leaf value is present. Walking from the
  leaf outward, every nullable layer adds a "null" level and every list
  layer adds an "empty" level followed by its "null" level. For
  ``Struct<List<Utf8>>`` this gives 0 valid, 1 null item, 2 empty list,
  3 null list, 4 null struct.
* Repetition levels are inverted relative to classic Dremel: ``max_rep``
  starts a new top-level row and 0 continues the innermost list. With a
  single list layer, 1 starts a new list and 0 continues it.
* A null or empty layer absorbs its whole subtree into one entry.
* Fixed-size lists are leaves; they add no repetition level.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from zipcol.arrays import (
    DataType,
    Kind,
    LogicalArray,
    concat,
    empty_array,
    fixed_bytes,
    from_fixed_bytes,
    slice_array,
    take,
)
from zipcol.errors import CorruptLevelsError

LEVEL_DTYPE = np.uint16


@dataclass(frozen=True)
class Layer:
    dtype: DataType
    field_name: str | None  # name of the field this layer is reached through
    null_level: int  # 0 when the layer is not nullable
    empty_level: int  # 0 unless this is a list
    inner_max: int  # highest level owned by layers strictly inside this one
    list_depth: int  # 1-based depth for list layers, 0 otherwise

    @property
    def own_max(self) -> int:
        return max(self.null_level, self.empty_level, self.inner_max)


@dataclass(frozen=True)
class LeafPath:
    path: tuple[str, ...]
    layers: tuple[Layer, ...]
    max_rep: int
    max_def: int

    @property
    def leaf_dtype(self) -> DataType:
        return self.layers[-1].dtype

    @property
    def name(self) -> str:
        return ".".join(self.path)


@dataclass(frozen=True)
class LevelWidths:
    rep_bits: int
    def_bits: int


def bits_for(max_level: int) -> int:
    return int(max_level).bit_length()


def _walk(dtype: DataType, name: str | None, path: tuple[str, ...], chain: list, out: list) -> None:
    chain = chain + [(dtype, name)]
    if dtype.is_leaf:
        out.append((path, chain))
    elif dtype.kind == Kind.LIST:
        _walk(dtype.child, None, path, chain, out)
    else:
        for fname, ftype in dtype.fields:
            _walk(ftype, fname, path + (fname,), chain, out)


def leaf_paths(dtype: DataType) -> list[LeafPath]:
    """Every leaf column of ``dtype`` in schema order, with its level map."""
    raw: list = []
    _walk(dtype, None, (), [], raw)
    result = []
    for path, chain in raw:
        level = 0
        numbered = []
        for node, fname in reversed(chain):
            inner = level
            null_level = empty_level = 0
            if node.kind == Kind.LIST:
                level += 1
                empty_level = level
            if node.nullable:
                level += 1
                null_level = level
            numbered.append((node, fname, null_level, empty_level, inner))
        numbered.reverse()
        layers = []
        depth = 0
        for node, fname, null_level, empty_level, inner in numbered:
            if node.kind == Kind.LIST:
                depth += 1
                layers.append(Layer(node, fname, null_level, empty_level, inner, depth))
            else:
                layers.append(Layer(node, fname, null_level, empty_level, inner, 0))
        result.append(LeafPath(path, tuple(layers), depth, level))
    return result


def level_widths(dtype: DataType) -> LevelWidths:
    """Bits needed for the widest repetition and definition levels."""
    paths = leaf_paths(dtype)
    return LevelWidths(
        rep_bits=max(bits_for(p.max_rep) for p in paths),
        def_bits=max(bits_for(p.max_def) for p in paths),
    )


@dataclass(frozen=True, eq=False)
class RepDefLevels:
    """Shredded form of one leaf column.

    ``leaf_values`` is a non-null array of the leaf type holding only the
    entries whose definition level is 0, in entry order.
    """

    rep: np.ndarray
    def_: np.ndarray
    max_rep: int
    max_def: int
    leaf_values: LogicalArray

    def __len__(self) -> int:
        return len(self.rep)

    @property
    def widths(self) -> LevelWidths:
        return LevelWidths(bits_for(self.max_rep), bits_for(self.max_def))

    def row_starts(self) -> np.ndarray:
        """Entry positions that begin a new top-level row."""
        if self.max_rep == 0:
            return np.arange(len(self.rep), dtype=np.int64)
        return np.flatnonzero(self.rep == self.max_rep)

    @property
    def row_count(self) -> int:
        if self.max_rep == 0:
            return len(self.rep)
        return int(np.count_nonzero(self.rep == self.max_rep))

    def valid_prefix(self) -> np.ndarray:
        """``out[i]`` = number of leaf values stored before entry ``i``."""
        out = np.zeros(len(self.def_) + 1, dtype=np.int64)
        np.cumsum(self.def_ == 0, out=out[1:])
        return out

    def slice_entries(self, start: int, stop: int, prefix: np.ndarray | None = None) -> RepDefLevels:
        if prefix is None:
            prefix = self.valid_prefix()
        lo, hi = int(prefix[start]), int(prefix[stop])
        return RepDefLevels(
            self.rep[start:stop],
            self.def_[start:stop],
            self.max_rep,
            self.max_def,
            slice_array(self.leaf_values, lo, hi - lo),
        )

    def take_entries(self, idx: np.ndarray, prefix: np.ndarray | None = None) -> RepDefLevels:
        """Entries at ``idx`` (ascending) together with their leaf values."""
        if prefix is None:
            prefix = self.valid_prefix()
        idx = np.asarray(idx, dtype=np.int64)
        d = self.def_[idx]
        ranks = prefix[idx][d == 0]
        return RepDefLevels(self.rep[idx], d, self.max_rep, self.max_def, take(self.leaf_values, ranks))

    def slice_rows(self, start: int, stop: int) -> RepDefLevels:
        starts = self.row_starts()
        bounds = np.append(starts, len(self.rep))
        return self.slice_entries(int(bounds[start]), int(bounds[stop]))

    def validate(self) -> None:
        if len(self.rep) != len(self.def_):
            raise CorruptLevelsError("repetition and definition streams differ in length")
        if len(self.rep) and int(self.rep.max()) > self.max_rep:
            raise CorruptLevelsError(f"repetition level exceeds max_rep={self.max_rep}")
        if len(self.def_) and int(self.def_.max()) > self.max_def:
            raise CorruptLevelsError(f"definition level exceeds max_def={self.max_def}")
        if int(np.count_nonzero(self.def_ == 0)) != self.leaf_values.length:
            raise CorruptLevelsError("leaf value count does not match definition levels")
        if self.max_rep > 0 and len(self.rep) and self.rep[0] != self.max_rep:
            raise CorruptLevelsError("first entry does not start a row")


def concat_levels(parts: Sequence[RepDefLevels], leaf_dtype: DataType, max_rep: int, max_def: int) -> RepDefLevels:
    if not parts:
        return RepDefLevels(
            np.zeros(0, LEVEL_DTYPE), np.zeros(0, LEVEL_DTYPE), max_rep, max_def, empty_array(leaf_dtype.with_nullable(False))
        )
    if len(parts) == 1:
        return parts[0]
    return RepDefLevels(
        np.concatenate([p.rep for p in parts]),
        np.concatenate([p.def_ for p in parts]),
        max_rep,
        max_def,
        concat([p.leaf_values for p in parts], parts[0].leaf_values.dtype),
    )


# ---------------------------------------------------------------------------
# shredding


def _child_of(node: LogicalArray, layer: Layer, next_layer: Layer) -> LogicalArray:
    if layer.dtype.kind == Kind.STRUCT:
        return node.field(next_layer.field_name)
    return node.child


def shred_leaf(array: LogicalArray, leaf: LeafPath) -> RepDefLevels:
    n = array.length
    max_rep = leaf.max_rep
    rep = np.full(n, max_rep, dtype=np.int64)
    deff = np.full(n, -1, dtype=np.int64)  # -1: still descending
    pos = np.arange(n, dtype=np.int64)
    node = array
    layers = leaf.layers
    for i, layer in enumerate(layers):
        live = deff < 0
        if layer.null_level and node.validity is not None:
            lp = pos[live]
            nulls = np.zeros(len(deff), dtype=bool)
            nulls[live] = ~node.validity[lp]
            deff[nulls] = layer.null_level
            live &= ~nulls
        kind = layer.dtype.kind
        if i == len(layers) - 1:
            deff[live] = 0
            break
        if kind == Kind.LIST:
            off = node.offsets.astype(np.int64)
            lens = np.zeros(len(deff), dtype=np.int64)
            lp = pos[live]
            lens[live] = off[lp + 1] - off[lp]
            empty = live & (lens == 0)
            deff[empty] = layer.empty_level
            expand = live & (lens > 0)
            counts = np.where(expand, lens, 1)
            owner = np.repeat(np.arange(len(deff)), counts)
            first = np.cumsum(counts) - counts
            within = np.arange(len(owner), dtype=np.int64) - first[owner]
            rep = np.where(within == 0, rep[owner], max_rep - layer.list_depth)
            new_pos = np.zeros(len(owner), dtype=np.int64)
            grow = expand[owner]
            new_pos[grow] = off[pos[owner[grow]]] + within[grow]
            deff = deff[owner]
            pos = new_pos
        node = _child_of(node, layer, layers[i + 1])
    leaf_pos = pos[deff == 0]
    values = take(node, leaf_pos)
    values = LogicalArray(values.dtype.with_nullable(False), values.length, None, values.values, values.offsets, values.data, values.children)
    return RepDefLevels(rep.astype(LEVEL_DTYPE), deff.astype(LEVEL_DTYPE), max_rep, leaf.max_def, values)


def shred(array: LogicalArray) -> list[RepDefLevels]:
    """One :class:`RepDefLevels` per leaf column, in :func:`leaf_paths` order."""
    return [shred_leaf(array, leaf) for leaf in leaf_paths(array.dtype)]


# ---------------------------------------------------------------------------
# reconstruction


@dataclass
class _Cursor:
    levels: RepDefLevels
    leaf: LeafPath
    depth: int
    idx: np.ndarray  # entry indices participating at this layer
    starts: np.ndarray  # bool over idx: entry begins a slot
    rank: np.ndarray  # leaf value index for each entry

    @property
    def layer(self) -> Layer:
        return self.leaf.layers[self.depth]


def _leaf_dense(values: LogicalArray, present: np.ndarray, ranks: np.ndarray, dtype: DataType) -> LogicalArray:
    """Scatter ``values[ranks]`` into the slots flagged ``present``; zeros elsewhere."""
    n = len(present)
    picked = take(values, ranks)
    if dtype.is_binary_like:
        lens = np.zeros(n, dtype=np.uint64)
        lens[present] = np.diff(picked.offsets)
        off = np.zeros(n + 1, dtype=np.uint64)
        np.cumsum(lens, out=off[1:])
        return LogicalArray(dtype, n, offsets=off, data=picked.data)
    raw = np.zeros((n, dtype.byte_width), dtype=np.uint8)
    raw[present] = fixed_bytes(picked)
    return from_fixed_bytes(dtype, raw, n)


def _build(dtype: DataType, cursors: list[_Cursor]) -> LogicalArray:
    c0 = cursors[0]
    layer = c0.layer
    first = c0.idx[c0.starts]
    d = c0.levels.def_[first].astype(np.int64)
    nslots = len(first)
    validity = None
    if layer.null_level:
        valid = (d <= layer.own_max) & (d != layer.null_level)
        if not valid.all():
            validity = valid

    if dtype.is_leaf:
        present = d == 0
        ranks = c0.rank[first[present]]
        arr = _leaf_dense(c0.levels.leaf_values, present, ranks, dtype)
        return LogicalArray(dtype, nslots, validity, arr.values, arr.offsets, arr.data, arr.children)

    if dtype.kind == Kind.STRUCT:
        children = []
        for fname, ftype in dtype.fields:
            sub = [
                _Cursor(c.levels, c.leaf, c.depth + 1, c.idx, c.starts, c.rank)
                for c in cursors
                if c.leaf.layers[c.depth + 1].field_name == fname
            ]
            children.append(_build(ftype, sub))
        return LogicalArray(dtype, nslots, validity, children=tuple(children))

    # list layer
    next_cursors = []
    lens = None
    for c in cursors:
        lay = c.layer
        dd = c.levels.def_[c.idx].astype(np.int64)
        slot = np.cumsum(c.starts) - 1
        keep = dd <= lay.inner_max
        sub_idx = c.idx[keep]
        sub_starts = c.levels.rep[sub_idx].astype(np.int64) >= c.leaf.max_rep - lay.list_depth
        if lens is None:
            lens = np.bincount(slot[keep][sub_starts], minlength=nslots).astype(np.uint64)
        next_cursors.append(_Cursor(c.levels, c.leaf, c.depth + 1, sub_idx, sub_starts, c.rank))
    offsets = np.zeros(nslots + 1, dtype=np.uint64)
    np.cumsum(lens, out=offsets[1:])
    child = _build(dtype.child, next_cursors)
    return LogicalArray(dtype, nslots, validity, offsets=offsets, children=(child,))


def unshred(levels: RepDefLevels | Sequence[RepDefLevels], dtype: DataType, leaves: Sequence[LeafPath] | None = None) -> LogicalArray:
    """Rebuild an array from its leaf level streams.

    ``levels`` holds one entry per leaf in ``leaves`` (default: every leaf of
    ``dtype``). Passing a subset of leaves together with the matching
    ``leaves`` reconstructs a projection of ``dtype``.
    """
    if isinstance(levels, RepDefLevels):
        levels = [levels]
    if leaves is None:
        leaves = leaf_paths(dtype)
    if len(leaves) != len(levels):
        raise CorruptLevelsError(f"expected {len(leaves)} leaf level streams, got {len(levels)}")
    cursors = []
    row_count = None
    for lv, leaf in zip(levels, leaves):
        if lv.max_rep != leaf.max_rep or lv.max_def != leaf.max_def:
            raise CorruptLevelsError(f"level maxima do not match leaf {leaf.name!r}")
        lv.validate()
        n = len(lv.rep)
        starts = np.ones(n, dtype=bool) if leaf.max_rep == 0 else lv.rep == leaf.max_rep
        rows = int(np.count_nonzero(starts))
        if row_count is None:
            row_count = rows
        elif rows != row_count:
            raise CorruptLevelsError("leaf columns disagree on row count")
        rank = np.cumsum(lv.def_ == 0) - 1
        cursors.append(_Cursor(lv, leaf, 0, np.arange(n, dtype=np.int64), starts, rank))
    return _build(dtype, cursors)


# ---------------------------------------------------------------------------
# projection


def project_dtype(dtype: DataType, paths: Sequence[tuple[str, ...]]) -> DataType:
    """Prune ``dtype`` to the struct fields along ``paths`` (prefixes allowed)."""
    if dtype.kind == Kind.LIST:
        return DataType(Kind.LIST, dtype.nullable, child=project_dtype(dtype.child, paths))
    if dtype.kind != Kind.STRUCT or any(len(p) == 0 for p in paths):
        return dtype
    fields = []
    for fname, ftype in dtype.fields:
        sub = [p[1:] for p in paths if p[0] == fname]
        if sub:
            fields.append((fname, project_dtype(ftype, sub)))
    if not fields:
        raise KeyError(f"no field matches {paths!r}")
    return DataType(Kind.STRUCT, dtype.nullable, fields=tuple(fields))


def project_array(array: LogicalArray, path: tuple[str, ...]) -> LogicalArray:
    """Keep only the struct fields along ``path`` (used for per-leaf width estimates)."""
    dt = array.dtype
    if dt.kind == Kind.LIST:
        child = project_array(array.child, path)
        return LogicalArray(DataType(Kind.LIST, dt.nullable, child=child.dtype), array.length, array.validity,
                            offsets=array.offsets, children=(child,))
    if dt.kind != Kind.STRUCT or not path:
        return array
    child = project_array(array.field(path[0]), path[1:])
    return LogicalArray(DataType(Kind.STRUCT, dt.nullable, fields=((path[0], child.dtype),)), array.length,
                        array.validity, children=(child,))
