"""Single-file container: writer, reader, scan and take.

Layout::

    "ZCF1" 00 00 00 00
    page extents (8-byte aligned)
    column metadata block (TLV, see zipcol.metadata)
    footer: meta offset u64, meta length u64, column count u32,
            row count u64, version u16.u16, "ZCF1"

Every leaf column is split into pages of at most ``page_bytes`` encoded
bytes. Each page is routed on its own average value width: at or above
the threshold it is full-zipped, below it is chunked into miniblocks.
"""

from __future__ import annotations

import math
import os
import struct
from collections import Counter
from dataclasses import dataclass, field
from typing import Collection, Iterable, Mapping

import numpy as np

from zipcol.arrays import (
    DataType,
    Kind,
    LogicalArray,
    avg_value_width,
    payload_bytes,
    ranges,
    slice_array,
    struct as struct_type,
    take,
    validate,
)
from zipcol.arrow import ArrowColumn, arrow_buffers
from zipcol.codecs import FULLZIP, MINIBLOCK, Codec, codec_from_descriptor, resolve_codec
from zipcol.errors import FormatError, IllegalCodecError, RoutingError
from zipcol.fullzip import (
    FullZipPage,
    data_range_from_index,
    decode_full_zip_scan,
    decode_rows,
    encode_full_zip,
    fixed_range,
    rep_index_range,
)
from zipcol.io import (
    TAG_DATA,
    TAG_METADATA,
    TAG_REP_INDEX,
    TAG_SEARCH_CACHE,
    CoalescePolicy,
    InMemoryStorage,
    FileStorage,
    IoEngine,
    IoStats,
    ReadRequest,
    Storage,
)
from zipcol.metadata import ColumnMeta, Encoding, LeafMeta, Packing, PageMeta, parse_columns, serialize_columns
from zipcol.miniblock import (
    DEFAULT_CHUNK_TARGET,
    ChunkContext,
    ChunkIndex,
    MiniBlockPage,
    decode_chunk,
    decode_page,
    encode_miniblock,
    parse_page_meta,
    search_cache_bytes,
)
from zipcol.packing import pack_struct, packed_dtype, unpack_struct
from zipcol.repdef import (
    LeafPath,
    RepDefLevels,
    concat_levels,
    leaf_paths,
    project_array,
    project_dtype,
    shred_leaf,
    unshred,
)

MAGIC = b"ZCF1"
HEADER = MAGIC + bytes(4)
FOOTER = struct.Struct("<QQIQHH4s")
VERSION = (1, 0)
DEFAULT_PAGE_BYTES = 8 << 20
FULLZIP_THRESHOLD = 128
RECORD_COLUMN = "__record__"
SCAN_WINDOW_BYTES = 64 << 20

_ENCODING_NAMES = {"auto": None, "fullzip": Encoding.FULLZIP, "miniblock": Encoding.MINIBLOCK, "arrow": Encoding.ARROW}


def select_encoding(width: float, threshold: float = FULLZIP_THRESHOLD) -> Encoding:
    """Full-zip for values of at least ``threshold`` bytes, miniblock below."""
    return Encoding.FULLZIP if width >= threshold else Encoding.MINIBLOCK


@dataclass
class WriteOptions:
    """Writer knobs.

    ``encoding`` and ``codec`` take either one value for every column or a
    mapping keyed by column name (codecs may also be keyed by dotted leaf
    path). ``pack`` names struct columns to store packed; ``pack_record``
    packs all columns into one row-major column.
    """

    encoding: str | Mapping[str, str] = "auto"
    codec: object = None
    pack: Collection[str] = ()
    pack_record: bool = False
    page_bytes: int = DEFAULT_PAGE_BYTES
    chunk_target: int = DEFAULT_CHUNK_TARGET
    threshold: float = FULLZIP_THRESHOLD

    def encoding_for(self, column: str) -> Encoding | None:
        name = self.encoding.get(column, "auto") if isinstance(self.encoding, Mapping) else self.encoding
        try:
            return _ENCODING_NAMES[name]
        except KeyError:
            raise ValueError(f"unknown encoding {name!r}") from None

    def codec_for(self, column: str, path: tuple[str, ...]):
        if not isinstance(self.codec, Mapping):
            return self.codec
        dotted = ".".join((column,) + path)
        if dotted in self.codec:
            return self.codec[dotted]
        return self.codec.get(column)


@dataclass
class PageReport:
    column: str
    leaf: str
    encoding: str
    row_start: int
    row_count: int
    entries: int
    avg_width: float
    bytes: int
    chunks: int
    codec: str
    cache_bytes: int


@dataclass
class WriteReport:
    row_count: int = 0
    file_bytes: int = 0
    pages: list[PageReport] = field(default_factory=list)
    arrow_bytes: int = 0

    @property
    def data_bytes(self) -> int:
        return sum(p.bytes for p in self.pages) + self.arrow_bytes

    @property
    def cache_bytes(self) -> int:
        return sum(p.cache_bytes for p in self.pages)

    @property
    def chunk_count(self) -> int:
        return sum(p.chunks for p in self.pages)

    def encodings(self, column: str | None = None) -> set[str]:
        return {p.encoding for p in self.pages if column is None or p.column == column}

    def as_records(self) -> list[dict]:
        return [vars(p).copy() for p in self.pages]


# ---------------------------------------------------------------------------
# writer


class _Sink:
    def __init__(self):
        self.buf = bytearray(HEADER)

    def align(self) -> int:
        self.buf += bytes((-len(self.buf)) % 8)
        return len(self.buf)

    def append(self, data: bytes) -> int:
        off = self.align()
        self.buf += data
        return off


def _storage_dtype(dtype: DataType, packing: Packing) -> DataType:
    return dtype if packing == Packing.SHREDDED else packed_dtype(dtype)


def level_maxima(dtype: DataType, packing: Packing) -> list[tuple[int, int]]:
    return [(p.max_rep, p.max_def) for p in leaf_paths(_storage_dtype(dtype, packing))]


class _Writer:
    def __init__(self, options: WriteOptions):
        self.opts = options
        self.sink = _Sink()
        self.report = WriteReport()

    def column(self, name: str, array: LogicalArray, packing: Packing) -> ColumnMeta:
        forced = self.opts.encoding_for(name)
        if forced == Encoding.ARROW:
            if packing != Packing.SHREDDED:
                raise IllegalCodecError("packed columns cannot use the arrow layout")
            extents = []
            for buf in arrow_buffers(array):
                extents.append((self.sink.append(buf), len(buf)))
                self.report.arrow_bytes += len(buf)
            return ColumnMeta(name, array.dtype, packing, [], extents)
        storage = array if packing == Packing.SHREDDED else pack_struct(array)
        meta = ColumnMeta(name, array.dtype, packing)
        for leaf in leaf_paths(storage.dtype):
            leaf_meta = LeafMeta(leaf.path)
            request = self.opts.codec_for(name, leaf.path)
            n = storage.length
            if n:
                est = payload_bytes(project_array(storage, leaf.path))
                pages = max(1, math.ceil(est / self.opts.page_bytes))
                step = math.ceil(n / pages)
                for r0 in range(0, n, step):
                    self._pages(name, storage, leaf, r0, min(step, n - r0), forced, request, leaf_meta)
            meta.leaves.append(leaf_meta)
        return meta

    def _pages(self, name, storage, leaf: LeafPath, r0: int, count: int, forced, request, leaf_meta: LeafMeta) -> None:
        sl = slice_array(storage, r0, count)
        width = avg_value_width(project_array(sl, leaf.path))
        levels = shred_leaf(sl, leaf)
        encoding = forced if forced is not None else select_encoding(width, self.opts.threshold)
        encoded = self._encode(levels, encoding, request, forced is not None)
        if encoded[1] > self.opts.page_bytes and count > 1:
            half = count // 2
            self._pages(name, storage, leaf, r0, half, forced, request, leaf_meta)
            self._pages(name, storage, leaf, r0 + half, count - half, forced, request, leaf_meta)
            return
        page, _, codec = encoded
        meta = self._emit(page, codec, r0, count, len(levels))
        leaf_meta.pages.append(meta)
        cache = _page_cache_bytes(meta)
        self.report.pages.append(PageReport(
            name, ".".join(leaf.path), meta.encoding.name.lower(), r0, count, len(levels), width, meta.length,
            meta.chunk_count, codec.descriptor.id.name.lower(), cache,
        ))

    def _encode(self, levels: RepDefLevels, encoding: Encoding, request, forced: bool):
        if encoding == Encoding.MINIBLOCK:
            codec = resolve_codec(request, levels.leaf_values, MINIBLOCK)
            try:
                page = encode_miniblock(levels, codec, self.opts.chunk_target)
                return page, len(page.bodies) + len(page.meta_bytes()), codec
            except RoutingError:
                if forced:
                    raise
        codec = resolve_codec(request, levels.leaf_values, FULLZIP)
        page = encode_full_zip(levels, codec)
        return page, len(page.zipped) + len(page.rep_index_bytes()) + 8, codec

    def _emit(self, page, codec: Codec, r0: int, count: int, entries: int) -> PageMeta:
        if isinstance(page, MiniBlockPage):
            meta_bytes = page.meta_bytes()
            off = self.sink.append(meta_bytes + page.bodies)
            return PageMeta(
                Encoding.MINIBLOCK, r0, count, entries, off, len(meta_bytes) + len(page.bodies), codec.descriptor,
                data_offset=off + len(meta_bytes), data_length=len(page.bodies),
                chunk_count=page.chunk_count, lengths_width=page.lengths_width, meta_length=len(meta_bytes),
            )
        assert isinstance(page, FullZipPage)
        ri = page.rep_index_bytes()
        start = self.sink.align()
        ri_off = self.sink.append(ri) if ri else start
        data_off = self.sink.append(page.zipped)
        end = len(self.sink.buf)
        return PageMeta(
            Encoding.FULLZIP, r0, count, entries, start, end - start, codec.descriptor, fullzip=page.layout,
            rep_index_offset=ri_off, rep_index_length=len(ri), data_offset=data_off, data_length=len(page.zipped),
        )

    def finish(self, columns: list[ColumnMeta], row_count: int) -> bytes:
        meta = serialize_columns(columns)
        meta_off = self.sink.append(meta)
        self.sink.buf += FOOTER.pack(meta_off, len(meta), len(columns), row_count, VERSION[0], VERSION[1], MAGIC)
        self.report.row_count = row_count
        self.report.file_bytes = len(self.sink.buf)
        return bytes(self.sink.buf)


def _page_cache_bytes(meta: PageMeta) -> int:
    aux = len(meta.codec.aux)
    if meta.encoding == Encoding.MINIBLOCK:
        return search_cache_bytes(meta.chunk_count, _has_rep_meta(meta), aux)
    return aux


def _has_rep_meta(meta: PageMeta) -> bool:
    return meta.meta_length > ((2 * meta.chunk_count + 7) & ~7)


def _normalize_columns(columns) -> list[tuple[str, LogicalArray]]:
    items = list(columns.items()) if isinstance(columns, Mapping) else list(columns)
    if not items:
        return []
    n = items[0][1].length
    names = set()
    for name, arr in items:
        if name in names:
            raise ValueError(f"duplicate column name {name!r}")
        names.add(name)
        if arr.length != n:
            raise ValueError(f"column {name!r} has {arr.length} rows, expected {n}")
        problem = validate(arr)
        if problem:
            raise ValueError(f"column {name!r} is invalid: {problem}")
    return items


def write_file(columns, options: WriteOptions | None = None, path: str | os.PathLike | None = None) -> tuple[bytes, WriteReport]:
    """Encode ``columns`` (mapping or ``(name, array)`` pairs) into file bytes.

    Writes the bytes to ``path`` as well when one is given.
    """
    opts = options or WriteOptions()
    items = _normalize_columns(columns)
    row_count = items[0][1].length if items else 0
    w = _Writer(opts)
    metas = []
    if opts.pack_record and items:
        record_type = struct_type([(name, arr.dtype) for name, arr in items], nullable=False)
        record = LogicalArray(record_type, row_count, children=tuple(arr for _, arr in items))
        metas.append(w.column(RECORD_COLUMN, record, Packing.PACKED_RECORD))
    else:
        pack = set(opts.pack)
        for name, arr in items:
            packing = Packing.PACKED_STRUCT if name in pack else Packing.SHREDDED
            metas.append(w.column(name, arr, packing))
    data = w.finish(metas, row_count)
    if path is not None:
        with open(path, "wb") as fh:
            fh.write(data)
    return data, w.report


# ---------------------------------------------------------------------------
# reader


@dataclass(frozen=True)
class PlannedRead:
    phase: int
    tag: str
    offset: int | None
    length: int | None


@dataclass
class TakePlan:
    reads: list[PlannedRead] = field(default_factory=list)

    @property
    def iops(self) -> int:
        return len(self.reads)

    @property
    def phases(self) -> int:
        return max((r.phase for r in self.reads), default=0)

    def by_tag(self) -> Counter:
        return Counter(r.tag for r in self.reads)


class _PageReader:
    def __init__(self, meta: PageMeta, leaf: LeafPath, index: ChunkIndex | None):
        self.meta = meta
        self.leaf = leaf
        self.codec = codec_from_descriptor(meta.codec, leaf.leaf_dtype)
        self.index = index
        if meta.encoding == Encoding.MINIBLOCK:
            self.ctx = ChunkContext(leaf.max_rep, leaf.max_def, self.codec, meta.lengths_width)

    # scan

    def scan_request(self) -> ReadRequest:
        m = self.meta
        if m.encoding == Encoding.MINIBLOCK:
            return ReadRequest(m.offset, m.length, TAG_DATA)
        return ReadRequest(m.data_offset, m.data_length, TAG_DATA)

    def decode_scan(self, raw: bytes) -> RepDefLevels:
        m = self.meta
        if m.encoding == Encoding.MINIBLOCK:
            words, rep = parse_page_meta(raw[: m.meta_length], m.chunk_count, self.leaf.max_rep > 0)
            index = ChunkIndex.from_meta(m.entry_count, m.row_count, words, rep)
            return decode_page(raw, index, m.meta_length, self.ctx)
        return decode_full_zip_scan(raw, m.fullzip, self.codec)

    # take

    def _runs(self, rows: np.ndarray) -> list[tuple[int, int]]:
        if not len(rows):
            return []
        breaks = np.flatnonzero(np.diff(rows) != 1) + 1
        return [(int(g[0]), int(g[-1]) + 1) for g in np.split(rows, breaks)]

    def phase1(self, rows: np.ndarray) -> tuple[list[ReadRequest], object]:
        m = self.meta
        if m.encoding == Encoding.MINIBLOCK:
            first, last, ordinal = self.index.locate(rows)
            chunks = np.unique(ranges(first, last - first + 1))
            offsets = self.index.body_offsets()
            reqs = [ReadRequest(m.data_offset + int(offsets[k]), int(offsets[k + 1] - offsets[k]), TAG_DATA) for k in chunks]
            return reqs, (first, last, ordinal, chunks)
        runs = self._runs(rows)
        layout = m.fullzip
        if layout.is_fixed:
            reqs = []
            for a, b in runs:
                off, length = fixed_range(layout, a, b)
                reqs.append(ReadRequest(m.data_offset + off, length, TAG_DATA))
            return reqs, runs
        reqs = []
        for a, b in runs:
            off, length = rep_index_range(layout, a, b)
            reqs.append(ReadRequest(m.rep_index_offset + off, length, TAG_REP_INDEX))
        return reqs, runs

    def planned_phase2(self, state) -> int:
        if self.meta.encoding == Encoding.FULLZIP and not self.meta.fullzip.is_fixed:
            return len(state)
        return 0

    def phase2(self, state, raws1: list[bytes]) -> list[ReadRequest]:
        if self.planned_phase2(state) == 0:
            return []
        out = []
        for raw in raws1:
            off, length = data_range_from_index(raw, self.meta.fullzip)
            out.append(ReadRequest(self.meta.data_offset + off, length, TAG_DATA))
        return out

    def decode_take(self, state, raws1: list[bytes], raws2: list[bytes], reqs2: list[ReadRequest]) -> RepDefLevels:
        m = self.meta
        leaf = self.leaf
        if m.encoding == Encoding.FULLZIP:
            runs = state
            data = raws1 if m.fullzip.is_fixed else raws2
            parts = [decode_rows(raw, m.fullzip, self.codec, b - a) for raw, (a, b) in zip(data, runs)]
            return concat_levels(parts, leaf.leaf_dtype.with_nullable(False), leaf.max_rep, leaf.max_def)
        first, last, ordinal, chunks = state
        offsets = self.index.body_offsets()
        counts = self.index.counts()
        decoded = {
            int(k): decode_chunk(raw, int(counts[k]), self.ctx, m.data_offset + int(offsets[k]))
            for k, raw in zip(chunks, raws1)
        }
        pieces = []
        i = 0
        n = len(first)
        while i < n:
            j = i
            while j + 1 < n and first[j + 1] == first[i] and last[j + 1] == last[i]:
                j += 1
            span = [decoded[k] for k in range(int(first[i]), int(last[i]) + 1)]
            lv = concat_levels(span, leaf.leaf_dtype.with_nullable(False), leaf.max_rep, leaf.max_def)
            starts = np.append(lv.row_starts(), len(lv))
            ords = ordinal[i : j + 1]
            lo = starts[ords]
            hi = starts[ords + 1]
            pieces.append(lv.take_entries(ranges(lo, hi - lo)))
            i = j + 1
        return concat_levels(pieces, leaf.leaf_dtype.with_nullable(False), leaf.max_rep, leaf.max_def)


@dataclass
class _Column:
    meta: ColumnMeta
    leaves: list[LeafPath]
    pages: list[list[_PageReader]]
    arrow: ArrowColumn | None


class FileReader:
    """Read handle with a warmed search cache. Safe to share across threads."""

    def __init__(self, storage: Storage, policy: CoalescePolicy | None = None):
        self.engine = IoEngine(storage, policy)
        self._load()
        self.open_stats = self.engine.stats

    # -- open ----------------------------------------------------------------

    def _load(self) -> None:
        size = self.engine.storage.size
        if size < len(HEADER) + FOOTER.size:
            raise FormatError(f"file of {size} bytes is too small to hold a footer")
        footer = self.engine.read(size - FOOTER.size, FOOTER.size, TAG_METADATA)
        meta_off, meta_len, ncols, rows, major, minor, magic = FOOTER.unpack(footer)
        if magic != MAGIC:
            raise FormatError(f"bad magic {magic!r}")
        if major != VERSION[0]:
            raise FormatError(f"unsupported format version {major}.{minor}")
        if meta_off < len(HEADER) or meta_off + meta_len > size - FOOTER.size:
            raise FormatError("metadata block out of bounds")
        self.row_count = rows
        self.version = (major, minor)
        self.meta_offset, self.meta_length = meta_off, meta_len
        metas = parse_columns(self.engine.read(meta_off, meta_len, TAG_METADATA), meta_off, level_maxima)
        if len(metas) != ncols:
            raise FormatError(f"footer lists {ncols} columns, metadata holds {len(metas)}")
        data_end = meta_off
        mb_pages = []
        for col in metas:
            for leaf in col.leaves:
                for page in leaf.pages:
                    if page.offset + page.length > data_end:
                        raise FormatError(f"page of column {col.name!r} extends past the data region")
                    if page.encoding == Encoding.MINIBLOCK:
                        mb_pages.append(page)
        raws = self.engine.submit([ReadRequest(p.offset, p.meta_length, TAG_SEARCH_CACHE) for p in mb_pages])
        cache_raw = {id(p): raw for p, raw in zip(mb_pages, raws)}
        self.cache_bytes = 0
        self.data_bytes = 0
        self.chunk_count = 0
        self._columns: dict[str, _Column] = {}
        for col in metas:
            leaves = leaf_paths(_storage_dtype(col.dtype, col.packing))
            arrow = None
            if col.arrow_extents is not None:
                arrow = ArrowColumn(col.dtype, rows, col.arrow_extents)
                self.data_bytes += sum(n for _, n in col.arrow_extents)
            readers = []
            for leaf, leaf_meta in zip(leaves, col.leaves):
                expected = 0
                page_readers = []
                for page in leaf_meta.pages:
                    if page.row_start != expected:
                        raise FormatError(f"pages of column {col.name!r} do not partition its rows")
                    expected += page.row_count
                    index = None
                    if page.encoding == Encoding.MINIBLOCK:
                        words, rep = parse_page_meta(cache_raw[id(page)], page.chunk_count, leaf.max_rep > 0)
                        index = ChunkIndex.from_meta(page.entry_count, page.row_count, words, rep)
                        self.chunk_count += page.chunk_count
                    self.cache_bytes += _page_cache_bytes(page)
                    self.data_bytes += page.length
                    page_readers.append(_PageReader(page, leaf, index))
                if leaf_meta.pages and expected != rows:
                    raise FormatError(f"pages of column {col.name!r} cover {expected} of {rows} rows")
                readers.append(page_readers)
            self._columns[col.name] = _Column(col, leaves, readers, arrow)

    # -- schema --------------------------------------------------------------

    @property
    def columns(self) -> list[str]:
        out = []
        for name, col in self._columns.items():
            if col.meta.packing == Packing.PACKED_RECORD:
                out.extend(n for n, _ in col.meta.dtype.fields)
            else:
                out.append(name)
        return out

    @property
    def schema(self) -> dict[str, DataType]:
        out = {}
        for name, col in self._columns.items():
            if col.meta.packing == Packing.PACKED_RECORD:
                out.update(dict(col.meta.dtype.fields))
            else:
                out[name] = col.meta.dtype
        return out

    def column_meta(self, name: str) -> ColumnMeta:
        return self._columns[name].meta

    @property
    def column_metas(self) -> list[ColumnMeta]:
        return [c.meta for c in self._columns.values()]

    @property
    def stats(self) -> IoStats:
        return self.engine.stats

    def _resolve(self, selection: Iterable[str] | None) -> list[tuple[str, _Column, tuple[str, ...]]]:
        if selection is None:
            selection = self.columns
        elif isinstance(selection, str):
            selection = [selection]
        out = []
        for key in selection:
            out.append((key,) + self.resolve_column(key))
        return out

    def resolve_column(self, key: str) -> tuple[_Column, tuple[str, ...]]:
        if key in self._columns and self._columns[key].meta.packing != Packing.PACKED_RECORD:
            return self._columns[key], ()
        parts = key.split(".")
        for cut in range(len(parts) - 1, 0, -1):
            name = ".".join(parts[:cut])
            col = self._columns.get(name)
            if col is not None and col.meta.packing != Packing.PACKED_RECORD:
                project_dtype(col.meta.dtype, [tuple(parts[cut:])])
                return col, tuple(parts[cut:])
        record = self._columns.get(RECORD_COLUMN)
        if record is not None:
            fields = dict(record.meta.dtype.fields)
            if key in fields:
                return record, (key,)
        raise KeyError(f"no column {key!r}")

    # -- scan ----------------------------------------------------------------

    def scan(self, columns: Iterable[str] | str | None = None) -> dict[str, LogicalArray]:
        """Read whole columns; one read per page (full-zip pages skip their
        repetition index)."""
        return {key: self._scan_column(col, sub) for key, col, sub in self._resolve(columns)}

    def iter_batches(self, columns=None, batch_rows: int = 65536):
        data = self.scan(columns)
        for start in range(0, self.row_count, batch_rows):
            n = min(batch_rows, self.row_count - start)
            yield {k: slice_array(v, start, n) for k, v in data.items()}

    def _leaf_ids(self, col: _Column, sub: tuple[str, ...]) -> list[int]:
        if col.meta.packing != Packing.SHREDDED:
            return [0]
        return [i for i, leaf in enumerate(col.leaves) if leaf.path[: len(sub)] == sub]

    def _scan_column(self, col: _Column, sub: tuple[str, ...]) -> LogicalArray:
        if col.arrow is not None:
            return _prune(col.arrow.scan(self.engine), sub)
        ids = self._leaf_ids(col, sub)
        levels = []
        for i in ids:
            leaf = col.leaves[i]
            parts = []
            # submit pages in windows so raw page bytes never pile up
            window: list[_PageReader] = []
            pending = 0
            for r in col.pages[i] + [None]:
                if r is not None and (not window or pending + r.scan_request().length <= SCAN_WINDOW_BYTES):
                    window.append(r)
                    pending += r.scan_request().length
                    continue
                raws = self.engine.submit([w.scan_request() for w in window]) if window else []
                parts.extend(w.decode_scan(raw) for w, raw in zip(window, raws))
                window, pending = ([r], r.scan_request().length) if r is not None else ([], 0)
            levels.append(concat_levels(parts, leaf.leaf_dtype.with_nullable(False), leaf.max_rep, leaf.max_def))
        return self._assemble(col, sub, ids, levels)

    def _assemble(self, col: _Column, sub: tuple[str, ...], ids: list[int], levels: list[RepDefLevels]) -> LogicalArray:
        packing = col.meta.packing
        if packing == Packing.SHREDDED:
            dtype = project_dtype(col.meta.dtype, [sub]) if sub else col.meta.dtype
            return unshred(levels, dtype, [col.leaves[i] for i in ids])
        packed = unshred(levels, packed_dtype(col.meta.dtype), [col.leaves[0]])
        full = unpack_struct(packed, col.meta.dtype)
        if packing == Packing.PACKED_RECORD:
            return full.field(sub[0])
        return _prune(full, sub)

    # -- take ----------------------------------------------------------------

    def _prepare_rows(self, indices) -> tuple[np.ndarray, np.ndarray]:
        idx = np.asarray(indices, dtype=np.int64).reshape(-1)
        if len(idx) and (idx.min() < 0 or idx.max() >= self.row_count):
            raise IndexError(f"row index out of range for file of {self.row_count} rows")
        return np.unique(idx, return_inverse=True)

    def _page_rows(self, readers: list[_PageReader], rows: np.ndarray):
        for r in readers:
            lo, hi = np.searchsorted(rows, [r.meta.row_start, r.meta.row_start + r.meta.row_count])
            if hi > lo:
                yield r, rows[lo:hi] - r.meta.row_start

    def take(self, indices, columns: Iterable[str] | str | None = None) -> dict[str, LogicalArray]:
        """Rows at ``indices`` (any order, duplicates allowed) for each selected column."""
        rows, inverse = self._prepare_rows(indices)
        selected = self._resolve(columns)
        out = {}
        jobs = []  # (key, col, sub, ids, [(leaf id, reader, local rows, state)])
        phase1: list[ReadRequest] = []
        for key, col, sub in selected:
            if col.arrow is not None:
                arr, _ = col.arrow.take(self.engine, rows)
                out[key] = _prune(arr, sub)
                continue
            ids = self._leaf_ids(col, sub)
            work = []
            for i in ids:
                for reader, local in self._page_rows(col.pages[i], rows):
                    reqs, state = reader.phase1(local)
                    work.append((i, reader, state, len(phase1), len(reqs)))
                    phase1.extend(reqs)
            jobs.append((key, col, sub, ids, work))
        raws1 = self.engine.submit(phase1) if phase1 else []
        phase2: list[ReadRequest] = []
        spans2 = {}
        for _, _, _, _, work in jobs:
            for i, reader, state, s1, n1 in work:
                reqs = reader.phase2(state, raws1[s1 : s1 + n1])
                spans2[id(state)] = (len(phase2), len(reqs))
                phase2.extend(reqs)
        raws2 = self.engine.submit(phase2) if phase2 else []
        for key, col, sub, ids, work in jobs:
            per_leaf: dict[int, list[RepDefLevels]] = {i: [] for i in ids}
            for i, reader, state, s1, n1 in work:
                s2, n2 = spans2[id(state)]
                per_leaf[i].append(reader.decode_take(state, raws1[s1 : s1 + n1], raws2[s2 : s2 + n2], phase2[s2 : s2 + n2]))
            levels = []
            for i in ids:
                leaf = col.leaves[i]
                levels.append(concat_levels(per_leaf[i], leaf.leaf_dtype.with_nullable(False), leaf.max_rep, leaf.max_def))
            out[key] = self._assemble(col, sub, ids, levels)
        if len(inverse) != len(rows) or (len(rows) and not np.array_equal(inverse, np.arange(len(rows)))):
            out = {k: take(v, inverse) for k, v in out.items()}
        return {key: out[key] for key, _, _ in selected}

    def plan_take(self, indices, columns: Iterable[str] | str | None = None) -> TakePlan:
        """Reads a take would issue, computed from the search cache alone.

        Second-phase full-zip reads depend on index values, so their
        offsets are left unknown.
        """
        rows, _ = self._prepare_rows(indices)
        plan = TakePlan()
        second = []
        for key, col, sub in self._resolve(columns):
            if col.arrow is not None:
                per_phase = _arrow_phase_counts(col.meta.dtype)
                for phase, count in per_phase.items():
                    plan.reads.extend(PlannedRead(phase, TAG_DATA, None, None) for _ in range(count * len(rows)))
                continue
            for i in self._leaf_ids(col, sub):
                for reader, local in self._page_rows(col.pages[i], rows):
                    reqs, state = reader.phase1(local)
                    plan.reads.extend(PlannedRead(1, r.tag, r.offset, r.length) for r in reqs)
                    second.extend(PlannedRead(2, TAG_DATA, None, None) for _ in range(reader.planned_phase2(state)))
        plan.reads.extend(second)
        return plan

    # -- inspection ------------------------------------------------------------

    def describe(self) -> dict:
        cols = []
        for name, col in self._columns.items():
            entry = {"name": name, "dtype": str(col.meta.dtype), "packing": col.meta.packing.name.lower(), "leaves": []}
            if col.arrow is not None:
                entry["arrow_extents"] = [list(e) for e in col.meta.arrow_extents]
            for leaf, readers in zip(col.leaves, col.pages):
                pages = []
                for r in readers:
                    p = r.meta
                    info = {
                        "encoding": p.encoding.name.lower(), "rows": [p.row_start, p.row_count], "entries": p.entry_count,
                        "offset": p.offset, "bytes": p.length, "codec": p.codec.id.name.lower(),
                    }
                    if p.encoding == Encoding.MINIBLOCK:
                        counts = r.index.counts()
                        info["chunks"] = p.chunk_count
                        info["chunk_values"] = dict(Counter(counts.tolist()))
                        info["chunk_bytes"] = dict(Counter(((r.index.words & 0xFFF).astype(int) * 8).tolist()))
                    else:
                        fz = p.fullzip
                        info["control_word_bytes"] = fz.control.width_bytes
                        info["fixed_record_width"] = fz.fixed_record_width
                        info["rep_index_width"] = fz.rep_index_width
                        info["length_width"] = fz.length_width
                    pages.append(info)
                entry["leaves"].append({"path": ".".join(leaf.path), "pages": pages})
            cols.append(entry)
        return {
            "version": f"{self.version[0]}.{self.version[1]}",
            "rows": self.row_count,
            "columns": cols,
            "metadata": {"offset": self.meta_offset, "length": self.meta_length},
            "data_bytes": self.data_bytes,
            "cache_bytes": self.cache_bytes,
            "chunks": self.chunk_count,
        }


def _arrow_phase_counts(dtype: DataType) -> dict[int, int]:
    from zipcol.arrow import _build_tree

    counts: Counter = Counter()

    def walk(node, phase):
        dt = node.dtype
        counts[phase] += (node.validity is not None) + (node.offsets is not None) + bool(dt.is_primitive)
        if dt.is_binary_like:
            counts[phase + 1] += 1
        for c in node.children:
            walk(c, phase + 1 if dt.kind == Kind.LIST else phase)

    walk(_build_tree(dtype, []), 1)
    return dict(counts)


def _prune(array: LogicalArray, path: tuple[str, ...]) -> LogicalArray:
    if not path:
        return array
    dt = array.dtype
    if dt.kind == Kind.LIST:
        child = _prune(array.child, path)
        return LogicalArray(DataType(Kind.LIST, dt.nullable, child=child.dtype), array.length, array.validity,
                            offsets=array.offsets, children=(child,))
    if dt.kind != Kind.STRUCT:
        raise KeyError(f"cannot select {'.'.join(path)!r} inside {dt}")
    child = _prune(array.field(path[0]), path[1:])
    return LogicalArray(DataType(Kind.STRUCT, dt.nullable, fields=((path[0], child.dtype),)), array.length,
                        array.validity, children=(child,))


def open_file(source, policy: CoalescePolicy | None = None, bypass_cache: bool = False) -> FileReader:
    """Open bytes, a path, or a storage backend and warm the search cache."""
    if isinstance(source, (bytes, bytearray, memoryview)):
        storage = InMemoryStorage(bytes(source))
    elif isinstance(source, (str, os.PathLike)):
        storage = FileStorage(source, bypass_cache=bypass_cache)
    else:
        storage = source
    return FileReader(storage, policy)
