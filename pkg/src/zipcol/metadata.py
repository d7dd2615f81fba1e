"""Self-describing column metadata: a tag-length-value block.

Every record is ``tag:u8 length:u32 payload``. Container records nest
further records in their payload. See ``docs/FORMAT.md`` for the grammar.
"""

from __future__ import annotations

import enum
import struct
from dataclasses import dataclass, field

from zipcol.arrays import DataType, Kind
from zipcol.codecs import CodecDescriptor
from zipcol.errors import FormatError
from zipcol.fullzip import FullZipLayout

_TL = struct.Struct("<BI")
_U16 = struct.Struct("<H")
_PAGE_HEAD = struct.Struct("<BQQQQQ")
_FULLZIP = struct.Struct("<BIIBQQQQ")
_MINIBLOCK = struct.Struct("<IBQ")
_EXTENT = struct.Struct("<QQ")
_U64 = struct.Struct("<Q")


class Tag(enum.IntEnum):
    NAME = 0x01
    DTYPE = 0x02
    PACKING = 0x03
    COLUMN = 0x10
    LEAF = 0x20
    PATH = 0x21
    PAGE = 0x30
    PAGE_HEAD = 0x31
    CODEC = 0x32
    AUX = 0x33
    FULLZIP = 0x40
    MINIBLOCK = 0x50
    ARROW = 0x60


class Encoding(enum.IntEnum):
    ARROW = 0
    FULLZIP = 1
    MINIBLOCK = 2


class Packing(enum.IntEnum):
    SHREDDED = 0
    PACKED_STRUCT = 1
    PACKED_RECORD = 2


def tlv(tag: int, payload: bytes) -> bytes:
    return _TL.pack(tag, len(payload)) + payload


def iter_tlv(buf: bytes, base: int = 0):
    pos = 0
    while pos < len(buf):
        if pos + _TL.size > len(buf):
            raise FormatError(f"truncated metadata record at byte {base + pos}")
        tag, length = _TL.unpack_from(buf, pos)
        pos += _TL.size
        if pos + length > len(buf):
            raise FormatError(f"metadata record 0x{tag:02x} overruns its container at byte {base + pos}")
        yield tag, buf[pos : pos + length], base + pos
        pos += length


# ---------------------------------------------------------------------------
# data types


def serialize_dtype(dtype: DataType) -> bytes:
    head = bytes([dtype.kind, int(dtype.nullable)])
    if dtype.kind == Kind.FIXED_SIZE_LIST:
        return head + struct.pack("<I", dtype.dimension) + serialize_dtype(dtype.child)
    if dtype.kind == Kind.LIST:
        return head + serialize_dtype(dtype.child)
    if dtype.kind == Kind.STRUCT:
        out = bytearray(head + _U16.pack(len(dtype.fields)))
        for name, ftype in dtype.fields:
            raw = name.encode("utf-8")
            out += _U16.pack(len(raw)) + raw + serialize_dtype(ftype)
        return bytes(out)
    return head


def parse_dtype(buf: bytes) -> DataType:
    dtype, pos = _parse_dtype(buf, 0)
    if pos != len(buf):
        raise FormatError("trailing bytes after data type")
    return dtype


def _parse_dtype(buf: bytes, pos: int) -> tuple[DataType, int]:
    if pos + 2 > len(buf):
        raise FormatError("truncated data type")
    try:
        kind = Kind(buf[pos])
    except ValueError:
        raise FormatError(f"unknown type kind {buf[pos]}") from None
    nullable = bool(buf[pos + 1])
    pos += 2
    if kind == Kind.FIXED_SIZE_LIST:
        (dim,) = struct.unpack_from("<I", buf, pos)
        child, pos = _parse_dtype(buf, pos + 4)
        return DataType(kind, nullable, child=child, dimension=dim), pos
    if kind == Kind.LIST:
        child, pos = _parse_dtype(buf, pos)
        return DataType(kind, nullable, child=child), pos
    if kind == Kind.STRUCT:
        (n,) = _U16.unpack_from(buf, pos)
        pos += 2
        fields = []
        for _ in range(n):
            (ln,) = _U16.unpack_from(buf, pos)
            name = buf[pos + 2 : pos + 2 + ln].decode("utf-8")
            ftype, pos = _parse_dtype(buf, pos + 2 + ln)
            fields.append((name, ftype))
        return DataType(kind, nullable, fields=tuple(fields)), pos
    return DataType(kind, nullable), pos


# ---------------------------------------------------------------------------
# column / page records


@dataclass
class PageMeta:
    encoding: Encoding
    row_start: int
    row_count: int
    entry_count: int
    offset: int
    length: int
    codec: CodecDescriptor
    fullzip: FullZipLayout | None = None
    rep_index_offset: int = 0
    rep_index_length: int = 0
    data_offset: int = 0
    data_length: int = 0
    chunk_count: int = 0
    lengths_width: int = 0
    meta_length: int = 0

    def to_bytes(self) -> bytes:
        out = tlv(Tag.PAGE_HEAD, _PAGE_HEAD.pack(
            self.encoding, self.row_start, self.row_count, self.entry_count, self.offset, self.length))
        out += tlv(Tag.CODEC, self.codec.to_bytes())
        if self.codec.aux:
            out += tlv(Tag.AUX, self.codec.aux)
        if self.encoding == Encoding.FULLZIP:
            fz = self.fullzip
            out += tlv(Tag.FULLZIP, _FULLZIP.pack(
                fz.length_width, fz.value_width, fz.fixed_record_width, fz.rep_index_width,
                self.rep_index_offset, self.rep_index_length, self.data_offset, self.data_length))
        else:
            out += tlv(Tag.MINIBLOCK, _MINIBLOCK.pack(self.chunk_count, self.lengths_width, self.meta_length))
        return out

    @classmethod
    def parse(cls, buf: bytes, base: int, max_rep: int, max_def: int) -> PageMeta:
        head = codec_raw = fz = mb = None
        aux = b""
        for tag, payload, at in iter_tlv(buf, base):
            if tag == Tag.PAGE_HEAD:
                head = _PAGE_HEAD.unpack(payload)
            elif tag == Tag.CODEC:
                codec_raw = payload
            elif tag == Tag.AUX:
                aux = payload
            elif tag == Tag.FULLZIP:
                fz = _FULLZIP.unpack(payload)
            elif tag == Tag.MINIBLOCK:
                mb = _MINIBLOCK.unpack(payload)
        if head is None or codec_raw is None:
            raise FormatError(f"page record at byte {base} lacks header or codec")
        enc, row_start, row_count, entries, offset, length = head
        page = cls(Encoding(enc), row_start, row_count, entries, offset, length,
                   CodecDescriptor.from_bytes(codec_raw, aux))
        if page.encoding == Encoding.FULLZIP:
            if fz is None:
                raise FormatError(f"full-zip page at byte {base} lacks layout")
            lw, vw, frw, riw, page.rep_index_offset, page.rep_index_length, page.data_offset, page.data_length = fz
            page.fullzip = FullZipLayout(max_rep, max_def, row_count, entries, lw, vw, frw, riw)
        elif page.encoding == Encoding.MINIBLOCK:
            if mb is None:
                raise FormatError(f"miniblock page at byte {base} lacks layout")
            page.chunk_count, page.lengths_width, page.meta_length = mb
            page.data_offset = offset + page.meta_length
            page.data_length = length - page.meta_length
        else:
            raise FormatError(f"unexpected page encoding {enc}")
        return page


@dataclass
class LeafMeta:
    path: tuple[str, ...]
    pages: list[PageMeta] = field(default_factory=list)

    def to_bytes(self) -> bytes:
        path = _U16.pack(len(self.path)) + b"".join(
            _U16.pack(len(p.encode())) + p.encode() for p in self.path)
        out = tlv(Tag.PATH, path)
        for page in self.pages:
            out += tlv(Tag.PAGE, page.to_bytes())
        return out


def _parse_path(buf: bytes) -> tuple[str, ...]:
    (n,) = _U16.unpack_from(buf, 0)
    pos = 2
    out = []
    for _ in range(n):
        (ln,) = _U16.unpack_from(buf, pos)
        out.append(buf[pos + 2 : pos + 2 + ln].decode("utf-8"))
        pos += 2 + ln
    return tuple(out)


@dataclass
class ColumnMeta:
    name: str
    dtype: DataType
    packing: Packing = Packing.SHREDDED
    leaves: list[LeafMeta] = field(default_factory=list)
    arrow_extents: list[tuple[int, int]] | None = None

    @property
    def encodings(self) -> set[Encoding]:
        if self.arrow_extents is not None:
            return {Encoding.ARROW}
        return {p.encoding for leaf in self.leaves for p in leaf.pages}

    def to_bytes(self) -> bytes:
        out = tlv(Tag.NAME, self.name.encode("utf-8"))
        out += tlv(Tag.DTYPE, serialize_dtype(self.dtype))
        out += tlv(Tag.PACKING, bytes([self.packing]))
        if self.arrow_extents is not None:
            out += tlv(Tag.ARROW, _U64.pack(len(self.arrow_extents)) + b"".join(
                _EXTENT.pack(o, n) for o, n in self.arrow_extents))
        for leaf in self.leaves:
            out += tlv(Tag.LEAF, leaf.to_bytes())
        return out

    @classmethod
    def parse(cls, buf: bytes, base: int, level_maxima) -> ColumnMeta:
        """``level_maxima(dtype, packing)`` returns ``[(max_rep, max_def)]`` per leaf."""
        name = dtype = None
        packing = Packing.SHREDDED
        arrow = None
        leaf_records = []
        for tag, payload, at in iter_tlv(buf, base):
            if tag == Tag.NAME:
                name = payload.decode("utf-8")
            elif tag == Tag.DTYPE:
                dtype = parse_dtype(payload)
            elif tag == Tag.PACKING:
                packing = Packing(payload[0])
            elif tag == Tag.ARROW:
                (n,) = _U64.unpack_from(payload, 0)
                arrow = [_EXTENT.unpack_from(payload, 8 + 16 * i) for i in range(n)]
            elif tag == Tag.LEAF:
                leaf_records.append((payload, at))
        if name is None or dtype is None:
            raise FormatError(f"column record at byte {base} lacks name or type")
        col = cls(name, dtype, packing, [], arrow)
        if leaf_records:
            maxima = level_maxima(dtype, packing)
            if len(maxima) != len(leaf_records):
                raise FormatError(f"column {name!r} has {len(leaf_records)} leaf records, type implies {len(maxima)}")
            for (payload, at), (max_rep, max_def) in zip(leaf_records, maxima):
                leaf = LeafMeta(())
                for tag, sub, sub_at in iter_tlv(payload, at):
                    if tag == Tag.PATH:
                        leaf.path = _parse_path(sub)
                    elif tag == Tag.PAGE:
                        leaf.pages.append(PageMeta.parse(sub, sub_at, max_rep, max_def))
                col.leaves.append(leaf)
        return col


def serialize_columns(columns: list[ColumnMeta]) -> bytes:
    return b"".join(tlv(Tag.COLUMN, c.to_bytes()) for c in columns)


def parse_columns(buf: bytes, base: int, level_maxima) -> list[ColumnMeta]:
    out = []
    for tag, payload, at in iter_tlv(buf, base):
        if tag != Tag.COLUMN:
            raise FormatError(f"unexpected top-level metadata record 0x{tag:02x} at byte {at}")
        out.append(ColumnMeta.parse(payload, at, level_maxima))
    return out
