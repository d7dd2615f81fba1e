"""zipcol: a columnar file format with full-zip and miniblock structural encodings."""

from zipcol.arrays import (
    DataType,
    Kind,
    LogicalArray,
    array_equal,
    binary,
    fixed_size_list,
    float32,
    float64,
    from_pylist,
    int8,
    int16,
    int32,
    int64,
    list_,
    struct,
    to_pylist,
    uint8,
    uint16,
    uint32,
    uint64,
    utf8,
)
from zipcol.errors import (
    CodecUnavailableError,
    CorruptLevelsError,
    DecodeError,
    FormatError,
    IllegalCodecError,
    RoutingError,
    UndefinedWidthError,
    UnsupportedOperationError,
    ZipcolError,
)
from zipcol.file import FileReader, TakePlan, WriteOptions, WriteReport, open_file, select_encoding, write_file
from zipcol.io import NO_COALESCE, CoalescePolicy, IoStats

__version__ = "0.1.0"

__all__ = [
    "CoalescePolicy",
    "CodecUnavailableError",
    "CorruptLevelsError",
    "DataType",
    "DecodeError",
    "FileReader",
    "FormatError",
    "IllegalCodecError",
    "IoStats",
    "Kind",
    "LogicalArray",
    "NO_COALESCE",
    "RoutingError",
    "TakePlan",
    "UndefinedWidthError",
    "UnsupportedOperationError",
    "WriteOptions",
    "WriteReport",
    "ZipcolError",
    "array_equal",
    "binary",
    "fixed_size_list",
    "float32",
    "float64",
    "from_pylist",
    "int16",
    "int32",
    "int64",
    "int8",
    "list_",
    "open_file",
    "select_encoding",
    "struct",
    "to_pylist",
    "uint16",
    "uint32",
    "uint64",
    "uint8",
    "utf8",
    "write_file",
]
