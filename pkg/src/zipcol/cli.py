"""zipcol command line: generate, take, scan, coalesce-model, inspect.

Exit codes: 0 success, 2 an I/O bound check failed, 1 any other error.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass

import numpy as np

from zipcol.arrow import take_iops
from zipcol.coalesce import coalesce_table
from zipcol.errors import ZipcolError
from zipcol.file import FileReader, WriteOptions, open_file, write_file
from zipcol.io import SECTOR, TAG_REP_INDEX, CoalescePolicy
from zipcol.metadata import Encoding
from zipcol.miniblock import MAX_CHUNK_BYTES
from zipcol.scenarios import SCENARIOS, generate

ENCODINGS = ("auto", "fullzip", "miniblock", "arrow", "arrow-baseline")


@dataclass
class RunRecord:
    scenario: str
    encoding: str
    workload: str
    rows: int
    k: int
    batches: int
    workers: int
    coalesce: bool
    iops: int
    phases: int
    bytes_read: int
    useful_bytes: int
    read_amplification: float
    rep_index_iops: int
    cache_bytes: int
    seconds: float
    rows_per_second: float
    baseline_reads_per_second: float | None = None


# ---------------------------------------------------------------------------
# helpers


def _policy(args) -> CoalescePolicy:
    return CoalescePolicy(enabled=args.coalesce == "on", max_gap=args.max_gap)


def _encoding_option(name: str) -> str:
    return "arrow" if name == "arrow-baseline" else name


def _emit(records: list[dict], fmt: str, out=None) -> None:
    out = out or sys.stdout
    if fmt == "json":
        json.dump(records if len(records) != 1 else records[0], out, indent=2, default=str)
        out.write("\n")
        return
    if not records:
        return
    writer = csv.DictWriter(out, fieldnames=list(records[0]), lineterminator="\n")
    writer.writeheader()
    writer.writerows(records)


def _open(args) -> tuple[FileReader, str]:
    """Reader over ``args.file`` or an in-memory file built from ``--scenario``."""
    if args.file:
        reader = open_file(args.file, _policy(args), bypass_cache=getattr(args, "direct", False))
        return reader, args.column or reader.columns[0]
    if not args.scenario:
        raise ZipcolError("give a file or --scenario")
    data, _ = _build(args.scenario, args.rows, args.seed, args.encoding, args.null_fraction)
    return open_file(data, _policy(args)), args.scenario


def _build(scenario: str, rows, seed: int, encoding: str, null_fraction: float):
    column = generate(scenario, rows, null_fraction, seed)
    return write_file({scenario: column}, WriteOptions(encoding=_encoding_option(encoding)))


def _column_encoding(reader: FileReader, column: str) -> str:
    col, _ = reader.resolve_column(column)
    encodings = col.meta.encodings
    if len(encodings) == 1:
        return next(iter(encodings)).name.lower()
    return "+".join(sorted(e.name.lower() for e in encodings))


def _take_bound(reader: FileReader, column: str, rows: np.ndarray) -> tuple[int, bool]:
    """Largest IOP count a take of ``rows`` may issue, and whether it is exact."""
    col, _ = reader.resolve_column(column)
    k = len(rows)
    if col.arrow is not None:
        return k * take_iops(col.meta.dtype)[0], True
    bound = 0
    for readers in col.pages:
        for r in readers:
            lo, hi = np.searchsorted(rows, [r.meta.row_start, r.meta.row_start + r.meta.row_count])
            n = int(hi - lo)
            if not n:
                continue
            if r.meta.encoding == Encoding.FULLZIP:
                bound += n if r.meta.fullzip.is_fixed else 2 * n
            else:
                first, last, _ = r.index.locate(rows[lo:hi] - r.meta.row_start)
                bound += int((last - first + 1).sum())
    return bound, False


# ---------------------------------------------------------------------------
# commands


def cmd_generate(args) -> int:
    data, report = _build(args.scenario, args.rows, args.seed, args.encoding, args.null_fraction)
    path = args.path or f"{args.scenario}.zcf"
    with open(path, "wb") as fh:
        fh.write(data)
    records = [{
        "path": path,
        "scenario": args.scenario,
        "rows": report.row_count,
        "file_bytes": report.file_bytes,
        "data_bytes": report.data_bytes,
        "encodings": "+".join(sorted(report.encodings())) or _encoding_option(args.encoding),
        "pages": len(report.pages),
        "chunks": report.chunk_count,
        "cache_bytes": report.cache_bytes,
    }]
    _emit(records, args.out)
    return 0


def _baseline(reader: FileReader, reads: int, workers: int, seed: int) -> float:
    """Random 4 KiB reads per second against the same storage."""
    storage = reader.engine.storage
    size = storage.size
    rng = np.random.default_rng(seed)
    offsets = (rng.integers(0, max(1, size // SECTOR), size=reads) * SECTOR).tolist()
    start = time.perf_counter()
    with ThreadPoolExecutor(workers) as pool:
        list(pool.map(lambda off: storage.read(off, min(SECTOR, size - off)), offsets))
    return reads / max(time.perf_counter() - start, 1e-9)


def cmd_take(args) -> int:
    reader, column = _open(args)
    n = reader.row_count
    k = min(args.k, n)
    seeds = np.random.SeedSequence(args.seed).spawn(args.batches)
    batches = [np.sort(np.random.default_rng(s).choice(n, k, replace=False)) for s in seeds]
    plans = [reader.plan_take(b, [column]) for b in batches]
    reader.engine.reset_stats()
    start = time.perf_counter()
    with ThreadPoolExecutor(args.workers) as pool:
        list(pool.map(lambda b: reader.take(b, [column]), batches))
    seconds = time.perf_counter() - start
    stats = reader.stats
    planned = sum(p.iops for p in plans)
    problems = []
    if not _policy(args).enabled:
        if stats.iops != planned:
            problems.append(f"executed {stats.iops} reads, planned {planned}")
        bound = exact = 0
        for b in batches:
            limit, is_exact = _take_bound(reader, column, b)
            bound += limit
            exact = is_exact
        if stats.iops > bound or (exact and stats.iops != bound):
            problems.append(f"{stats.iops} reads against a bound of {bound}")
        if _column_encoding(reader, column) == "miniblock":
            largest = max((r.length for p in plans for r in p.reads), default=0)
            if largest > MAX_CHUNK_BYTES:
                problems.append(f"read of {largest} bytes exceeds the {MAX_CHUNK_BYTES} byte chunk cap")
    record = RunRecord(
        scenario=column,
        encoding=_column_encoding(reader, column),
        workload="take",
        rows=n,
        k=k,
        batches=args.batches,
        workers=args.workers,
        coalesce=_policy(args).enabled,
        iops=stats.iops,
        phases=max((p.phases for p in plans), default=0),
        bytes_read=stats.bytes_read,
        useful_bytes=stats.useful_bytes,
        read_amplification=round(stats.read_amplification, 4),
        rep_index_iops=stats.by_tag.get(TAG_REP_INDEX, 0),
        cache_bytes=reader.cache_bytes,
        seconds=round(seconds, 6),
        rows_per_second=round(k * args.batches / max(seconds, 1e-9), 1),
        baseline_reads_per_second=round(_baseline(reader, args.baseline, args.workers, args.seed), 1) if args.baseline else None,
    )
    _emit([asdict(record)], args.out)
    if problems:
        for p in problems:
            print(f"bound check failed: {p}", file=sys.stderr)
        return 2
    return 0


def cmd_scan(args) -> int:
    reader, column = _open(args)
    start = time.perf_counter()
    reader.scan([column])
    seconds = time.perf_counter() - start
    stats = reader.stats  # includes the footer and metadata reads made at open
    encoding = _column_encoding(reader, column)
    record = RunRecord(
        scenario=column,
        encoding=encoding,
        workload="scan",
        rows=reader.row_count,
        k=0,
        batches=1,
        workers=1,
        coalesce=_policy(args).enabled,
        iops=stats.iops,
        phases=1,
        bytes_read=stats.bytes_read,
        useful_bytes=stats.useful_bytes,
        read_amplification=round(stats.read_amplification, 4),
        rep_index_iops=stats.by_tag.get(TAG_REP_INDEX, 0),
        cache_bytes=reader.cache_bytes,
        seconds=round(seconds, 6),
        rows_per_second=round(reader.row_count / max(seconds, 1e-9), 1),
    )
    _emit([asdict(record)], args.out)
    if "fullzip" in encoding and record.rep_index_iops:
        print(f"bound check failed: scan read {record.rep_index_iops} repetition index reads", file=sys.stderr)
        return 2
    return 0


def cmd_coalesce_model(args) -> int:
    rows = args.rows_list or [100_000, 10_000_000, 4_000_000_000]
    table = coalesce_table(rows, args.sizes, args.page_bytes, args.k, args.trials, args.seed)
    _emit(table, args.out)
    return 0


def _print_inspect(info: dict, out=None) -> None:
    out = out or sys.stdout
    print(f"zipcol file v{info['version']}: {info['rows']} rows, {len(info['columns'])} columns", file=out)
    meta = info["metadata"]
    print(f"metadata block: offset {meta['offset']}, {meta['length']} bytes", file=out)
    print(f"data bytes {info['data_bytes']}, search cache {info['cache_bytes']} bytes over {info['chunks']} chunks", file=out)
    for col in info["columns"]:
        print(f"column {col['name']!r}: {col['dtype']} ({col['packing']})", file=out)
        if "arrow_extents" in col:
            print(f"  arrow layout, {len(col['arrow_extents'])} buffers", file=out)
        for leaf in col["leaves"]:
            label = leaf["path"] or "<leaf>"
            for p in leaf["pages"]:
                line = f"  {label} rows {p['rows'][0]}+{p['rows'][1]} {p['encoding']} codec={p['codec']} bytes={p['bytes']}"
                if p["encoding"] == "miniblock":
                    line += f" chunks={p['chunks']} values/chunk={p['chunk_values']}"
                else:
                    line += f" cw={p['control_word_bytes']}B record={p['fixed_record_width']} rep_index_width={p['rep_index_width']}"
                print(line, file=out)


def cmd_inspect(args) -> int:
    reader = open_file(args.file)
    info = reader.describe()
    if args.out == "json":
        _emit([info], "json")
    else:
        _print_inspect(info)
    return 0


# ---------------------------------------------------------------------------
# parser


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--out", choices=("csv", "json"), default="csv")
    p.add_argument("--seed", type=int, default=0)


def _source(p: argparse.ArgumentParser) -> None:
    p.add_argument("file", nargs="?", help="file to read; omit to build one in memory from --scenario")
    p.add_argument("--column", help="column or dotted field path (default: first column)")
    p.add_argument("--scenario", choices=sorted(SCENARIOS))
    p.add_argument("--rows", type=int)
    p.add_argument("--encoding", choices=ENCODINGS, default="auto")
    p.add_argument("--null-fraction", type=float, default=0.10)
    p.add_argument("--coalesce", choices=("on", "off"), default="off")
    p.add_argument("--max-gap", type=int, default=4096, metavar="BYTES")
    p.add_argument("--direct", action="store_true", help="drop the OS page cache for the file before each read")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="zipcol", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="write a seeded scenario file")
    _common(p)
    p.add_argument("--scenario", choices=sorted(SCENARIOS), required=True)
    p.add_argument("--rows", type=int)
    p.add_argument("--encoding", choices=ENCODINGS, default="auto")
    p.add_argument("--null-fraction", type=float, default=0.10)
    p.add_argument("--path", help="output path (default: <scenario>.zcf)")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("take", help="random take batches with I/O bound checks")
    _common(p)
    _source(p)
    p.add_argument("--k", type=int, default=256)
    p.add_argument("--batches", type=int, default=10)
    p.add_argument("--workers", type=int, default=os.cpu_count() or 1)
    p.add_argument("--baseline", type=int, default=0, metavar="READS",
                   help="also time this many random 4 KiB reads of the same storage")
    p.set_defaults(func=cmd_take)

    p = sub.add_parser("scan", help="full column scan")
    _common(p)
    _source(p)
    p.set_defaults(func=cmd_scan)

    p = sub.add_parser("coalesce-model", help="expected distinct pages touched by random takes")
    _common(p)
    p.add_argument("--rows-list", type=int, nargs="+", metavar="N")
    p.add_argument("--sizes", type=int, nargs="+", default=[4, 16, 3072], metavar="BYTES")
    p.add_argument("--page-bytes", type=int, default=8192)
    p.add_argument("--k", type=int, default=100_000)
    p.add_argument("--trials", type=int, default=10, help="Monte Carlo trials (0 to skip)")
    p.set_defaults(func=cmd_coalesce_model)

    p = sub.add_parser("inspect", help="dump footer, encodings, chunks and cache accounting")
    p.add_argument("file")
    p.add_argument("--out", choices=("text", "json"), default="text")
    p.set_defaults(func=cmd_inspect)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ZipcolError, OSError, ValueError, KeyError, IndexError) as exc:
        print(f"zipcol: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
