"""End-to-end acceptance checks, one test per criterion.

A PASS/FAIL line per criterion is printed in the terminal summary.
"""

import itertools
import os
import subprocess
import sys
import time
from pathlib import Path

import numpy as np
import pytest
from conftest import record_detail
from randgen import random_case

from zipcol import NO_COALESCE, WriteOptions, open_file, select_encoding, write_file
from zipcol.arrays import (
    array_equal,
    avg_value_width,
    binary,
    binary_array,
    fixed_size_list,
    from_pylist,
    list_,
    struct,
    take,
    uint8,
    uint64,
    utf8,
)
from zipcol.arrow import take_iops
from zipcol.coalesce import expected_distinct_pages, simulate_distinct_pages
from zipcol.codecs import PassthroughCodec
from zipcol.fullzip import ControlWordSpec, encode_full_zip
from zipcol.io import TAG_DATA
from zipcol.miniblock import (
    MAX_CHUNK_BYTES,
    ChunkContext,
    build_chunk_body,
    decode_chunk,
    decode_chunk_meta,
    encode_chunk_meta,
    encode_miniblock,
    parse_chunk_body,
)
from zipcol.repdef import shred
from zipcol.scenarios import SCENARIOS, generate

ENCODINGS = ["auto", "fullzip", "miniblock", "arrow"]
CODECS = [None, "block:rle", "block:zlib", "dictionary"]
ROOT = Path(__file__).resolve().parent.parent


def blobs(rng, lengths):
    lengths = np.asarray(lengths, dtype=np.int64)
    offsets = np.concatenate([[0], np.cumsum(lengths)])
    return binary_array(binary(False), offsets, rng.integers(0, 256, size=int(offsets[-1]), dtype=np.uint8))


def test_criterion_1_round_trip_fidelity():
    start = time.perf_counter()
    cases = 1000
    for seed in range(cases):
        dtype, a, _ = random_case(seed)
        rng = np.random.default_rng(seed + 10**6)
        opts = WriteOptions(encoding=ENCODINGS[seed % 4], page_bytes=int(rng.choice([8 << 20, 50_000, 4096])),
                            codec=CODECS[seed // 4 % 4])
        reader = open_file(write_file({"c": a}, opts)[0])
        assert array_equal(reader.scan()["c"], a), f"scan mismatch for case {seed} ({dtype})"
        if a.length:
            idx = np.sort(rng.integers(0, a.length, size=int(rng.integers(1, 65))))
            assert array_equal(reader.take(idx)["c"], take(a, idx)), f"take mismatch for case {seed} ({dtype})"
    elapsed = time.perf_counter() - start
    record_detail(1, f"{cases} cases in {elapsed:.0f} s")
    assert elapsed < 300


def test_criterion_2_nested_golden_bytes():
    dt = struct([("items", list_(utf8()))])
    rows = [{"items": ["AB", "C"]}, {"items": None}, None, {"items": [None]}, {"items": []}]
    (levels,) = shred(from_pylist(rows, dt))
    page = encode_full_zip(levels, PassthroughCodec(utf8(False)))
    assert page.zipped == bytes([0b1000, 2]) + b"AB" + bytes([0b0000, 1]) + b"C" + bytes([0b1011, 0b1100, 0b1001, 0b1010])
    # valid 0, null item 1, empty list 2, null list 3, null struct 4
    assert levels.def_.tolist() == [0, 0, 3, 4, 1, 2]
    assert levels.rep.tolist() == [1, 0, 1, 1, 1, 1]
    spec = ControlWordSpec.for_levels(levels.max_rep, levels.max_def)
    words = [(r << spec.def_bits) | d for r, d in zip(levels.rep.tolist(), levels.def_.tolist())]
    assert words == [0b1000, 0b0000, 0b1011, 0b1100, 0b1001, 0b1010]
    assert page.rep_index.tolist() == [0, 7, 8, 9, 10, 11]
    record_detail(2, page.zipped.hex(" "))


def test_criterion_3_iop_bounds():
    n = 20_000
    rng = np.random.default_rng(3)
    cols = {
        "fixed": from_pylist([[i % 251] * 200 for i in range(n)], fixed_size_list(uint8(False), 200)),
        "variable": blobs(rng, rng.integers(150, 400, size=n)),
        "flat": from_pylist(rng.integers(0, 2**40, size=200_000).tolist(), uint64()),
    }
    readers = {name: open_file(write_file({name: col})[0], NO_COALESCE) for name, col in cols.items()}
    assert readers["fixed"].column_meta("fixed").leaves[0].pages[0].fullzip.is_fixed
    assert not readers["variable"].column_meta("variable").leaves[0].pages[0].fullzip.is_fixed
    for name, want in (("fixed", 1), ("variable", 2)):
        r = readers[name]
        for row in rng.integers(0, n, size=25):
            plan = r.plan_take([int(row)])
            before = r.stats
            got = r.take([int(row)])[name]
            delta = r.stats - before
            assert plan.iops == delta.iops == want
            assert delta.by_tag[TAG_DATA] == 1
            assert array_equal(got, take(cols[name], [int(row)]))
    r = readers["flat"]
    worst = 0
    for k in (1, 10, 100, 1000):
        idx = np.sort(rng.choice(200_000, k, replace=False))
        plan = r.plan_take(idx)
        before = r.stats
        got = r.take(idx)["flat"]
        delta = r.stats - before
        assert delta.iops == plan.iops <= k
        worst = max(worst, max(p.length for p in plan.reads))
        assert array_equal(got, take(cols["flat"], idx))
    assert worst <= 8192 <= MAX_CHUNK_BYTES
    record_detail(3, f"fixed 1, variable 2, miniblock largest read {worst} B")


def test_criterion_4_arrow_baseline():
    assert take_iops(list_(utf8())) == (5, 3)
    rows = [["a", None], None, [], ["bcd"]]
    r = open_file(write_file({"c": from_pylist(rows, list_(utf8()))}, WriteOptions(encoding="arrow"))[0], NO_COALESCE)
    plan = r.plan_take([0])
    before = r.stats
    r.take([0])
    assert (r.stats - before).iops == plan.iops == 5 and plan.phases == 3

    arrow, ours = [], []
    for depth in range(1, 5):
        dt = uint64()
        for _ in range(depth):
            dt = list_(dt)
        arr = from_pylist(_nested_rows(depth), dt)
        arrow.append(take_iops(dt)[0])
        counts = []
        for enc in ("fullzip", "miniblock"):
            rd = open_file(write_file({"c": arr}, WriteOptions(encoding=enc))[0], NO_COALESCE)
            before = rd.stats
            rd.take([3])
            counts.append((rd.stats - before).iops)
        ours.append(tuple(counts))
    assert all(b > a for a, b in itertools.pairwise(arrow))
    assert len(set(ours)) == 1
    record_detail(4, f"arrow by depth {arrow}, ours (full-zip, miniblock) {ours[0]}")


def _nested_rows(depth):
    rows = [[i, i + 1] for i in range(50)]
    for _ in range(depth - 1):
        rows = [[r, r] for r in rows]
    return rows


def test_criterion_5_chunk_word_bijection():
    start = time.perf_counter()
    count = 0
    for log2 in range(13):
        for words in range(1, 4096):
            w = encode_chunk_meta(1 << log2, words * 8)
            assert decode_chunk_meta(w) == (1 << log2, words * 8)
            count += 1
    elapsed = time.perf_counter() - start
    assert count == 13 * 4095 and elapsed < 1.0

    rng = np.random.default_rng(8)
    valid = np.ones(248, bool)
    valid[rng.choice(248, 20, replace=False)] = False
    lens = np.where(valid, 4957 // valid.sum(), 0)
    lens[np.flatnonzero(valid)[: 4957 - lens.sum()]] += 1
    (levels,) = shred(from_pylist(["z" * int(k) if v else None for v, k in zip(valid, lens)], utf8()))
    codec = PassthroughCodec(utf8(False))
    page = encode_miniblock(levels, codec)
    ctx = ChunkContext(levels.max_rep, levels.max_def, codec, page.lengths_width)
    buffers = parse_chunk_body(page.bodies)
    assert [len(b) for b in buffers] == [31, 248, 4957]
    assert build_chunk_body(buffers) == page.bodies
    back = decode_chunk(page.bodies, 248, ctx)
    assert back.def_.tolist() == levels.def_.tolist() and array_equal(back.leaf_values, levels.leaf_values)
    record_detail(5, f"{count} words in {elapsed * 1000:.0f} ms, 248-value chunk word 0x{int(page.words[0]):04x}")


def test_criterion_6_search_cache_bound():
    worst = 0.0
    for name in SCENARIOS:
        data, report = write_file({name: generate(name)})
        r = open_file(data)
        assert r.cache_bytes == report.cache_bytes
        assert r.cache_bytes <= 0.001 * r.data_bytes, name
        if r.chunk_count:
            assert r.cache_bytes / r.chunk_count <= 48, name
        if report.encodings() == {"fullzip"}:
            assert r.cache_bytes == 0, name
        worst = max(worst, r.cache_bytes / r.data_bytes)
    record_detail(6, f"largest ratio {worst:.5%}")


def test_criterion_7_coalescing_model():
    start = time.perf_counter()
    k = 100_000
    for rows in (10**5, 10**7, 4 * 10**9):
        for size in (4, 16, 3072):
            kk = min(k, rows)
            exp = expected_distinct_pages(rows, size, 8192, kk)
            mc = simulate_distinct_pages(rows, size, 8192, kk, trials=10, seed=7)
            assert abs(mc - exp) / exp < 0.01, (rows, size, exp, mc)
    elapsed = time.perf_counter() - start
    assert elapsed < 60
    far = expected_distinct_pages(4 * 10**9, 4, 8192, k)
    overlap = 1 - far / k
    record_detail(7, f"model and Monte Carlo agree on the grid; 4e9-row overlap {overlap:.2%}, required < 0.5%")
    assert overlap < 0.005


def test_criterion_8_struct_packing():
    n = 50_000
    ratios = {}
    for fields in (2, 3, 4, 5):
        rng = np.random.default_rng(fields)
        dt = struct([(f"f{i}", uint64(False)) for i in range(fields)], False)
        rows = rng.integers(0, 2**60, size=(n, fields))
        arr = from_pylist([{f"f{i}": int(v) for i, v in enumerate(row)} for row in rows], dt)
        packed = open_file(write_file({"s": arr}, WriteOptions(pack=["s"]))[0], NO_COALESCE)
        plain = open_file(write_file({"s": arr})[0], NO_COALESCE)
        assert packed.plan_take([123]).iops == 1
        assert plain.plan_take([123]).iops == fields
        for r in (packed, plain):
            assert array_equal(r.take([123, 4])["s"], take(arr, [123, 4]))
        sizes = []
        for r in (packed, plain):
            before = r.stats
            r.scan("s.f0")
            sizes.append((r.stats - before).bytes_read)
        ratios[fields] = sizes[0] / sizes[1]
    record_detail(8, "scan byte ratio by field count " + ", ".join(f"{k}: {v:.3f}" for k, v in ratios.items()))
    for fields, ratio in ratios.items():
        assert ratio == pytest.approx(fields, rel=0.10)


def test_criterion_9_encoding_routing():
    rng = np.random.default_rng(9)
    checked = 0
    for i in range(100):
        kind = i % 3
        if kind == 0:
            width = int(rng.integers(112, 145))
            col = from_pylist([[1] * width] * 64, fixed_size_list(uint8(False), width))
        elif kind == 1:
            mean = rng.uniform(110, 146)
            col = blobs(rng, rng.integers(int(mean) - 40, int(mean) + 41, size=200))
        else:
            items = int(rng.integers(13, 19))  # 8-byte items, widths around 128 per row
            col = from_pylist([[7] * items] * 100, list_(uint64(False), False))
        _, report = write_file({"c": col})
        want = select_encoding(avg_value_width(col)).name.lower()
        assert report.encodings() == {want}, (i, avg_value_width(col))
        checked += 1
    assert select_encoding(128).name == "FULLZIP" and select_encoding(127.99).name == "MINIBLOCK"
    record_detail(9, f"{checked} columns, ties at 128 B go to full-zip")


_GEN = (
    "import hashlib, sys\n"
    "sys.path.insert(0, 'tests')\n"
    "from randgen import random_case\n"
    "from zipcol import WriteOptions, write_file\n"
    "h = hashlib.sha256()\n"
    "for seed in range(40):\n"
    "    _, a, _ = random_case(seed, 2000)\n"
    "    h.update(write_file({'c': a}, WriteOptions(codec='dictionary' if seed % 2 else None))[0])\n"
    "print(h.hexdigest())\n"
)


def test_criterion_10_determinism(tmp_path):
    digests = []
    for run, hashseed in enumerate(("1", "2")):
        env = {**os.environ, "PYTHONHASHSEED": hashseed}
        out = subprocess.run([sys.executable, "-c", _GEN], capture_output=True, text=True, check=True, env=env, cwd=ROOT)
        digests.append(out.stdout.strip())
        subprocess.run([sys.executable, "-m", "zipcol.cli", "generate", "--scenario", "string-list", "--rows", "20000",
                        "--path", str(tmp_path / f"run{run}.zcf")], capture_output=True, check=True, env=env, cwd=ROOT)
    assert digests[0] == digests[1] and len(digests[0]) == 64
    files = [(tmp_path / f"run{run}.zcf").read_bytes() for run in range(2)]
    assert files[0] == files[1]
    _, a, _ = random_case(99)
    assert write_file({"c": a})[0] == write_file({"c": a})[0]
    record_detail(10, f"two processes agree, digest {digests[0][:16]}, CLI files {len(files[0])} B identical")
