import threading

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from randgen import random_case
from zipcol import NO_COALESCE, open_file, write_file, WriteOptions
from zipcol.arrays import (
    array_equal,
    fixed_size_list,
    float32,
    from_pylist,
    list_,
    slice_array,
    struct,
    take,
    to_pylist,
    uint64,
    utf8,
)
from zipcol.errors import FormatError, UnsupportedOperationError
from zipcol.file import FOOTER, HEADER, RECORD_COLUMN, select_encoding
from zipcol.io import TAG_DATA, TAG_REP_INDEX
from zipcol.metadata import Encoding

RNG = np.random.default_rng(42)


def strings(n, lo, hi, null=0.1, rng=RNG):
    lens = rng.integers(lo, hi + 1, size=n)
    return from_pylist([None if rng.random() < null else "s" * int(k) for k in lens], utf8())


def test_select_encoding_boundary():
    assert select_encoding(127.999) == Encoding.MINIBLOCK
    assert select_encoding(128) == Encoding.FULLZIP


def test_routing_by_average_width():
    cols = {
        "id": from_pylist(list(range(1000)), uint64(False)),
        "vec": from_pylist([[0.5] * 64] * 1000, fixed_size_list(float32(False), 64)),
        "short": strings(1000, 0, 40),
        "long": strings(1000, 200, 400),
    }
    _, report = write_file(cols)
    assert report.encodings("id") == {"miniblock"}
    assert report.encodings("vec") == {"fullzip"}
    assert report.encodings("short") == {"miniblock"}
    assert report.encodings("long") == {"fullzip"}


def test_forced_encodings_and_overrides():
    cols = {"a": from_pylist(list(range(100)), uint64()), "b": strings(100, 1, 5)}
    _, rep = write_file(cols, WriteOptions(encoding={"a": "fullzip"}))
    assert rep.encodings("a") == {"fullzip"} and rep.encodings("b") == {"miniblock"}
    with pytest.raises(ValueError):
        write_file(cols, WriteOptions(encoding="parquet"))


def test_oversized_values_fall_back_to_fullzip():
    col = from_pylist(["x" * 50_000] + ["y"] * 2000, utf8())
    data, rep = write_file({"s": col})
    assert rep.encodings() == {"fullzip"}
    assert array_equal(open_file(data).scan()["s"], col)


def test_empty_file():
    data, rep = write_file({})
    assert len(data) == len(HEADER) + FOOTER.size == 44
    r = open_file(data)
    assert r.row_count == 0 and r.columns == [] and r.scan() == {}


def test_zero_row_columns():
    data, _ = write_file({"a": from_pylist([], list_(utf8()))})
    r = open_file(data)
    assert r.scan()["a"].length == 0
    assert r.take([])["a"].length == 0


def test_deterministic_bytes():
    dtype, a, _ = random_case(3)
    assert write_file({"c": a})[0] == write_file({"c": a})[0]


@pytest.mark.parametrize("mutate, message", [
    (lambda d: d[:-4] + b"XXXX", "magic"),
    (lambda d: d[:-8] + b"\x09\x00" + d[-6:], "version"),
    (lambda d: d[:30], "small"),
    (lambda d: d[:8] + d[16:], "bounds"),
])
def test_corrupt_files(mutate, message):
    data, _ = write_file({"a": from_pylist(list(range(50)), uint64())})
    with pytest.raises(FormatError, match=message):
        open_file(mutate(data))


def test_take_handles_duplicates_and_order():
    col = strings(300, 0, 20)
    r = open_file(write_file({"s": col}, WriteOptions(page_bytes=1024))[0])
    idx = [299, 0, 5, 5, 150, 0]
    assert array_equal(r.take(idx)["s"], take(col, idx))
    with pytest.raises(IndexError):
        r.take([300])


def test_nested_selection_and_unknown_column():
    dt = struct([("a", uint64()), ("b", struct([("c", list_(utf8()))]))])
    rows = [{"a": 1, "b": {"c": ["x"]}}, None, {"a": 3, "b": None}]
    r = open_file(write_file({"s": from_pylist(rows, dt)})[0])
    got = r.scan("s.b.c")["s.b.c"]
    assert to_pylist(got) == [{"b": {"c": ["x"]}}, None, {"b": None}]
    assert to_pylist(r.take([2], "s.a")["s.a"]) == [{"a": 3}]
    with pytest.raises(KeyError):
        r.scan("nope")


def test_packed_struct_and_record():
    fields = [(f"f{i}", uint64(False)) for i in range(5)]
    dt = struct(fields, False)
    n = 2000
    arr = from_pylist([{f"f{i}": r * 10 + i for i in range(5)} for r in range(n)], dt)
    packed = open_file(write_file({"s": arr}, WriteOptions(pack=["s"], encoding="fullzip"))[0], NO_COALESCE)
    shredded = open_file(write_file({"s": arr}, WriteOptions(encoding="fullzip"))[0], NO_COALESCE)
    assert packed.plan_take([7]).iops == 1
    assert shredded.plan_take([7]).iops == 5
    assert array_equal(packed.take([7, 1999])["s"], take(arr, [7, 1999]))
    assert to_pylist(packed.scan("s.f3")["s.f3"])[:2] == [{"f3": 3}, {"f3": 13}]

    cols = {"x": from_pylist(list(range(n)), uint64()), "y": strings(n, 0, 10)}
    rec = open_file(write_file(cols, WriteOptions(pack_record=True))[0], NO_COALESCE)
    assert rec.columns == ["x", "y"]
    assert rec.column_meta(RECORD_COLUMN) is not None
    assert array_equal(rec.scan("y")["y"], cols["y"])
    assert array_equal(rec.take([3, 4], "x")["x"], take(cols["x"], [3, 4]))
    with pytest.raises(UnsupportedOperationError):
        write_file({"n": from_pylist([{"a": {"b": 1}}], struct([("a", struct([("b", uint64())]))]))},
                   WriteOptions(pack=["n"]))


def test_fullzip_iop_counts():
    n = 5000
    fixed = from_pylist([[float(i)] * 64 for i in range(n)], fixed_size_list(float32(False), 64))
    var = strings(n, 150, 300)
    r = open_file(write_file({"fixed": fixed, "var": var})[0], NO_COALESCE)
    for name, want in (("fixed", 1), ("var", 2)):
        before = r.stats
        got = r.take([1234], name)[name]
        delta = r.stats - before
        assert delta.iops == want == r.plan_take([1234], name).iops
        assert array_equal(got, slice_array({"fixed": fixed, "var": var}[name], 1234, 1))
    before = r.stats
    r.scan("var")
    assert (r.stats - before).by_tag[TAG_REP_INDEX] == 0


def test_miniblock_iop_bound_and_read_size():
    col = from_pylist(list(range(200_000)), uint64())
    r = open_file(write_file({"c": col})[0], NO_COALESCE)
    rng = np.random.default_rng(0)
    for k in (1, 16, 256):
        idx = rng.choice(200_000, k, replace=False)
        plan = r.plan_take(idx)
        before = r.stats
        got = r.take(idx)["c"]
        delta = r.stats - before
        assert delta.iops == plan.iops <= k
        assert all(p.length <= 8192 for p in plan.reads if p.tag == TAG_DATA)
        assert array_equal(got, take(col, idx))


def test_file_path_backend(tmp_path):
    p = tmp_path / "t.zc"
    col = strings(500, 0, 30)
    write_file({"s": col}, path=p)
    for bypass in (False, True):
        r = open_file(p, bypass_cache=bypass)
        assert array_equal(r.scan()["s"], col)
        assert array_equal(r.take([4, 2])["s"], take(col, [4, 2]))


def test_concurrent_takes():
    col = strings(20_000, 0, 200)
    r = open_file(write_file({"s": col}, WriteOptions(page_bytes=64 << 10))[0])
    bad = []

    def worker(seed):
        rng = np.random.default_rng(seed)
        for _ in range(20):
            idx = rng.integers(0, 20_000, size=32)
            if not array_equal(r.take(idx)["s"], take(col, idx)):
                bad.append(seed)

    threads = [threading.Thread(target=worker, args=(s,)) for s in range(6)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert not bad


def test_describe_and_batches():
    col = from_pylist(list(range(3000)), uint64())
    r = open_file(write_file({"c": col})[0])
    d = r.describe()
    assert d["rows"] == 3000
    assert d["columns"][0]["leaves"][0]["pages"][0]["encoding"] == "miniblock"
    assert d["cache_bytes"] == r.cache_bytes > 0
    batches = list(r.iter_batches(batch_rows=1000))
    assert [b["c"].length for b in batches] == [1000] * 3


@settings(max_examples=80, deadline=None)
@given(seed=st.integers(0, 2**32 - 1),
       encoding=st.sampled_from(["auto", "fullzip", "miniblock", "arrow"]),
       page_bytes=st.sampled_from([8 << 20, 4096, 50_000]),
       codec=st.sampled_from([None, "block:rle", "block:zlib", "dictionary"]))
def test_random_round_trip(seed, encoding, page_bytes, codec):
    dtype, a, _ = random_case(seed, max_len=2000)
    opts = WriteOptions(encoding=encoding, page_bytes=page_bytes, codec=codec)
    r = open_file(write_file({"c": a}, opts)[0], NO_COALESCE)
    assert array_equal(r.scan()["c"], a)
    if a.length:
        idx = np.random.default_rng(seed).integers(0, a.length, size=7)
        plan = r.plan_take(idx)
        before = r.stats
        got = r.take(idx)["c"]
        assert (r.stats - before).iops == plan.iops
        assert array_equal(got, take(a, idx))
