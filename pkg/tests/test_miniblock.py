import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from randgen import random_array, random_dtype
from zipcol.arrays import array_equal, from_pylist, list_, uint64, utf8
from zipcol.codecs import MINIBLOCK, PassthroughCodec, resolve_codec
from zipcol.errors import DecodeError, RoutingError
from zipcol.miniblock import (
    DEFAULT_CHUNK_TARGET,
    MAX_CHUNK_BYTES,
    ChunkContext,
    ChunkIndex,
    build_chunk_body,
    chunk_buffers,
    decode_chunk,
    decode_chunk_meta,
    decode_page,
    encode_chunk_meta,
    encode_miniblock,
    page_lengths_width,
    parse_chunk_body,
    plan_chunks,
    search_cache_bytes,
)
from zipcol.repdef import leaf_paths, shred, shred_leaf


def page_for(levels, codec, target=DEFAULT_CHUNK_TARGET):
    page = encode_miniblock(levels, codec, target)
    index = ChunkIndex.from_meta(page.entry_count, page.row_count, page.words, page.rep_index)
    ctx = ChunkContext(levels.max_rep, levels.max_def, codec, page.lengths_width)
    return page, index, ctx


def brute_chunks(levels, ctx, target):
    """Greedy chunker that sizes candidates by actually building bodies."""
    n = len(levels)
    prefix = levels.valid_prefix()

    def size(s, m):
        return len(build_chunk_body(chunk_buffers(levels.slice_entries(s, s + m, prefix), ctx)))

    out, s, limit = [], 0, 4096
    while s < n:
        rem = n - s
        if rem <= limit and size(s, rem) <= target:
            m = rem
        else:
            m = next(m for m in (1 << e for e in range(12, -1, -1)) if m <= rem and (size(s, m) <= target or m == 1))
        out.append((s, m))
        limit = m
        s += m
    return out


# -- chunk words ----------------------------------------------------------------


def test_chunk_word_examples():
    assert encode_chunk_meta(256, 2048) == 0x8100
    assert encode_chunk_meta(1, 8) == 0x0001
    assert decode_chunk_meta(0x8100) == (256, 2048)
    assert encode_chunk_meta(4096, MAX_CHUNK_BYTES) == 0xCFFF
    with pytest.raises(ValueError):
        encode_chunk_meta(4096, 32768)


def test_chunk_word_bijection_exhaustive():
    seen = set()
    for log2 in range(13):
        for words in range(1, 4096):
            w = encode_chunk_meta(1 << log2, words * 8)
            assert w == (log2 << 12) | words  # independent bit layout
            assert decode_chunk_meta(w) == (1 << log2, words * 8)
            seen.add(w)
    assert len(seen) == 13 * 4095


@pytest.mark.parametrize("args", [(3, 8), (0, 8), (8192, 8), (4, 12), (4, 0)])
def test_chunk_word_domain_errors(args):
    with pytest.raises(ValueError):
        encode_chunk_meta(*args)


@pytest.mark.parametrize("word", [0x0000, 0xD001, 0x3000])
def test_bad_chunk_words(word):
    with pytest.raises(DecodeError):
        decode_chunk_meta(word)


# -- chunk bodies -----------------------------------------------------------------


def wide_chunk_levels():
    rng = np.random.default_rng(8)
    valid = np.ones(248, bool)
    valid[rng.choice(248, 20, replace=False)] = False
    lens = np.zeros(248, int)
    lens[valid] = 4957 // valid.sum()
    lens[np.flatnonzero(valid)[: 4957 - lens.sum()]] += 1
    rows = ["x" * int(n) if v else None for v, n in zip(valid, lens)]
    (lv,) = shred(from_pylist(rows, utf8()))
    return lv, rows


def test_single_248_value_chunk():
    lv, rows = wide_chunk_levels()
    codec = PassthroughCodec(utf8(False))
    page, index, ctx = page_for(lv, codec)
    assert page.chunk_count == 1
    buffers = parse_chunk_body(page.bodies)
    assert [len(b) for b in buffers] == [31, 248, 4957]
    assert page.bodies[:8] == bytes.fromhex("03001f00f8005d13")
    assert int(page.words[0]) == 33424
    assert decode_chunk_meta(33424) == (256, 5248)
    back = decode_chunk(page.bodies, 248, ctx)
    assert back.def_.tolist() == lv.def_.tolist()
    assert array_equal(back.leaf_values, lv.leaf_values)
    assert build_chunk_body(buffers) == page.bodies


def test_body_buffers_are_eight_byte_aligned():
    body = build_chunk_body([b"a", b"bcdefghij", b""])
    assert len(body) % 8 == 0
    assert parse_chunk_body(body) == [b"a", b"bcdefghij", b""]
    assert body[8:9] == b"a" and body[16:25] == b"bcdefghij"
    with pytest.raises(DecodeError):
        parse_chunk_body(body[:-8])


# -- chunking ---------------------------------------------------------------------


def test_ten_thousand_uint64_chunking():
    (lv,) = shred(from_pylist(list(range(10_000)), uint64(False)))
    codec = PassthroughCodec(uint64(False))
    ctx = ChunkContext(0, 0, codec, 0)
    default = plan_chunks(lv, ctx)
    assert [m for _, m in default] == [512] * 19 + [272]
    assert plan_chunks(lv, ctx, 4096) == brute_chunks(lv, ctx, 4096)
    assert [m for _, m in plan_chunks(lv, ctx, 4096)] == [256] * 39 + [16]
    assert default == brute_chunks(lv, ctx, DEFAULT_CHUNK_TARGET)


def test_zero_values_zero_chunks():
    (lv,) = shred(from_pylist([], uint64(False)))
    page = encode_miniblock(lv, PassthroughCodec(uint64(False)))
    assert page.chunk_count == 0
    index = ChunkIndex.from_meta(0, 0, page.words, None)
    assert len(decode_page(page.to_bytes(), index, len(page.meta_bytes()), ChunkContext(0, 0, PassthroughCodec(uint64(False)), 0))) == 0


def test_oversized_value_raises_routing_error():
    (lv,) = shred(from_pylist(["x" * 40_000], utf8(False)))
    with pytest.raises(RoutingError):
        encode_miniblock(lv, PassthroughCodec(utf8(False)))


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), target=st.sampled_from([512, 4096, 8192]))
def test_planner_matches_brute_force(seed, target):
    rng = np.random.default_rng(seed)
    dtype = random_dtype(rng, 2)
    a = random_array(rng, dtype, int(rng.integers(1, 400)), 0.2, max_bytes=40)
    for leaf in leaf_paths(dtype):
        lv = shred_leaf(a, leaf)
        codec = resolve_codec(None, lv.leaf_values)
        width, lengths = page_lengths_width(codec, lv.leaf_values)
        ctx = ChunkContext(lv.max_rep, lv.max_def, codec, width)
        assert plan_chunks(lv, ctx, target, lengths) == brute_chunks(lv, ctx, target)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), width=st.integers(1, 128))
def test_at_least_32_values_per_chunk_under_threshold(seed, width):
    rng = np.random.default_rng(seed)
    n = 3000
    lens = rng.integers(0, width + 1, size=n)
    rows = [None if rng.random() < 0.1 else "y" * int(k) for k in lens]
    (lv,) = shred(from_pylist(rows, utf8()))
    page = encode_miniblock(lv, PassthroughCodec(utf8(False)))
    counts = [decode_chunk_meta(int(w))[0] for w in page.words[:-1]]
    assert min(counts, default=32) >= 32
    assert all(decode_chunk_meta(int(w))[1] <= 8192 for w in page.words)


# -- search cache -----------------------------------------------------------------


def test_flat_locate_example():
    (lv,) = shred(from_pylist(list(range(2000)), uint64(False)))
    page, index, _ = page_for(lv, PassthroughCodec(uint64(False)))
    first, last, pos = index.locate(np.array([1000]))
    assert (int(first[0]), int(last[0]), int(pos[0])) == (1, 1, 488)
    with pytest.raises(IndexError):
        index.locate(np.array([2000]))


def test_list_row_spanning_two_chunks():
    rep = np.array([[100, 7], [90, 0]], dtype=np.uint16)
    words = np.array([encode_chunk_meta(512, 8), encode_chunk_meta(256, 8, final=True)], dtype=np.uint16)
    index = ChunkIndex.from_meta(700, 190, words, rep)
    first, last, pos = index.locate(np.array([0, 99, 100, 101, 189]))
    assert first.tolist() == [0, 0, 0, 1, 1]
    assert last.tolist() == [0, 0, 1, 1, 1]
    assert pos.tolist() == [0, 99, 100, 0, 88]


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_locate_matches_brute_force_scan(seed):
    rng = np.random.default_rng(seed)
    dtype = list_(list_(uint64()) if rng.random() < 0.3 else utf8())
    a = random_array(rng, dtype, int(rng.integers(1, 300)), 0.1, max_items=int(rng.integers(1, 60)))
    (lv,) = shred(a)
    page, index, ctx = page_for(lv, PassthroughCodec(lv.leaf_values.dtype), 512)
    chunk_of = np.repeat(np.arange(page.chunk_count), index.counts())
    starts = np.flatnonzero(lv.rep == lv.max_rep)
    ends = np.append(starts[1:], len(lv)) - 1
    rows = np.arange(lv.row_count)
    first, last, pos = index.locate(rows)
    assert first.tolist() == chunk_of[starts].tolist()
    assert last.tolist() == chunk_of[ends].tolist()
    chunk_entry0 = index.entry_starts()[first]
    want_pos = [int(np.count_nonzero((starts >= e0) & (starts < s))) for e0, s in zip(chunk_entry0, starts)]
    assert pos.tolist() == want_pos
    back = decode_page(page.to_bytes(), index, len(page.meta_bytes()), ctx)
    assert back.rep.tolist() == lv.rep.tolist() and back.def_.tolist() == lv.def_.tolist()


def test_cache_accounting_for_a_billion_rows():
    rows = 1 << 30
    worst = rows // 32  # at least 32 values per chunk
    cache = search_cache_bytes(worst, True, page_overhead=24 * (rows // (1 << 20)))
    assert cache <= 1.28 * (1 << 30)
    assert cache / worst <= 48
    assert search_cache_bytes(rows // 512, False) / (rows // 512) < 24


@settings(max_examples=80, deadline=None)
@given(seed=st.integers(0, 2**32 - 1),
       request=st.sampled_from([None, "bitpack", "dictionary", "block:rle", "chunked:zlib", "chunked:rle"]))
def test_page_round_trip(seed, request):
    rng = np.random.default_rng(seed)
    dtype = random_dtype(rng, 2)
    a = random_array(rng, dtype, int(rng.integers(0, 600)), float(rng.choice([0, 0.2, 1])))
    for leaf in leaf_paths(dtype):
        lv = shred_leaf(a, leaf)
        try:
            codec = resolve_codec(request, lv.leaf_values, MINIBLOCK)
        except Exception:
            assert request == "bitpack"
            continue
        page, index, ctx = page_for(lv, codec, int(rng.choice([256, 4096, 8192])))
        assert all(len(parse_chunk_body(page.bodies[o : o + 8 * (int(w) & 0xFFF)])) == ctx.buffer_count
                   for o, w in zip(index.body_offsets()[:-1], page.words))
        back = decode_page(page.to_bytes(), index, len(page.meta_bytes()), ctx)
        assert back.rep.tolist() == lv.rep.tolist() and back.def_.tolist() == lv.def_.tolist()
        assert array_equal(back.leaf_values, lv.leaf_values)
