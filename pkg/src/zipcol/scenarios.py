"""Seeded synthetic columns for the eight benchmark data types.

Only the top-level value carries nulls (10% by default). Sizes are chosen
so the average non-null value lands near the nominal width of each type.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from zipcol.arrays import (
    DataType,
    LogicalArray,
    binary,
    binary_array,
    fixed_size_list,
    fixed_size_list_array,
    float32,
    list_,
    list_array,
    primitive_array,
    uint64,
    utf8,
)

VECTOR_DIM = 768
LIST_ITEMS = 5  # mean items per list
STRING_BYTES = 16
IMAGE_BYTES = 20 * 1024


@dataclass(frozen=True)
class Scenario:
    name: str
    dtype: DataType
    nominal_bytes: int
    default_rows: int


SCENARIOS: dict[str, Scenario] = {
    s.name: s
    for s in [
        Scenario("scalar", uint64(), 8, 1_000_000),
        Scenario("string", utf8(), 16, 1_000_000),
        Scenario("scalar-list", list_(uint64(False)), 40, 1_000_000),
        Scenario("string-list", list_(utf8(False)), 80, 1_000_000),
        Scenario("vector", fixed_size_list(float32(False), VECTOR_DIM), 3 * 1024, 10_000),
        Scenario("vector-list", list_(fixed_size_list(float32(False), VECTOR_DIM, False)), 15 * 1024, 10_000),
        Scenario("image", binary(), 20 * 1024, 10_000),
        Scenario("image-list", list_(binary(False)), 100 * 1024, 1_000),
    ]
}


def _validity(rng: np.random.Generator, n: int, null_fraction: float) -> np.ndarray | None:
    if null_fraction <= 0:
        return None
    return rng.random(n) >= null_fraction


def _lengths(rng: np.random.Generator, n: int, mean: int, valid: np.ndarray | None) -> np.ndarray:
    """Uniform lengths in [0, 2 * mean], zero for null slots."""
    lens = rng.integers(0, 2 * mean + 1, size=n, dtype=np.int64)
    if valid is not None:
        lens[~valid] = 0
    return lens


def _offsets(lens: np.ndarray) -> np.ndarray:
    out = np.zeros(len(lens) + 1, dtype=np.uint64)
    np.cumsum(lens, out=out[1:])
    return out


def _strings(rng: np.random.Generator, n: int, mean: int, valid=None, dtype: DataType = utf8(False)) -> LogicalArray:
    lens = _lengths(rng, n, mean, valid)
    data = rng.integers(ord("a"), ord("z") + 1, size=int(lens.sum()), dtype=np.uint8)
    return binary_array(dtype, _offsets(lens), data, valid)


def _blobs(rng: np.random.Generator, n: int, mean: int, valid=None, dtype: DataType = binary(False)) -> LogicalArray:
    lens = rng.integers(mean // 2, mean * 3 // 2 + 1, size=n, dtype=np.int64)
    if valid is not None:
        lens[~valid] = 0
    data = rng.integers(0, 256, size=int(lens.sum()), dtype=np.uint8)
    return binary_array(dtype, _offsets(lens), data, valid)


def _vectors(rng: np.random.Generator, n: int, valid=None, dtype: DataType = fixed_size_list(float32(False), VECTOR_DIM, False)) -> LogicalArray:
    child = primitive_array(float32(False), rng.standard_normal(n * VECTOR_DIM, dtype=np.float32))
    return fixed_size_list_array(dtype, child, valid)


def generate(name: str, rows: int | None = None, null_fraction: float = 0.10, seed: int = 0) -> LogicalArray:
    """Column of ``rows`` values for scenario ``name``."""
    scenario = SCENARIOS[name]
    n = scenario.default_rows if rows is None else rows
    rng = np.random.default_rng(seed)
    valid = _validity(rng, n, null_fraction)
    if name == "scalar":
        return primitive_array(scenario.dtype, rng.integers(0, 2**63, size=n, dtype=np.uint64), valid)
    if name == "string":
        return _strings(rng, n, STRING_BYTES, valid, scenario.dtype)
    if name == "vector":
        return _vectors(rng, n, valid, scenario.dtype)
    if name == "image":
        return _blobs(rng, n, IMAGE_BYTES, valid, scenario.dtype)
    lens = _lengths(rng, n, LIST_ITEMS, valid)
    m = int(lens.sum())
    if name == "scalar-list":
        child = primitive_array(uint64(False), rng.integers(0, 2**63, size=m, dtype=np.uint64))
    elif name == "string-list":
        child = _strings(rng, m, STRING_BYTES)
    elif name == "vector-list":
        child = _vectors(rng, m)
    else:
        child = _blobs(rng, m, IMAGE_BYTES)
    return list_array(scenario.dtype, _offsets(lens), child, valid)
