"""Expected number of distinct pages touched by a random sample of rows.

Rows are laid out back to back; row ``i`` belongs to page
``floor(i * bytes_per_row / page_bytes)``. A sample of ``k`` distinct rows
drawn uniformly without replacement misses a page holding ``n`` rows with
probability ``C(N - n, k) / C(N, k)``, so::

    E[distinct] = sum over pages of (1 - C(N - n_p, k) / C(N, k))

Pages hold one of at most three row counts, so the sum collapses to a
handful of terms, each evaluated in log space.
"""

from __future__ import annotations

import math
from collections import Counter

import numpy as np


def page_count(total_rows: int, bytes_per_row: float, page_bytes: int) -> int:
    return math.ceil(total_rows * bytes_per_row / page_bytes)


def _first_row(page: int, bytes_per_row, page_bytes: int) -> int:
    if isinstance(bytes_per_row, int):
        return -(-(page * page_bytes) // bytes_per_row)
    return math.ceil(page * page_bytes / bytes_per_row)


def rows_per_page_histogram(total_rows: int, bytes_per_row, page_bytes: int) -> Counter:
    """``{rows in page: number of such pages}`` under the floor mapping.

    Every page but the last holds ``floor(S / b)`` or ``ceil(S / b)`` rows,
    so only the totals are needed.
    """
    pages = page_count(total_rows, bytes_per_row, page_bytes)
    hist: Counter = Counter()
    last_first = min(_first_row(pages - 1, bytes_per_row, page_bytes), total_rows)
    hist[total_rows - last_first] += 1
    if pages > 1:
        lo = math.floor(page_bytes / bytes_per_row)
        inner_rows = last_first
        extra = inner_rows - lo * (pages - 1)
        if extra:
            hist[lo + 1] += extra
        if pages - 1 - extra:
            hist[lo] += pages - 1 - extra
    hist.pop(0, None)
    return hist


def miss_probability(total_rows: int, rows_in_page: int, k: int) -> float:
    """P(no sampled row lands in a page of ``rows_in_page`` rows)."""
    if rows_in_page + k > total_rows:
        return 0.0
    j = np.arange(k, dtype=np.float64)
    return float(np.exp(np.sum(np.log1p(-rows_in_page / (total_rows - j)))))


def expected_distinct_pages(total_rows: int, bytes_per_row: float, page_bytes: int, sample_k: int) -> float:
    if min(total_rows, bytes_per_row, page_bytes, sample_k) <= 0:
        raise ValueError("all parameters must be positive")
    if page_bytes < bytes_per_row:
        raise ValueError("page must hold at least one row")
    if sample_k > total_rows:
        raise ValueError("sample larger than population")
    hist = rows_per_page_histogram(total_rows, bytes_per_row, page_bytes)
    return sum(cnt * (1.0 - miss_probability(total_rows, n, sample_k)) for n, cnt in hist.items())


def simulate_distinct_pages(total_rows: int, bytes_per_row: float, page_bytes: int, sample_k: int,
                            trials: int = 10, seed: int = 0) -> float:
    """Monte Carlo estimate of :func:`expected_distinct_pages`."""
    rng = np.random.default_rng(seed)
    counts = []
    for _ in range(trials):
        rows = rng.choice(total_rows, sample_k, replace=False)
        pages = np.floor(rows.astype(np.float64) * bytes_per_row / page_bytes).astype(np.int64)
        counts.append(len(np.unique(pages)))
    return float(np.mean(counts))


def coalesce_table(rows_list, sizes, page_bytes: int = 8192, sample_k: int = 100_000,
                   trials: int = 10, seed: int = 0) -> list[dict]:
    out = []
    for size in sizes:
        for n in rows_list:
            k = min(sample_k, n)
            expected = expected_distinct_pages(n, size, page_bytes, k)
            out.append({
                "rows": n,
                "bytes_per_row": size,
                "page_bytes": page_bytes,
                "k": k,
                "pages": page_count(n, size, page_bytes),
                "expected_distinct_pages": round(expected, 3),
                "monte_carlo": simulate_distinct_pages(n, size, page_bytes, k, trials, seed) if trials else None,
                "overlap": round(1.0 - expected / k, 6),
            })
    return out
