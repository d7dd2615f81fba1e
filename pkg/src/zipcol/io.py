"""Storage backends and an accounting read engine.

Every read goes through :meth:`IoEngine.submit`, which sorts the batch,
optionally merges neighbouring requests, executes one storage read per
merged request (one IOP), and returns the slices in request order.
"""

from __future__ import annotations

import os
import threading
from collections import Counter
from dataclasses import dataclass, field
from typing import Protocol, Sequence

SECTOR = 4096

TAG_METADATA = "metadata"
TAG_SEARCH_CACHE = "search-cache"
TAG_REP_INDEX = "rep-index"
TAG_DATA = "data"


@dataclass(frozen=True)
class ReadRequest:
    offset: int
    length: int
    tag: str = TAG_DATA

    @property
    def end(self) -> int:
        return self.offset + self.length


@dataclass(frozen=True)
class CoalescePolicy:
    enabled: bool = True
    max_gap: int = 4096
    max_merged: int = 1 << 20


NO_COALESCE = CoalescePolicy(enabled=False)


@dataclass
class IoStats:
    iops: int = 0
    bytes_read: int = 0
    useful_bytes: int = 0
    requests: int = 0
    coalesced_merges: int = 0
    sectors_touched: int = 0
    batches: int = 0
    by_tag: Counter = field(default_factory=Counter)

    @property
    def read_amplification(self) -> float:
        return self.bytes_read / self.useful_bytes if self.useful_bytes else 1.0

    def copy(self) -> IoStats:
        return IoStats(
            self.iops, self.bytes_read, self.useful_bytes, self.requests,
            self.coalesced_merges, self.sectors_touched, self.batches, Counter(self.by_tag),
        )

    def __sub__(self, other: IoStats) -> IoStats:
        tags = Counter(self.by_tag)
        tags.subtract(other.by_tag)
        return IoStats(
            self.iops - other.iops,
            self.bytes_read - other.bytes_read,
            self.useful_bytes - other.useful_bytes,
            self.requests - other.requests,
            self.coalesced_merges - other.coalesced_merges,
            self.sectors_touched - other.sectors_touched,
            self.batches - other.batches,
            +tags,
        )

    def as_record(self) -> dict:
        rec = {
            "iops": self.iops,
            "bytes_read": self.bytes_read,
            "useful_bytes": self.useful_bytes,
            "requests": self.requests,
            "coalesced_merges": self.coalesced_merges,
            "sectors_touched": self.sectors_touched,
            "batches": self.batches,
            "read_amplification": round(self.read_amplification, 4),
        }
        for tag, n in sorted(self.by_tag.items()):
            rec[f"iops_{tag}"] = n
        return rec


class Storage(Protocol):
    @property
    def size(self) -> int: ...

    def read(self, offset: int, length: int) -> bytes: ...


class InMemoryStorage:
    def __init__(self, data: bytes):
        self._data = bytes(data)

    @property
    def size(self) -> int:
        return len(self._data)

    def read(self, offset: int, length: int) -> bytes:
        return self._data[offset : offset + length]


class FileStorage:
    """Positional reads from a file.

    With ``bypass_cache`` the page cache is dropped for the file on open and
    after every read (``posix_fadvise(DONTNEED)``) where the platform offers
    it; otherwise reads may be served warm from the OS cache.
    """

    def __init__(self, path: str | os.PathLike, bypass_cache: bool = False):
        self.path = os.fspath(path)
        self._fd = os.open(self.path, os.O_RDONLY)
        self._size = os.fstat(self._fd).st_size
        self.bypass_cache = bypass_cache and hasattr(os, "posix_fadvise")
        if self.bypass_cache:
            os.posix_fadvise(self._fd, 0, 0, os.POSIX_FADV_DONTNEED)

    @property
    def size(self) -> int:
        return self._size

    def read(self, offset: int, length: int) -> bytes:
        out = os.pread(self._fd, length, offset)
        if self.bypass_cache:
            os.posix_fadvise(self._fd, offset, length, os.POSIX_FADV_DONTNEED)
        return out

    def close(self) -> None:
        if self._fd >= 0:
            os.close(self._fd)
            self._fd = -1

    def __enter__(self) -> FileStorage:
        return self

    def __exit__(self, *exc) -> None:
        self.close()


def open_backend(kind: str, source) -> Storage:
    """``kind`` is ``"memory"`` (source: bytes or path) or ``"file"`` / ``"file-bypass"`` (source: path)."""
    if kind in ("memory", "in-memory"):
        if isinstance(source, (bytes, bytearray, memoryview)):
            return InMemoryStorage(bytes(source))
        with open(source, "rb") as fh:
            return InMemoryStorage(fh.read())
    if kind == "file":
        return FileStorage(source)
    if kind in ("file-bypass", "file-with-cache-bypass"):
        return FileStorage(source, bypass_cache=True)
    raise ValueError(f"unknown backend {kind!r}")


def _sectors(ranges: list[tuple[int, int]]) -> int:
    total = 0
    last = -1
    for start, end in ranges:
        if end <= start:
            continue
        first, final = start // SECTOR, (end - 1) // SECTOR
        if first <= last:
            first = last + 1
        if final >= first:
            total += final - first + 1
        last = max(last, final)
    return total


def merge_plan(requests: Sequence[ReadRequest], policy: CoalescePolicy) -> list[tuple[int, int, list[int]]]:
    """Group requests into physical reads: ``(offset, end, request ids)``."""
    order = sorted(range(len(requests)), key=lambda i: (requests[i].offset, requests[i].end))
    groups: list[tuple[int, int, list[int]]] = []
    for i in order:
        r = requests[i]
        if groups and policy.enabled:
            start, end, ids = groups[-1]
            new_end = max(end, r.end)
            if r.offset - end <= policy.max_gap and new_end - start <= policy.max_merged:
                groups[-1] = (start, new_end, ids + [i])
                continue
        groups.append((r.offset, r.end, [i]))
    return groups


class IoEngine:
    """Executes read batches against a storage backend and keeps :class:`IoStats`."""

    def __init__(self, storage: Storage, policy: CoalescePolicy | None = None):
        self.storage = storage
        self.policy = policy or CoalescePolicy()
        self._stats = IoStats()
        self._lock = threading.Lock()

    @property
    def stats(self) -> IoStats:
        with self._lock:
            return self._stats.copy()

    def reset_stats(self) -> None:
        with self._lock:
            self._stats = IoStats()

    def submit(self, requests: Sequence[ReadRequest], policy: CoalescePolicy | None = None) -> list[bytes]:
        policy = policy or self.policy
        size = self.storage.size
        for r in requests:
            if r.offset < 0 or r.length < 0 or r.end > size:
                raise IndexError(f"read [{r.offset}, {r.end}) outside storage of {size} bytes")
        groups = merge_plan(requests, policy)
        out: list[bytes] = [b""] * len(requests)
        bytes_read = 0
        tags: Counter = Counter()
        for start, end, ids in groups:
            raw = self.storage.read(start, end - start)
            if len(raw) != end - start:
                raise OSError(f"short read at {start}: wanted {end - start}, got {len(raw)}")
            bytes_read += len(raw)
            tags[requests[ids[0]].tag] += 1
            for i in ids:
                r = requests[i]
                out[i] = raw[r.offset - start : r.end - start]
        useful = _covered(requests)
        with self._lock:
            st = self._stats
            st.iops += len(groups)
            st.bytes_read += bytes_read
            st.useful_bytes += useful
            st.requests += len(requests)
            st.coalesced_merges += len(requests) - len(groups)
            st.sectors_touched += _sectors([(s, e) for s, e, _ in groups])
            st.batches += 1
            st.by_tag.update(tags)
        return out

    def read(self, offset: int, length: int, tag: str = TAG_DATA) -> bytes:
        return self.submit([ReadRequest(offset, length, tag)])[0]


def _covered(requests: Sequence[ReadRequest]) -> int:
    """Distinct bytes asked for by a batch."""
    total = 0
    cur_s = cur_e = None
    for r in sorted(requests, key=lambda r: r.offset):
        if r.length == 0:
            continue
        if cur_e is None or r.offset > cur_e:
            if cur_e is not None:
                total += cur_e - cur_s
            cur_s, cur_e = r.offset, r.end
        else:
            cur_e = max(cur_e, r.end)
    if cur_e is not None:
        total += cur_e - cur_s
    return total
