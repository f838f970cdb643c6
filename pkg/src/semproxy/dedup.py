"""Batch deduplication and the persistent hot-response cache.

Each window batch gets a fresh trie; one representative per distinct
parameter sequence goes to the backend, every other member of the group
receives a copy of the representative's response. The hottest sequence of
each batch may additionally be kept in a persistent trie-backed response
cache so later windows can skip the backend entirely.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field
from typing import Callable, Optional

from .soap import SeparatorInValue, SoapRequest, build_parameter_sequence
from .trie import Trie
from .windowing import WindowBatch


@dataclass
class DedupResult:
    batch_id: int
    representatives: list[SoapRequest]
    groups: dict[int, list[int]]  # representative_id -> duplicate request_ids
    duplicate_ratio: float
    cache_hits: list[tuple[int, bytes]]  # (request_id, cached response bytes)
    sequences: dict[int, Optional[bytes]] = field(default_factory=dict)


@dataclass
class ResponseCacheEntry:
    sequence: bytes
    response_bytes: bytes
    hit_count: int
    stored_at: int  # monotonic ns
    last_hit: int
    ttl_ns: int


class ResponseCache:
    """Trie-keyed cache of serialized responses for hot parameter sequences.

    Entries expire after a TTL; when full, the least-recently-hit entry is
    evicted. Writes come from the dedup stage, reads from fan-out; a single
    lock serializes access.
    """

    def __init__(self, capacity: int = 1024, ttl_ns: int = 100_000_000,
                 compress_threshold_nodes: int = 100_000):
        self.capacity = capacity
        self.ttl_ns = ttl_ns
        self.compress_threshold_nodes = compress_threshold_nodes
        self._trie = Trie()
        self._entries: dict[int, ResponseCacheEntry] = {}
        self._lock = threading.Lock()
        self.hits = 0
        self.misses = 0
        self.compressed_node_count: Optional[int] = None

    def __len__(self) -> int:
        return len(self._entries)

    def store(self, seq: bytes, response: bytes, now: int) -> None:
        with self._lock:
            outcome = self._trie.insert(seq)
            existing = self._entries.get(outcome.group)
            if existing is not None:
                existing.response_bytes = response
                existing.stored_at = now
                return
            if len(self._entries) >= self.capacity:
                self._evict_coldest_locked()
            self._entries[outcome.group] = ResponseCacheEntry(
                sequence=seq, response_bytes=response,
                hit_count=0, stored_at=now, last_hit=now, ttl_ns=self.ttl_ns,
            )
            self._maybe_compact_locked(now)

    def lookup(self, seq: bytes, now: int) -> Optional[bytes]:
        with self._lock:
            group = self._trie.find(seq)
            entry = self._entries.get(group) if group is not None else None
            if entry is None or now >= entry.stored_at + entry.ttl_ns:
                self.misses += 1
                return None
            entry.hit_count += 1
            entry.last_hit = now
            self.hits += 1
            return entry.response_bytes

    def evict_expired(self, now: int) -> int:
        with self._lock:
            dead = [g for g, e in self._entries.items()
                    if now >= e.stored_at + e.ttl_ns]
            for g in dead:
                del self._entries[g]
            return len(dead)

    def hit_count(self, seq: bytes) -> int:
        with self._lock:
            group = self._trie.find(seq)
            entry = self._entries.get(group) if group is not None else None
            return entry.hit_count if entry else 0

    def _evict_coldest_locked(self) -> None:
        coldest = min(self._entries, key=lambda g: self._entries[g].last_hit)
        del self._entries[coldest]

    def _maybe_compact_locked(self, now: int) -> None:
        # The trie never deletes keys, so evicted/expired sequences leave
        # dead nodes behind; rebuild from live entries and record the
        # suffix-merged size once it grows past the threshold.
        if self._trie.node_count <= self.compress_threshold_nodes:
            return
        fresh = Trie()
        live = {}
        for entry in self._entries.values():
            if now < entry.stored_at + entry.ttl_ns:
                outcome = fresh.insert(entry.sequence)
                live[outcome.group] = entry
        self._trie = fresh
        self._entries = live
        self.compressed_node_count = fresh.compress().node_count


@dataclass
class DedupConfig:
    cache_enabled: bool = False
    cache_ttl_ms: float = 100.0
    cache_capacity: int = 1024
    min_group_size: int = 2
    compress_threshold_nodes: int = 100_000


class Deduplicator:
    """Partitions window batches into representatives and duplicate groups."""

    def __init__(self, config: DedupConfig = DedupConfig(),
                 clock: Callable[[], int] = None, denylist=()):
        import time
        self.config = config
        self.clock = clock or time.monotonic_ns
        self.denylist = frozenset(denylist)
        self.cache = ResponseCache(
            capacity=config.cache_capacity,
            ttl_ns=int(config.cache_ttl_ms * 1e6),
            compress_threshold_nodes=config.compress_threshold_nodes,
        ) if config.cache_enabled else None

    def dedup(self, batch: WindowBatch) -> DedupResult:
        """One fresh trie per batch; representative = earliest arrival."""
        trie = Trie()
        representatives: list[SoapRequest] = []
        groups: dict[int, list[int]] = {}
        cache_hits: list[tuple[int, bytes]] = []
        sequences: dict[int, Optional[bytes]] = {}
        rep_by_group: dict[int, int] = {}
        now = self.clock()
        for req in batch.requests:
            seq = None
            if req.operation not in self.denylist:
                try:
                    seq = build_parameter_sequence(req)
                except SeparatorInValue:
                    seq = None
            if seq is None:
                # non-coalescable: always its own representative
                sequences[req.request_id] = None
                representatives.append(req)
                groups[req.request_id] = []
                continue
            sequences[req.request_id] = seq
            if self.cache is not None:
                cached = self.cache.lookup(seq, now)
                if cached is not None:
                    cache_hits.append((req.request_id, cached))
                    continue
            outcome = trie.insert(seq)
            if outcome.created:
                representatives.append(req)
                groups[req.request_id] = []
                rep_by_group[outcome.group] = req.request_id
            else:
                groups[rep_by_group[outcome.group]].append(req.request_id)
        size = len(batch.requests)
        ratio = (size - len(representatives) - len(cache_hits)) / size if size else 0.0
        return DedupResult(
            batch_id=batch.batch_id,
            representatives=representatives,
            groups=groups,
            duplicate_ratio=ratio,
            cache_hits=cache_hits,
            sequences=sequences,
        )

    def cache_store(self, result: DedupResult, responses: dict[int, bytes]) -> None:
        """Cache the response of this batch's largest duplicate group.

        Ties go to the earliest representative; singleton groups below
        min_group_size are never cached.
        """
        if self.cache is None:
            return
        best_id = None
        best_size = 0
        for rep in result.representatives:
            if result.sequences.get(rep.request_id) is None:
                continue
            group_size = 1 + len(result.groups.get(rep.request_id, ()))
            if group_size > best_size:
                best_size = group_size
                best_id = rep.request_id
        if best_id is None or best_size < self.config.min_group_size:
            return
        response = responses.get(best_id)
        if response is None:
            return
        self.cache.store(result.sequences[best_id], response, self.clock())
