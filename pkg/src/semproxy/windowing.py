"""Fixed-length time-window batching of inbound requests.

Requests admitted during one window form a batch ("current collection")
that is released downstream when the window closes, or early when the
batch reaches max_batch_size. Windows are aligned to the monotonic clock
at collector start; wall-clock time is never used.
"""

from __future__ import annotations

import queue
import threading
import time
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

from .soap import SoapRequest


class AdmitResult(Enum):
    ACCEPTED = "accepted"
    OVERFLOWED = "overflowed"


@dataclass
class WindowBatch:
    batch_id: int
    window_start: int  # monotonic ns
    window_end: int
    requests: list[SoapRequest] = field(default_factory=list)


class WindowCollector:
    """Collects requests into contiguous window batches.

    Thread-safe: admit may be called from many connection handlers; flush
    runs on a single timer context. Closed batches go to ``out_queue``;
    when it is full, the incoming request overflows so the caller can
    bypass the optimizer instead of dropping.
    """

    def __init__(
        self,
        window_ns: int,
        max_batch_size: int,
        queue_depth: int,
        start_ns: Optional[int] = None,
    ):
        if window_ns <= 0:
            raise ValueError("window must be positive")
        self.window_ns = window_ns
        self.max_batch_size = max_batch_size
        self.out_queue: "queue.Queue[WindowBatch]" = queue.Queue(maxsize=queue_depth)
        self._lock = threading.Lock()
        self._next_batch_id = 0
        self._epoch = start_ns if start_ns is not None else time.monotonic_ns()
        self._win_start = self._epoch
        self._win_end = self._epoch + window_ns
        self._pending: list[SoapRequest] = []
        self.admitted = 0
        self.overflowed = 0
        self.flushed_batches = 0

    def _aligned_end(self, now: int) -> int:
        k = (now - self._epoch) // self.window_ns + 1
        return self._epoch + k * self.window_ns

    def _emit_locked(self, close_at: int, block: bool) -> bool:
        """Close the open window at close_at; returns False if queue full."""
        if self._pending:
            batch = WindowBatch(
                batch_id=self._next_batch_id,
                window_start=self._win_start,
                window_end=close_at,
                requests=self._pending,
            )
            try:
                self.out_queue.put(batch, block=block)
            except queue.Full:
                return False
            self._next_batch_id += 1
            self.flushed_batches += 1
            self._pending = []
        self._win_start = close_at
        self._win_end = self._aligned_end(close_at)
        return True

    def _roll_locked(self, now: int, block: bool) -> bool:
        if now < self._win_end:
            return True
        if self._pending:
            if not self._emit_locked(self._win_end, block):
                return False
        # fast-forward over any empty windows up to the slot containing now
        if now >= self._win_end:
            self._win_end = self._aligned_end(now)
            self._win_start = self._win_end - self.window_ns
        return True

    def admit(self, req: SoapRequest, now: int) -> AdmitResult:
        with self._lock:
            self._roll_locked(now, block=False)
            if len(self._pending) >= self.max_batch_size:
                # forced early flush; new request opens the next window
                if not self._emit_locked(now, block=False):
                    self.overflowed += 1
                    return AdmitResult.OVERFLOWED
            self._pending.append(req)
            self.admitted += 1
            return AdmitResult.ACCEPTED

    def flush(self, now: int) -> None:
        """Timer entry point: close every window that ended at or before now.

        Blocks on a full downstream queue (backpressure on the single timer
        thread only).
        """
        with self._lock:
            self._roll_locked(now, block=True)


class WindowingStage:
    """Drives a WindowCollector with a real-clock timer thread."""

    def __init__(self, collector: WindowCollector):
        self.collector = collector
        self._stop = threading.Event()
        self._thread = threading.Thread(target=self._run, daemon=True, name="sem-window-timer")

    def start(self) -> None:
        self._thread.start()

    def _run(self) -> None:
        # tick faster than the window so a batch never waits long past its
        # boundary; flush is a no-op while the window is still open
        period = self.collector.window_ns / 4e9
        while not self._stop.wait(period):
            self.collector.flush(time.monotonic_ns())

    def stop(self) -> None:
        self._stop.set()
        self._thread.join(timeout=5)
        # drain whatever is still pending
        self.collector.flush(time.monotonic_ns() + self.collector.window_ns)
