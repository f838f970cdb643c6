"""The coalescing reverse proxy.

Five cooperating stages: connection handlers admit parsed requests into the
window collector; a timer flushes window batches; a single dedup stage
partitions each batch (or, in passthrough mode, just measures it); a bounded
pool forwards representatives to the backend; fan-out copies each
representative's response bytes to its whole duplicate group. Every admitted
request receives exactly one response.
"""

from __future__ import annotations

import json
import threading
import time
from collections import Counter, deque
from concurrent.futures import ThreadPoolExecutor
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from itertools import count
from typing import Optional

import requests
from requests.adapters import HTTPAdapter

from . import soap
from .config import ProxyConfig
from .dedup import DedupConfig, DedupResult, Deduplicator
from .gate import AdaptiveGate, GateConfig, GateMode, GateObservation
from .metrics import MetricsCollector, export_csv_path
from .windowing import AdmitResult, WindowBatch, WindowCollector, WindowingStage

HEALTH_PATH = "/_sem/health"

_BACKEND_DOWN_FAULT = soap.build_fault("Server.Unavailable", "backend unreachable")


class PendingRequest:
    """Reply slot for one in-flight client connection."""

    __slots__ = ("request_id", "arrival_ns", "event", "status", "body")

    def __init__(self, request_id: int, arrival_ns: int):
        self.request_id = request_id
        self.arrival_ns = arrival_ns
        self.event = threading.Event()
        self.status = 504
        self.body = _BACKEND_DOWN_FAULT


class SemProxy:
    def __init__(self, listen_addr: tuple[str, int], config: ProxyConfig = None):
        self.config = config or ProxyConfig()
        cfg = self.config
        self.metrics = MetricsCollector()
        self.collector = WindowCollector(
            window_ns=int(cfg.window_ms * 1e6),
            max_batch_size=cfg.max_batch_size,
            queue_depth=cfg.queue_depth,
        )
        self.window_stage = WindowingStage(self.collector)
        self.deduper = Deduplicator(
            DedupConfig(
                cache_enabled=cfg.cache_enabled,
                cache_ttl_ms=cfg.cache_ttl_ms,
                cache_capacity=cfg.cache_capacity,
                min_group_size=cfg.min_group_size,
                compress_threshold_nodes=cfg.compress_threshold_nodes,
            ),
            denylist=cfg.operation_denylist,
        )
        self.gate = AdaptiveGate(GateConfig(
            enter_threshold=cfg.gate_enter,
            exit_threshold=cfg.gate_exit,
            alpha=cfg.gate_alpha,
            window=cfg.gate_window,
            overhead_budget_pct=cfg.overhead_budget_pct,
        ))
        self._ids = count(1)
        self._registry: dict[int, PendingRequest] = {}
        self._registry_lock = threading.Lock()
        self._delivered_ids: set[int] = set()
        self._session = requests.Session()
        adapter = HTTPAdapter(pool_connections=4, pool_maxsize=cfg.max_connections)
        self._session.mount("http://", adapter)
        self._forward_pool = ThreadPoolExecutor(
            max_workers=cfg.max_connections, thread_name_prefix="sem-forward")
        self._batch_pool = ThreadPoolExecutor(
            max_workers=cfg.batch_workers, thread_name_prefix="sem-batch")
        self._dedup_thread = threading.Thread(
            target=self._dedup_loop, daemon=True, name="sem-dedup")
        self._stopping = False
        self.snapshots = deque(maxlen=7200)
        self._reporter_stop = threading.Event()
        self._reporter = threading.Thread(
            target=self._reporter_loop, daemon=True, name="sem-reporter")

        proxy = self

        class Handler(BaseHTTPRequestHandler):
            protocol_version = "HTTP/1.1"

            def setup(self):
                super().setup()
                proxy.metrics.record_connection_attempt()

            def log_message(self, fmt, *args):
                pass

            def do_GET(self):
                if self.path == HEALTH_PATH:
                    payload = json.dumps(proxy.health()).encode()
                    self.send_response(200)
                    self.send_header("Content-Type", "application/json")
                    self.send_header("Content-Length", str(len(payload)))
                    self.end_headers()
                    self.wfile.write(payload)
                else:
                    self.send_error(404)

            def do_POST(self):
                proxy._handle_post(self)

        class Server(ThreadingHTTPServer):
            request_queue_size = 1024
            daemon_threads = True

        self._server = Server(listen_addr, Handler)
        self._server_thread = threading.Thread(
            target=self._server.serve_forever, daemon=True, name="sem-accept")

    # ------------------------------------------------------------------ serve

    @property
    def address(self) -> tuple[str, int]:
        return self._server.server_address[:2]

    def start(self) -> None:
        self.window_stage.start()
        self._dedup_thread.start()
        self._reporter.start()
        self._server_thread.start()

    def stop(self, metrics_csv: Optional[str] = None) -> None:
        """Graceful shutdown: stop accepting, drain in-flight batches."""
        self._server.shutdown()
        self._server.server_close()
        self.window_stage.stop()
        self._stopping = True
        self.collector.out_queue.put(None)
        self._dedup_thread.join(timeout=30)
        self._batch_pool.shutdown(wait=True)
        self._forward_pool.shutdown(wait=True)
        self._reporter_stop.set()
        self._reporter.join(timeout=5)
        self._session.close()
        if metrics_csv:
            export_csv_path(list(self.snapshots), metrics_csv)

    def health(self) -> dict:
        data = self.metrics.counters()
        data["cache_entries"] = (
            len(self.deduper.cache) if self.deduper.cache is not None else 0)
        data["flushed_batches"] = self.collector.flushed_batches
        return data

    # -------------------------------------------------------------- ingestion

    def _handle_post(self, handler: BaseHTTPRequestHandler) -> None:
        arrival = time.monotonic_ns()
        try:
            length = int(handler.headers.get("Content-Length", 0))
            raw = handler.rfile.read(length)
        except (ValueError, OSError):
            self._respond(handler, 400, soap.build_fault("Client", "bad request"))
            return
        self.metrics.record_request(len(raw))
        rid = next(self._ids)
        try:
            req = soap.parse_request(
                raw, dict(handler.headers), request_id=rid, arrival_time=arrival)
        except soap.SoapError as exc:
            self.metrics.faults += 1
            self._respond(
                handler, 400,
                soap.build_fault("Client", f"{type(exc).__name__}: {exc}"),
                arrival)
            return
        pending = PendingRequest(rid, arrival)
        with self._registry_lock:
            self._registry[rid] = pending
        self.metrics.admitted += 1
        if self.collector.admit(req, time.monotonic_ns()) is AdmitResult.OVERFLOWED:
            # bounded queue is full: bypass the optimizer, never drop
            self.metrics.bypassed += 1
            status, body = self._call_backend(req)
            self._deliver(rid, status, body)
        timeout = self.config.request_timeout_s + self.config.window_ms / 250.0 + 2.0
        if not pending.event.wait(timeout):
            with self._registry_lock:
                self._registry.pop(rid, None)
            self.metrics.faults += 1
            self._respond(handler, 504,
                          soap.build_fault("Server.Timeout", "pipeline timeout"),
                          arrival)
            return
        self._respond(handler, pending.status, pending.body, arrival)

    def _respond(self, handler, status: int, body: bytes,
                 arrival: Optional[int] = None) -> None:
        try:
            handler.send_response(status)
            handler.send_header("Content-Type", "text/xml; charset=utf-8")
            handler.send_header("Content-Length", str(len(body)))
            handler.end_headers()
            handler.wfile.write(body)
        except OSError:
            self.metrics.dropped_disconnects += 1
            return
        if arrival is not None:
            self.metrics.record_response(len(body), time.monotonic_ns() - arrival)

    # ----------------------------------------------------------- dedup stage

    def _dedup_loop(self) -> None:
        while True:
            batch = self.collector.out_queue.get()
            if batch is None:
                if self._stopping and self.collector.out_queue.empty():
                    return
                continue
            try:
                self._process_batch(batch)
            except Exception:  # stage must survive; affected clients time out
                import traceback
                traceback.print_exc()

    def _current_mode(self) -> GateMode:
        forced = self.config.force_mode
        if forced:
            return GateMode.SEM if forced == "sem" else GateMode.PASSTHROUGH
        if self.gate._observations == 0:
            return self.gate.mode
        return self.gate.decide().mode

    def _process_batch(self, batch: WindowBatch) -> None:
        pull = time.monotonic_ns()
        for req in batch.requests:
            self.metrics.record_window_wait(pull - req.arrival_time)
        mode = self._current_mode()
        self.metrics.set_gate_mode(mode.value)
        t0 = time.monotonic_ns()
        if mode is GateMode.SEM:
            result = self.deduper.dedup(batch)
        else:
            result = self._measure_only(batch)
        analysis_ns = time.monotonic_ns() - t0
        self.gate.observe(GateObservation(
            batch_id=batch.batch_id,
            duplicate_ratio=result.duplicate_ratio,
            analysis_cost_ns=analysis_ns,
            batch_size=len(batch.requests),
        ))
        self.metrics.record_batch(result.duplicate_ratio)
        if self.deduper.cache is not None:
            self.metrics.record_cache(
                hits=len(result.cache_hits),
                misses=len(batch.requests) - len(result.cache_hits))
        self._batch_pool.submit(self._forward_and_fan_out, result, mode)

    def _measure_only(self, batch: WindowBatch) -> DedupResult:
        """Passthrough mode: still measure the duplicate ratio (the gate
        needs it to re-enter coalescing) but forward every request as-is."""
        seqs = Counter()
        sequences = {}
        for req in batch.requests:
            try:
                seq = soap.build_parameter_sequence(req)
            except soap.SeparatorInValue:
                seq = None
            sequences[req.request_id] = seq
            if seq is not None:
                seqs[seq] += 1
        size = len(batch.requests)
        distinct = len(seqs) + sum(1 for s in sequences.values() if s is None)
        return DedupResult(
            batch_id=batch.batch_id,
            representatives=list(batch.requests),
            groups={r.request_id: [] for r in batch.requests},
            duplicate_ratio=(size - distinct) / size if size else 0.0,
            cache_hits=[],
            sequences=sequences,
        )

    # ------------------------------------------------------ forward + fan-out

    def _call_backend(self, req: soap.SoapRequest) -> tuple[int, bytes]:
        self.metrics.record_backend_call()
        headers = {
            "Content-Type": "text/xml; charset=utf-8",
            "SOAPAction": f'"{req.operation}"',
        }
        t0 = time.monotonic_ns()
        try:
            resp = self._session.post(
                self.config.backend_url,
                data=req.raw_envelope,
                headers=headers,
                timeout=(self.config.connect_timeout_s, self.config.request_timeout_s),
            )
        except requests.RequestException as exc:
            return 502, soap.build_fault(
                "Server.Unavailable", f"backend error: {type(exc).__name__}")
        self.gate.note_service_time(time.monotonic_ns() - t0)
        return resp.status_code, resp.content

    def _forward_and_fan_out(self, result: DedupResult, mode: GateMode) -> None:
        reps = result.representatives
        responses = dict(zip(
            (r.request_id for r in reps),
            self._forward_pool.map(self._call_backend, reps),
        ))
        if mode is GateMode.SEM and self.deduper.cache is not None:
            self.deduper.cache_store(
                result, {rid: body for rid, (status, body) in responses.items()
                         if status == 200})
        for rep in reps:
            status, body = responses[rep.request_id]
            self._deliver(rep.request_id, status, body)
            for dup_id in result.groups.get(rep.request_id, ()):
                self._deliver(dup_id, status, body)
        for rid, cached in result.cache_hits:
            self._deliver(rid, 200, cached)

    def _deliver(self, request_id: int, status: int, body: bytes) -> None:
        with self._registry_lock:
            pending = self._registry.pop(request_id, None)
            if pending is None:
                if request_id in self._delivered_ids:
                    self.metrics.duplicate_deliveries += 1
                else:
                    self.metrics.dropped_disconnects += 1
                return
            self._delivered_ids.add(request_id)
        pending.status = status
        pending.body = body
        pending.event.set()
        self.metrics.delivered += 1

    # --------------------------------------------------------------- reporter

    def _reporter_loop(self) -> None:
        while not self._reporter_stop.wait(self.config.metrics_interval_s):
            self.snapshots.append(self.metrics.snapshot())


def serve(listen_addr: tuple[str, int], config: ProxyConfig) -> SemProxy:
    """Start a proxy and return the running instance."""
    proxy = SemProxy(listen_addr, config)
    proxy.start()
    return proxy
