"""Load generator: concurrent (open-loop schedule) and serial scenarios.

Requests are reproducible: the parameter tuple for index i depends only on
(seed, i). Similarity is modelled as one hot tuple drawn with probability
similarity_pct/100, every other draw being a globally unique cold tuple.
"""

from __future__ import annotations

import csv
import queue
import random
import string
import threading
import time
from dataclasses import dataclass, field
from typing import Optional

import requests

from . import soap

_CHARS = string.ascii_lowercase + string.digits


@dataclass
class ScenarioConfig:
    mode: str = "concurrent"  # "concurrent" | "serial"
    rate: float = 100.0  # requests/sec
    clients: int = 8
    duration_s: float = 5.0
    similarity_pct: float = 50.0
    param_collection: Optional[list[tuple[str, ...]]] = None
    param_length: int = 15
    seed: int = 0
    operation: str = "Search"
    request_timeout_s: float = 60.0

    def __post_init__(self):
        if not 0 <= self.similarity_pct <= 100:
            raise ValueError("similarity_pct must be in [0, 100]")
        if self.rate < 0:
            raise ValueError("rate must be >= 0")
        if self.mode not in ("concurrent", "serial"):
            raise ValueError(f"unknown mode: {self.mode}")


@dataclass
class RunReport:
    sent: int = 0
    succeeded: int = 0
    failed: int = 0
    response_time_mean_ms: float = 0.0
    response_time_p50_ms: float = 0.0
    response_time_p95_ms: float = 0.0
    response_time_max_ms: float = 0.0
    achieved_rps: float = 0.0
    per_second: list[int] = field(default_factory=list)
    latencies_ms: list[float] = field(default_factory=list)
    body_hashes: dict[int, str] = field(default_factory=dict)


def _rand_token(rng: random.Random, length: int) -> str:
    return "".join(rng.choice(_CHARS) for _ in range(length))


def hot_tuple(cfg: ScenarioConfig) -> tuple[str, ...]:
    """The designated hot parameter tuple of the collection."""
    if cfg.param_collection:
        return tuple(cfg.param_collection[0])
    rng = random.Random(f"{cfg.seed}:hot")
    return (_rand_token(rng, cfg.param_length),)


def generate_params(cfg: ScenarioConfig, i: int) -> tuple[str, ...]:
    """Parameter tuple for request index i; deterministic in (seed, i)."""
    rng = random.Random(f"{cfg.seed}:{i}")
    if rng.random() * 100.0 < cfg.similarity_pct:
        return hot_tuple(cfg)
    arity = len(hot_tuple(cfg))
    out = []
    for slot in range(arity):
        # the index prefix guarantees global uniqueness of cold tuples
        prefix = f"u{i}x{slot}x"
        pad = max(cfg.param_length - len(prefix), 0)
        out.append(prefix + _rand_token(rng, pad))
    return tuple(out)


def generate_request(cfg: ScenarioConfig, i: int) -> bytes:
    return soap.build_request_envelope(cfg.operation, generate_params(cfg, i))


def _aggregate(report: RunReport, wall_s: float) -> None:
    lats = sorted(report.latencies_ms)
    if lats:
        report.response_time_mean_ms = sum(lats) / len(lats)
        report.response_time_p50_ms = lats[len(lats) // 2]
        report.response_time_p95_ms = lats[min(int(len(lats) * 0.95), len(lats) - 1)]
        report.response_time_max_ms = lats[-1]
    report.achieved_rps = report.succeeded / wall_s if wall_s > 0 else 0.0


def run_scenario(cfg: ScenarioConfig, target_url: str,
                 collect_hashes: bool = False) -> RunReport:
    total = int(cfg.rate * cfg.duration_s)
    report = RunReport()
    if total == 0:
        return report
    report.per_second = [0] * (int(cfg.duration_s) + 1)
    lock = threading.Lock()
    start = time.monotonic()

    def one_call(session: requests.Session, i: int) -> None:
        body = generate_request(cfg, i)
        t0 = time.monotonic()
        try:
            resp = session.post(
                target_url, data=body,
                headers={"Content-Type": "text/xml; charset=utf-8",
                         "SOAPAction": f'"{cfg.operation}"'},
                timeout=cfg.request_timeout_s)
            ok = resp.status_code == 200
            content = resp.content
        except requests.RequestException:
            ok = False
            content = b""
        t1 = time.monotonic()
        with lock:
            report.sent += 1
            if ok:
                report.succeeded += 1
                report.latencies_ms.append((t1 - t0) * 1000.0)
                sec = int(t1 - start)
                if sec < len(report.per_second):
                    report.per_second[sec] += 1
                if collect_hashes:
                    import hashlib
                    report.body_hashes[i] = hashlib.sha256(content).hexdigest()
            else:
                report.failed += 1

    if cfg.mode == "serial":
        session = requests.Session()
        for i in range(total):
            target_t = start + i / cfg.rate
            delay = target_t - time.monotonic()
            if delay > 0:
                time.sleep(delay)
            one_call(session, i)
        session.close()
    else:
        work: "queue.Queue[int]" = queue.Queue()
        for i in range(total):
            work.put(i)

        def worker():
            session = requests.Session()
            while True:
                try:
                    i = work.get_nowait()
                except queue.Empty:
                    break
                # open-loop schedule: send at its slot, or immediately if late
                target_t = start + i / cfg.rate
                delay = target_t - time.monotonic()
                if delay > 0:
                    time.sleep(delay)
                one_call(session, i)
            session.close()

        threads = [threading.Thread(target=worker, daemon=True)
                   for _ in range(cfg.clients)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
    _aggregate(report, time.monotonic() - start)
    return report


REPORT_CSV_COLUMNS = [
    "sent", "succeeded", "failed", "achieved_rps",
    "response_time_mean_ms", "response_time_p50_ms",
    "response_time_p95_ms", "response_time_max_ms",
]


def write_report_csv(report: RunReport, path: str) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(REPORT_CSV_COLUMNS + ["second", "completed"])
        base = [getattr(report, c) for c in REPORT_CSV_COLUMNS]
        if not report.per_second:
            writer.writerow(base + ["", ""])
        for sec, n in enumerate(report.per_second):
            writer.writerow(base + [sec, n])
