import contextlib

import pytest
import requests

from semproxy import mock_backend as mb
from semproxy import proxy as px
from semproxy.config import ProxyConfig
from semproxy.mock_backend import MockBackendConfig


@contextlib.contextmanager
def running_backend(config: MockBackendConfig = None):
    backend = mb.serve(("127.0.0.1", 0), config or MockBackendConfig())
    try:
        yield backend
    finally:
        backend.stop()


@contextlib.contextmanager
def running_proxy(backend, config: ProxyConfig = None):
    cfg = config or ProxyConfig()
    cfg.backend_url = f"http://127.0.0.1:{backend.address[1]}/"
    proxy = px.serve(("127.0.0.1", 0), cfg)
    try:
        yield proxy
    finally:
        proxy.stop()


def url_of(server) -> str:
    return f"http://127.0.0.1:{server.address[1]}/"


def backend_calls(backend) -> int:
    resp = requests.get(url_of(backend) + "_mock/stats", timeout=10)
    return resp.json()["search_calls"]


def reset_backend(backend) -> None:
    requests.post(url_of(backend) + "_mock/reset", timeout=10)


def proxy_health(proxy) -> dict:
    return requests.get(url_of(proxy) + "_sem/health", timeout=10).json()


def assert_exactly_once(proxy):
    """Delivery-ledger audit: one response per admitted request."""
    health = proxy_health(proxy)
    assert health["duplicate_deliveries"] == 0
    assert (health["delivered"] + health["dropped_disconnects"]
            == health["admitted"])


@pytest.fixture
def fast_backend():
    with running_backend(MockBackendConfig(
            compute_delay_ms=0.2, rows_per_response=5,
            per_row_serialize_cost_us=10)) as backend:
        yield backend
