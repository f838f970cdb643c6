"""SOAP 1.1 envelope parsing, parameter-sequence building, and response serialization.

All functions here are pure and safe to call concurrently. Only SOAP 1.1
(text/xml + SOAPAction) is handled; parameters must be leaf text elements.
"""

from __future__ import annotations

import xml.etree.ElementTree as ET
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence
from xml.sax.saxutils import escape

SOAP_ENV_NS = "http://schemas.xmlsoap.org/soap/envelope/"

# Out-of-band separator between sequence components. Forbidden inside
# parameter values so distinct parameter lists can never collide.
SEQ_SEPARATOR = 0x1F


class SoapError(Exception):
    """Base class for codec failures."""


class ParseError(SoapError):
    """Malformed XML or missing Envelope/Body."""


class NonStringParameter(SoapError):
    """A parameter element carries nested elements instead of plain text."""


class SeparatorInValue(SoapError):
    """A parameter value contains the reserved separator byte 0x1F."""


@dataclass(frozen=True)
class SoapRequest:
    """One parsed inbound call."""

    request_id: int
    arrival_time: int  # monotonic ns
    raw_envelope: bytes
    operation: str
    parameters: tuple[str, ...]
    content_length: int


@dataclass(frozen=True)
class ResultSet:
    columns: tuple[str, ...]
    rows: tuple[tuple[str, ...], ...] = field(default_factory=tuple)

    def __post_init__(self):
        for row in self.rows:
            if len(row) != len(self.columns):
                raise ValueError("row width does not match column count")


def _local_name(tag: str) -> str:
    return tag.rsplit("}", 1)[-1]


def _find_child(elem: ET.Element, local: str) -> Optional[ET.Element]:
    for child in elem:
        if _local_name(child.tag) == local:
            return child
    return None


def parse_envelope(raw: bytes) -> tuple[str, tuple[str, ...]]:
    """Extract (operation, parameters) from a SOAP 1.1 request body.

    The operation is the local name of the first child element of the Body;
    parameters are the text contents of that element's children, in document
    order.
    """
    try:
        root = ET.fromstring(raw)
    except (ET.ParseError, ValueError) as exc:
        raise ParseError(f"invalid XML: {exc}") from exc
    if _local_name(root.tag) != "Envelope":
        raise ParseError("document root is not a SOAP Envelope")
    body = _find_child(root, "Body")
    if body is None:
        raise ParseError("missing SOAP Body")
    op_elem = next(iter(body), None)
    if op_elem is None:
        raise ParseError("SOAP Body carries no operation element")
    params = []
    for child in op_elem:
        if len(child) > 0:
            raise NonStringParameter(
                f"parameter <{_local_name(child.tag)}> is not a plain string"
            )
        params.append(child.text or "")
    return _local_name(op_elem.tag), tuple(params)


def parse_request(
    raw: bytes,
    headers: Mapping[str, str],
    *,
    request_id: int = 0,
    arrival_time: int = 0,
) -> SoapRequest:
    """Parse a complete text/xml request body into a SoapRequest."""
    operation, parameters = parse_envelope(raw)
    length = len(raw)
    for name, value in headers.items():
        if name.lower() == "content-length":
            try:
                length = int(value)
            except ValueError:
                pass
            break
    return SoapRequest(
        request_id=request_id,
        arrival_time=arrival_time,
        raw_envelope=raw,
        operation=operation,
        parameters=parameters,
        content_length=length,
    )


_LOWER_ASCII = bytes(
    b + 0x20 if 0x41 <= b <= 0x5A else b for b in range(256)
)


def _lower(component: str) -> bytes:
    data = component.encode("utf-8")
    if SEQ_SEPARATOR in data:
        raise SeparatorInValue(f"value contains reserved byte 0x1F: {component!r}")
    return data.translate(_LOWER_ASCII)


def build_parameter_sequence(req: SoapRequest) -> bytes:
    """Normalized byte key for deduplication.

    Operation name then each parameter, joined by the separator byte, with
    ASCII letters lowercased. Deterministic and injective over parameter
    lists (the separator cannot occur inside values).
    """
    parts = [_lower(req.operation)]
    parts.extend(_lower(p) for p in req.parameters)
    return bytes([SEQ_SEPARATOR]).join(parts)


def build_response(result: ResultSet, operation: str) -> bytes:
    """Serialize a result set into a deterministic SOAP 1.1 response envelope.

    Equal inputs always yield byte-identical output; fan-out identity checks
    rely on this.
    """
    out = [
        '<?xml version="1.0" encoding="utf-8"?>'
        f'<soap:Envelope xmlns:soap="{SOAP_ENV_NS}"><soap:Body>'
        f"<{operation}Response><columns>"
    ]
    for col in result.columns:
        out.append(f"<col>{escape(col)}</col>")
    out.append("</columns>")
    if result.rows:
        out.append("<rows>")
        for row in result.rows:
            out.append("<row>")
            for cell in row:
                out.append(f"<cell>{escape(cell)}</cell>")
            out.append("</row>")
        out.append("</rows>")
    else:
        out.append("<rows/>")
    out.append(f"</{operation}Response></soap:Body></soap:Envelope>")
    return "".join(out).encode("utf-8")


def parse_response(raw: bytes) -> ResultSet:
    """Reparse a response produced by build_response (round-trip checks)."""
    try:
        root = ET.fromstring(raw)
    except (ET.ParseError, ValueError) as exc:
        raise ParseError(f"invalid XML: {exc}") from exc
    body = _find_child(root, "Body")
    if body is None:
        raise ParseError("missing SOAP Body")
    resp = next(iter(body), None)
    if resp is None:
        raise ParseError("empty response body")
    cols_elem = _find_child(resp, "columns")
    rows_elem = _find_child(resp, "rows")
    columns = tuple(c.text or "" for c in cols_elem) if cols_elem is not None else ()
    rows = []
    if rows_elem is not None:
        for row in rows_elem:
            rows.append(tuple(cell.text or "" for cell in row))
    return ResultSet(columns=columns, rows=tuple(rows))


def build_fault(code: str, message: str) -> bytes:
    """Standard SOAP 1.1 Fault envelope."""
    return (
        '<?xml version="1.0" encoding="utf-8"?>'
        f'<soap:Envelope xmlns:soap="{SOAP_ENV_NS}"><soap:Body>'
        f"<soap:Fault><faultcode>soap:{escape(code)}</faultcode>"
        f"<faultstring>{escape(message)}</faultstring>"
        "</soap:Fault></soap:Body></soap:Envelope>"
    ).encode("utf-8")


def build_request_envelope(operation: str, parameters: Sequence[str]) -> bytes:
    """Client-side helper: request envelope for the given call."""
    parts = [
        '<?xml version="1.0" encoding="utf-8"?>'
        f'<soap:Envelope xmlns:soap="{SOAP_ENV_NS}"><soap:Body>'
        f"<{operation}>"
    ]
    for i, value in enumerate(parameters):
        parts.append(f"<p{i}>{escape(value)}</p{i}>")
    parts.append(f"</{operation}></soap:Body></soap:Envelope>")
    return "".join(parts).encode("utf-8")
