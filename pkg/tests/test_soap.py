import xml.dom.minidom

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from semproxy import soap


def make_req(operation, params, rid=1):
    raw = soap.build_request_envelope(operation, params)
    return soap.parse_request(raw, {}, request_id=rid)


def minidom_extract(raw):
    """Independent oracle: walk the body with a generic DOM tree."""
    doc = xml.dom.minidom.parseString(raw)
    body = next(
        n for n in doc.documentElement.childNodes
        if n.nodeType == n.ELEMENT_NODE and n.localName == "Body")
    op = next(n for n in body.childNodes if n.nodeType == n.ELEMENT_NODE)
    params = []
    for child in op.childNodes:
        if child.nodeType != child.ELEMENT_NODE:
            continue
        text = "".join(
            t.data for t in child.childNodes if t.nodeType == t.TEXT_NODE)
        params.append(text)
    return op.localName, params


class TestParseRequest:
    def test_search_two_params(self):
        raw = (
            b'<Envelope xmlns="http://schemas.xmlsoap.org/soap/envelope/">'
            b"<Body><Search><q>dog</q><lang>en</lang></Search></Body></Envelope>"
        )
        req = soap.parse_request(raw, {})
        assert req.operation == "Search"
        assert req.parameters == ("dog", "en")
        assert (req.operation, list(req.parameters)) == minidom_extract(raw)

    def test_ping_no_params(self):
        raw = b"<Envelope><Body><Ping/></Body></Envelope>"
        req = soap.parse_request(raw, {})
        assert req.operation == "Ping"
        assert req.parameters == ()

    def test_unclosed_envelope_is_parse_error(self):
        with pytest.raises(soap.ParseError):
            soap.parse_request(b"<Envelope><Body>", {})

    def test_missing_body(self):
        with pytest.raises(soap.ParseError):
            soap.parse_request(b"<Envelope><Header/></Envelope>", {})

    def test_non_envelope_root(self):
        with pytest.raises(soap.ParseError):
            soap.parse_request(b"<Foo><Body><Op/></Body></Foo>", {})

    def test_nested_parameter_rejected(self):
        raw = (b"<Envelope><Body><Op><p><nested>x</nested></p></Op>"
               b"</Body></Envelope>")
        with pytest.raises(soap.NonStringParameter):
            soap.parse_request(raw, {})

    def test_content_length_header_wins(self):
        raw = soap.build_request_envelope("Ping", [])
        req = soap.parse_request(raw, {"Content-Length": "999"})
        assert req.content_length == 999

    def test_raw_envelope_reparses_identically(self):
        req = make_req("Search", ["a", "b", "c"])
        again = soap.parse_request(req.raw_envelope, {})
        assert (again.operation, again.parameters) == (req.operation, req.parameters)

    @given(st.binary(max_size=300))
    @settings(max_examples=300)
    def test_never_panics_on_garbage(self, raw):
        try:
            soap.parse_request(raw, {})
        except soap.SoapError:
            pass


safe_text = st.text(
    alphabet=st.characters(
        blacklist_characters="\x1f",
        blacklist_categories=("Cs", "Cc")),
    max_size=20)


class TestParameterSequence:
    def test_lowercases_and_joins(self):
        req = make_req("Search", ["Dog", "EN"])
        assert soap.build_parameter_sequence(req) == b"search\x1fdog\x1fen"

    def test_no_params(self):
        assert soap.build_parameter_sequence(make_req("Ping", [])) == b"ping"

    def test_separator_prevents_ambiguity(self):
        a = soap.build_parameter_sequence(make_req("Op", ["ab", "c"]))
        b = soap.build_parameter_sequence(make_req("Op", ["a", "bc"]))
        assert a != b

    def test_lowercase_is_ascii_only(self):
        req = make_req("Op", ["ÄBÇ"])  # only B is ASCII
        seq = soap.build_parameter_sequence(req)
        assert seq == "op\x1fÄbÇ".encode("utf-8")

    def test_separator_in_value_rejected(self):
        req = soap.SoapRequest(1, 0, b"", "Op", ("a\x1fb",), 0)
        with pytest.raises(soap.SeparatorInValue):
            soap.build_parameter_sequence(req)

    @given(st.lists(safe_text, max_size=6))
    @settings(max_examples=200)
    def test_deterministic(self, params):
        r1 = soap.SoapRequest(1, 0, b"", "Op", tuple(params), 0)
        r2 = soap.SoapRequest(2, 5, b"x", "Op", tuple(params), 1)
        assert soap.build_parameter_sequence(r1) == soap.build_parameter_sequence(r2)

    @given(st.lists(st.lists(safe_text, max_size=4), max_size=12))
    @settings(max_examples=200)
    def test_injective_over_lowercased_lists(self, param_lists):
        seen = {}
        for params in param_lists:
            req = soap.SoapRequest(1, 0, b"", "op", tuple(params), 0)
            seq = soap.build_parameter_sequence(req)
            canon = tuple(
                p.encode().translate(soap._LOWER_ASCII) for p in params)
            if canon in seen:
                assert seen[canon] == seq
            else:
                assert seq not in seen.values()
                seen[canon] = seq


rows_strategy = st.integers(min_value=0, max_value=5).flatmap(
    lambda width: st.tuples(
        st.lists(safe_text, min_size=width, max_size=width).map(tuple),
        st.lists(
            st.lists(safe_text, min_size=width, max_size=width).map(tuple),
            max_size=6).map(tuple),
    ))


class TestBuildResponse:
    def test_empty_result_has_empty_rows_container(self):
        out = soap.build_response(soap.ResultSet(columns=("a",)), "Search")
        assert b"<rows/>" in out

    def test_byte_identical_for_equal_inputs(self):
        rs = soap.ResultSet(columns=("a", "b"), rows=((("x", "y")),))
        assert soap.build_response(rs, "Search") == soap.build_response(rs, "Search")

    def test_three_rows_round_trip(self):
        rs = soap.ResultSet(
            columns=("c1",), rows=(("r1",), ("r2",), ("r3",)))
        back = soap.parse_response(soap.build_response(rs, "Search"))
        assert len(back.rows) == 3
        assert back.columns == ("c1",)

    def test_row_width_mismatch_rejected(self):
        with pytest.raises(ValueError):
            soap.ResultSet(columns=("a", "b"), rows=(("only-one",),))

    @given(rows_strategy)
    @settings(max_examples=200)
    def test_round_trip_counts(self, cols_rows):
        columns, rows = cols_rows
        rs = soap.ResultSet(columns=columns, rows=rows)
        back = soap.parse_response(soap.build_response(rs, "Search"))
        assert len(back.columns) == len(columns)
        assert len(back.rows) == len(rows)


def test_fault_is_valid_soap():
    fault = soap.build_fault("Server.Unavailable", "backend <down>")
    assert b"faultcode" in fault
    op, params = soap.parse_envelope(fault)
    assert op == "Fault"
