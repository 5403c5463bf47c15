"""Tests for deterministic 9-decimal JSON emission."""

import json
import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from roadsim.errors import ContractError
from roadsim.jsonfmt import dumps, format_float


class TestFormatFloat:
    def test_fixed_nine_decimals(self):
        assert format_float(1.0) == "1.000000000"
        assert format_float(-2.5) == "-2.500000000"
        assert format_float(1.0 / 3.0) == "0.333333333"

    def test_negative_zero_normalized(self):
        assert format_float(-0.0) == "0.000000000"
        assert format_float(-1e-12) == "0.000000000"

    def test_non_finite_rejected(self):
        for bad in (math.nan, math.inf, -math.inf):
            with pytest.raises(ContractError):
                format_float(bad)

    @given(st.floats(allow_nan=False, allow_infinity=False,
                     min_value=-1e12, max_value=1e12))
    def test_always_parseable_and_stable(self, x):
        text = format_float(x)
        assert len(text.split(".")[1]) == 9
        assert abs(float(text) - x) <= 5e-10 + abs(x) * 1e-15

    def test_deterministic(self):
        assert format_float(0.1 + 0.2) == format_float(0.30000000000000004)


class TestDumps:
    def test_scalars(self):
        assert dumps(None) == "null"
        assert dumps(True) == "true"
        assert dumps(False) == "false"
        assert dumps(42) == "42"
        assert dumps(1.5) == "1.500000000"
        assert dumps("a\"b") == '"a\\"b"'

    def test_nested_structure_bytes(self):
        obj = {"step": 3, "t": 0.30000000000000004,
               "agents": {"ego": {"x": 1.0, "done": False}},
               "events": []}
        assert dumps(obj) == (
            '{"step":3,"t":0.300000000,'
            '"agents":{"ego":{"x":1.000000000,"done":false}},'
            '"events":[]}'
        )

    def test_insertion_order_preserved(self):
        assert dumps({"b": 1, "a": 2}) == '{"b":1,"a":2}'

    def test_tuple_as_array(self):
        assert dumps((1, 2.0)) == "[1,2.000000000]"

    def test_parses_back(self):
        obj = {"xs": [0.1, -0.0, 3], "s": "text", "n": None}
        parsed = json.loads(dumps(obj))
        assert parsed["s"] == "text"
        assert parsed["xs"][0] == 0.1
        assert parsed["xs"][1] == 0.0

    def test_bad_key_and_type_rejected(self):
        with pytest.raises(ContractError):
            dumps({1: "x"})
        with pytest.raises(ContractError):
            dumps({"x": object()})
        with pytest.raises(ContractError):
            dumps({"x": math.inf})
