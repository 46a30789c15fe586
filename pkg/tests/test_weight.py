import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from qew.errors import DomainError
from qew.weight import INF, Weight


@pytest.mark.parametrize("raw", ["inf", "Infinity", " ∞ ", "+inf", math.inf])
def test_parse_infinite(raw):
    w = Weight.parse(raw)
    assert w.is_infinite and w == INF
    assert w.reciprocal == 0.0
    assert str(w) == "inf"


@pytest.mark.parametrize("raw", [0, 0.0, -1, "0", "-2.5", math.nan, "abc", True, None, [2]])
def test_parse_rejects(raw):
    with pytest.raises(DomainError):
        Weight.parse(raw)


def test_zero_weight_message_names_the_range():
    with pytest.raises(DomainError, match=r"\(0, inf\]"):
        Weight(0)


def test_finite_constructor_refuses_infinity():
    with pytest.raises(DomainError):
        Weight.finite(math.inf)
    assert Weight.finite(2).value == 2.0


@given(st.floats(min_value=1e-6, max_value=1e9, allow_nan=False))
def test_reciprocal(m):
    w = Weight.parse(m)
    assert w.is_finite
    assert w.reciprocal == 1.0 / m


def test_numeric_string():
    assert Weight.parse("2.5").value == 2.5
