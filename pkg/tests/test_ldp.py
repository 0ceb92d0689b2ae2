import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gdp_lab import ldp
from gdp_lab.measures import ContractError


def test_rate_values():
    assert ldp.rate("I", [3.0, 1.0]) == 4.0
    assert math.isinf(ldp.rate("I", [1.0, 3.0]))
    assert ldp.rate("I1", 1.0) == 0.0
    assert ldp.rate("I2", [0.5, 0.25]) == pytest.approx(math.log(4.0))
    assert ldp.rate("I3", [0.5, 0.5]) == 1.0
    assert math.isinf(ldp.rate("I3", [0.5, 0.25]))
    assert ldp.rate("I4", 0.0) == 0.0 and ldp.rate("I4", 2.0) == 1.0
    assert ldp.rate("I5", [2.0, 1.0, 0.0]) == 2.0


def test_domain_mismatch():
    with pytest.raises(ContractError):
        ldp.rate("I1", ldp.RatePoint.sequence([1.0]))
    with pytest.raises(ContractError):
        ldp.rate("I7", 1.0)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(0.0, 20.0, allow_subnormal=False), min_size=1, max_size=12))
def test_contraction_equals_sum(xs):
    x = np.sort(np.array(xs))[::-1]
    res = ldp.contraction_check(x)
    assert res.infimum == pytest.approx(x.sum(), abs=1e-6)
    assert ldp.contraction_I5(x) == ldp.rate("I5", x)


def test_ldp_demo_runs():
    out = ldp.ldp_demo(2.0, 1.0, 5000, 1)
    assert 0 < out["exact"] < 1 and out["rate"] == 1.0
