import numpy as np
import pytest
from hypothesis import given, seed, settings
from hypothesis import strategies as st

from properties import CHECKS, DIMS


@pytest.mark.parametrize("name", list(CHECKS))
@seed(20261019)
@settings(max_examples=100, deadline=None, derandomize=True, database=None)
@given(case=st.integers(0, 2**32 - 1), d=st.sampled_from(DIMS))
def test_property(name, case, d):
    CHECKS[name](np.random.default_rng(case), d)
