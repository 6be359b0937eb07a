"""Hypothesis strategies shared by the test modules."""

import numpy as np
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

finite = st.floats(-5, 5, allow_nan=False, allow_infinity=False)


@st.composite
def states(draw, n=None, min_n=2, max_n=6):
    n = draw(st.integers(min_n, max_n)) if n is None else n
    w = draw(arrays(float, n, elements=st.floats(0, 1)))
    if w.sum() <= 1e-6:
        w = np.ones(n)
    return w / w.sum()


@st.composite
def state_payoff(draw, min_n=2, max_n=6):
    n = draw(st.integers(min_n, max_n))
    x = draw(states(n=n))
    p = draw(arrays(float, n, elements=finite))
    return x, p
