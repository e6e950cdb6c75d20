"""Hypothesis strategies for states and unitaries, driven by a drawn seed."""

import numpy as np
from hypothesis import strategies as st

from nobroadcast import quantum_state as qs

seeds = st.integers(min_value=0, max_value=2**32 - 1)
dims = st.integers(min_value=2, max_value=4)


@st.composite
def density_pairs(draw, dim=None, rank=None):
    d = draw(dims) if dim is None else dim
    rng = np.random.default_rng(draw(seeds))
    return qs.random_density(d, rng, rank), qs.random_density(d, rng, rank)


@st.composite
def unitaries(draw, dim):
    return qs.random_unitary(dim, np.random.default_rng(draw(seeds)))
