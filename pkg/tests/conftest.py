import numpy as np
import pytest
from hypothesis import settings
from hypothesis import strategies as st

from rankmedian.consensus import PairwiseMatrix
from rankmedian.perm import Permutation, pair_index_arrays

settings.register_profile("default", max_examples=60, deadline=None)
settings.load_profile("default")


def random_strict_sst(n, rng):
    """Pairwise matrix consistent with a hidden random order; no entry equals 1/2."""
    order = rng.permutation(n)
    pos = np.empty(n, dtype=int)
    pos[order] = np.arange(n)
    I, J = pair_index_arrays(n)
    strength = rng.uniform(0.5, 1.0, size=I.size)
    strength = np.where(strength == 0.5, 0.75, strength)
    p = np.where(pos[I] < pos[J], strength, 1.0 - strength)
    return PairwiseMatrix(n, p)


def random_sst(n, rng):
    """Possibly tied SST matrix: items fall into ordered blocks, ties inside a block."""
    blocks = rng.integers(0, max(1, n - 1), size=n)
    I, J = pair_index_arrays(n)
    strength = rng.uniform(0.5, 1.0, size=I.size)
    bi, bj = blocks[I], blocks[J]
    p = np.where(bi < bj, strength, np.where(bi > bj, 1.0 - strength, 0.5))
    return PairwiseMatrix(n, p)


@st.composite
def permutations(draw, n=None, min_n=2, max_n=8):
    if n is None:
        n = draw(st.integers(min_n, max_n))
    ordering = draw(st.permutations(range(1, n + 1)))
    return Permutation.from_ordering(ordering)


@st.composite
def rank_samples(draw, min_n=2, max_n=6, max_size=12):
    n = draw(st.integers(min_n, max_n))
    size = draw(st.integers(1, max_size))
    rows = [draw(permutations(n=n)).ranks for _ in range(size)]
    return np.array(rows, dtype=np.int64)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
