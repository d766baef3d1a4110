import sys
from pathlib import Path

import numpy as np
import pytest
from hypothesis import strategies as st

sys.path.insert(0, str(Path(__file__).parent))

from tilerepair.level import Level, TileKind  # noqa: E402
from tilerepair.patterns import builtin_patterns  # noqa: E402
from tilerepair.reach import builtin_template  # noqa: E402


@pytest.fixture(scope="session")
def cave():
    return builtin_template("cave")


@pytest.fixture(scope="session")
def cave_rules():
    return builtin_patterns("cave")


def random_level(rng: np.random.Generator, rows: int, cols: int, density: float = 0.35,
                 domain: str = "cave") -> Level:
    grid = np.where(rng.random((rows, cols)) < density, int(TileKind.SOLID), int(TileKind.EMPTY))
    s, g = rng.choice(rows * cols, size=2, replace=False)
    grid.flat[s], grid.flat[g] = TileKind.START, TileKind.GOAL
    return Level.from_array(grid, domain)


@st.composite
def levels(draw, max_rows=7, max_cols=7, min_rows=2, min_cols=2):
    rows = draw(st.integers(min_rows, max_rows))
    cols = draw(st.integers(min_cols, max_cols))
    n = rows * cols
    kinds = draw(st.lists(st.sampled_from([TileKind.EMPTY, TileKind.SOLID]), min_size=n, max_size=n))
    s = draw(st.integers(0, n - 1))
    g = draw(st.integers(0, n - 2))
    g = g if g < s else g + 1
    kinds[s], kinds[g] = TileKind.START, TileKind.GOAL
    return Level(rows, cols, tuple(kinds), "cave")
