import math

import pytest
from hypothesis import strategies as st

from hydronets.region import Basin, RegionGraph


@pytest.fixture
def fork_graph():
    """b1 and b2 feed b3, which drains into b4."""
    return RegionGraph(
        basins=(
            Basin(id="b1", name="upper left"),
            Basin(id="b2", name="upper right"),
            Basin(id="b3", name="middle"),
            Basin(id="b4", name="drain"),
        ),
        edges=(("b1", "b3"), ("b2", "b3"), ("b3", "b4")),
    )


@pytest.fixture
def chain2():
    return RegionGraph(
        basins=(Basin(id="b1", name="up"), Basin(id="b2", name="down")),
        edges=(("b1", "b2"),),
    )


def make_series_text(g, n, step=3600, value_fn=None):
    """Uniform-grid series file covering every basin of g.

    value_fn(basin_id, t) -> (precip, level); defaults to a non-constant
    deterministic pattern so normalization never hits a constant channel.
    """
    if value_fn is None:
        def value_fn(bid, t):
            k = sum(map(ord, bid))
            return (t % 5) * 0.5 + (k % 3), math.sin(0.1 * t + k) + 0.01 * t
    lines = ["timestamp,basin_id,precip,level"]
    for t in range(n):
        for b in g.basins:
            p, lv = value_fn(b.id, t)
            lines.append(f"{t * step},{b.id},{p!r},{lv!r}")
    return "\n".join(lines) + "\n"


def tree_from_parents(parents):
    """Build a RegionGraph from parents[i] = index of the basin that
    basin i+1 drains into (a random recursive tree, drain = basin 0)."""
    n = len(parents) + 1
    ids = [f"b{i}" for i in range(n)]
    basins = tuple(Basin(id=bid, name=f"basin {i}") for i, bid in enumerate(ids))
    edges = tuple((ids[i + 1], ids[p]) for i, p in enumerate(parents))
    return RegionGraph(basins=basins, edges=edges)


@st.composite
def random_trees(draw, min_basins=1, max_basins=9):
    n = draw(st.integers(min_basins, max_basins))
    parents = [draw(st.integers(0, i)) for i in range(n - 1)]
    return tree_from_parents(parents)
