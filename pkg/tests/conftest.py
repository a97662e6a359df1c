from __future__ import annotations

import itertools

from hypothesis import HealthCheck, settings
from hypothesis import strategies as st

from congestlab.graph import Graph

settings.register_profile(
    "default", deadline=None, max_examples=40, suppress_health_check=[HealthCheck.too_slow], derandomize=True
)
settings.load_profile("default")


@st.composite
def graphs(draw, min_n: int = 1, max_n: int = 12, density: float | None = None) -> Graph:
    n = draw(st.integers(min_n, max_n))
    pairs = list(itertools.combinations(range(1, n + 1), 2))
    if density is None:
        chosen = draw(st.lists(st.sampled_from(pairs), unique=True, max_size=len(pairs))) if pairs else []
    else:
        mask = draw(st.lists(st.floats(0, 1), min_size=len(pairs), max_size=len(pairs)))
        chosen = [e for e, r in zip(pairs, mask) if r < density]
    return Graph(n, chosen)


def connected(g: Graph) -> bool:
    from congestlab.graph import components

    return len(components(g)) == 1
