from fractions import Fraction

import numpy as np
import pytest

from mhp.network import (
    Link,
    Movement,
    QueueSnapshot,
    build_graph,
    extend_with_supersink,
    transition_matrix,
)

TOY_MOVEMENTS = [
    ("0", "4", 1.0),
    ("1", "2", 1 / 3),
    ("1", "3", 2 / 3),
    ("2", "4", 1.0),
    ("3", "7", 1.0),
    ("4", "5", 3 / 4),
    ("4", "6", 1 / 4),
    ("6", "7", 1.0),
]


def make_toy_graph():
    links = [Link(name=str(i)) for i in range(8)]
    movements = [Movement(a, b, r) for a, b, r in TOY_MOVEMENTS]
    return build_graph(links, movements)


@pytest.fixture(scope="session")
def toy_graph():
    return make_toy_graph()


@pytest.fixture(scope="session")
def toy_egraph(toy_graph):
    return extend_with_supersink(toy_graph)


@pytest.fixture(scope="session")
def toy_tm(toy_egraph):
    return transition_matrix(toy_egraph)


@pytest.fixture()
def toy_queues(toy_egraph):
    return QueueSnapshot.from_counts(toy_egraph, [1, 1, 1, 1, 1, 0, 1, 0])


def frac_vector(entries):
    return np.array([float(Fraction(e)) for e in entries])


def enumerate_walk_weight(egraph, j, l, h):
    """Sum over all h-edge walks j -> l of the product of edge ratios."""
    if h == 0:
        return 1.0 if j == l else 0.0
    total = 0.0
    for k, r in egraph.out_edges[j]:
        total += r * enumerate_walk_weight(egraph, k, l, h - 1)
    return total


def random_absorbing_graph(rng, n_links):
    """Layered random graph where every link reaches an exit."""
    links = [Link(name=str(i)) for i in range(n_links)]
    movements = []
    for i in range(n_links):
        later = list(range(i + 1, n_links))
        if not later or rng.random() < 0.25:
            continue  # becomes an exit link
        k = int(rng.integers(1, min(3, len(later)) + 1))
        dests = rng.choice(later, size=k, replace=False)
        weights = rng.random(k) + 0.05
        weights = weights / weights.sum()
        movements.extend(
            Movement(str(i), str(int(j)), float(w)) for j, w in zip(dests, weights)
        )
    return build_graph(links, movements)


CATALOG_DIR = None


def catalog_scenario(name, **overrides):
    """Load a catalog scenario with shallow overrides (e.g. horizon_s)."""
    import json
    from pathlib import Path

    from mhp.scenario import load_network_file, scenario_from_dict

    catalog = Path(__file__).resolve().parents[1] / "src" / "mhp" / "scenarios"
    doc = json.loads((catalog / f"{name}.json").read_text())
    doc.update(overrides)
    graph = load_network_file(catalog / doc["network"])
    return scenario_from_dict(doc, graph, name=doc.get("name", name))


def random_absorbing_matrix(rng, n):
    """Row-stochastic matrix with an absorbing final state."""
    mat = rng.random((n, n)) + 0.01
    mat[:, -1] += rng.random(n)  # leak mass toward the sink
    mat /= mat.sum(axis=1, keepdims=True)
    mat[-1] = 0.0
    mat[-1, -1] = 1.0
    return mat
