import numpy as np
import pytest

from mhp.errors import (
    DanglingMovement,
    DimensionMismatch,
    DuplicateLink,
    NoExitLink,
    RatioSumViolation,
    UnknownLink,
)
from mhp.network import (
    Link,
    Movement,
    QueueSnapshot,
    build_graph,
    extend_with_supersink,
    transition_matrix,
)

from conftest import enumerate_walk_weight, random_absorbing_graph


def test_toy_graph_builds_with_eight_vertices(toy_graph):
    assert toy_graph.n_links == 8
    assert toy_graph.exit_indices == (5, 7)


def test_single_exit_link_is_a_valid_graph():
    g = build_graph([Link(name="only", is_exit=True)], [])
    assert g.n_links == 1
    assert g.exit_indices == (0,)


def test_ratio_sum_violation_reports_link_and_sum():
    links = [Link(name="1"), Link(name="2"), Link(name="3", is_exit=True)]
    movements = [Movement("1", "2", 0.5), Movement("1", "3", 0.6)]
    with pytest.raises(RatioSumViolation) as err:
        build_graph(links, movements)
    assert "'1'" in str(err.value)
    assert "1.1" in str(err.value)


def test_duplicate_link_rejected():
    with pytest.raises(DuplicateLink):
        build_graph([Link(name="a"), Link(name="a")], [])


def test_dangling_movement_rejected():
    with pytest.raises(DanglingMovement):
        build_graph([Link(name="a")], [Movement("a", "ghost", 1.0)])


def test_declared_exit_with_outgoing_movement_rejected():
    links = [Link(name="a", is_exit=True), Link(name="b")]
    with pytest.raises(DanglingMovement):
        build_graph(links, [Movement("a", "b", 1.0)])


def test_exit_links_inferred_from_topology():
    g = build_graph([Link(name="a"), Link(name="b")], [Movement("a", "b", 1.0)])
    assert [l.is_exit for l in g.links] == [False, True]


def test_supersink_extension_of_toy(toy_egraph):
    assert toy_egraph.n_vertices == 9
    assert toy_egraph.omega == 8
    assert (8, 1.0) in toy_egraph.out_edges[5]
    assert (8, 1.0) in toy_egraph.out_edges[7]
    assert toy_egraph.out_edges[8] == [(8, 1.0)]


def test_supersink_on_single_exit_link():
    g = build_graph([Link(name="l", is_exit=True)], [])
    eg = extend_with_supersink(g)
    assert eg.n_vertices == 2
    assert eg.out_edges[0] == [(1, 1.0)]
    assert eg.out_edges[1] == [(1, 1.0)]


def test_cycle_without_exit_raises():
    links = [Link(name="a"), Link(name="b")]
    movements = [Movement("a", "b", 1.0), Movement("b", "a", 1.0)]
    with pytest.raises(NoExitLink):
        extend_with_supersink(build_graph(links, movements))


def test_stranded_cycle_raises_even_with_an_exit():
    links = [Link(name="a"), Link(name="b"), Link(name="c", is_exit=True)]
    movements = [Movement("a", "b", 1.0), Movement("b", "a", 1.0)]
    with pytest.raises(NoExitLink) as err:
        extend_with_supersink(build_graph(links, movements))
    assert "a" in str(err.value)


TOY_P = np.array(
    [
        [0, 0, 0, 0, 1, 0, 0, 0, 0],
        [0, 0, 1 / 3, 2 / 3, 0, 0, 0, 0, 0],
        [0, 0, 0, 0, 1, 0, 0, 0, 0],
        [0, 0, 0, 0, 0, 0, 0, 1, 0],
        [0, 0, 0, 0, 0, 3 / 4, 1 / 4, 0, 0],
        [0, 0, 0, 0, 0, 0, 0, 0, 1],
        [0, 0, 0, 0, 0, 0, 0, 1, 0],
        [0, 0, 0, 0, 0, 0, 0, 0, 1],
        [0, 0, 0, 0, 0, 0, 0, 0, 1],
    ]
)


def test_toy_transition_matrix_matches_reference(toy_tm):
    assert toy_tm.matrix.shape == (9, 9)
    np.testing.assert_allclose(toy_tm.matrix, TOY_P, atol=1e-12, rtol=0)


def test_single_exit_transition_matrix():
    eg = extend_with_supersink(build_graph([Link(name="l", is_exit=True)], []))
    tm = transition_matrix(eg)
    np.testing.assert_array_equal(tm.matrix, [[0, 1], [0, 1]])


def test_rows_stochastic_and_absorbing(toy_tm):
    np.testing.assert_allclose(toy_tm.matrix.sum(axis=1), 1.0, atol=1e-9, rtol=0)
    np.testing.assert_array_equal(toy_tm.matrix[-1], np.eye(9)[-1])


def test_random_graphs_are_row_stochastic():
    rng = np.random.default_rng(7)
    for _ in range(20):
        g = random_absorbing_graph(rng, int(rng.integers(2, 13)))
        tm = transition_matrix(extend_with_supersink(g))
        np.testing.assert_allclose(tm.matrix.sum(axis=1), 1.0, atol=1e-9, rtol=0)


def test_block_structure_exit_indicator(toy_graph, toy_tm):
    for i in range(8):
        expected = 1.0 if toy_graph.links[i].is_exit else 0.0
        assert toy_tm.matrix[i, 8] == expected


@pytest.mark.parametrize(
    "l,h,expected",
    [
        (7, 0, {7}),
        (7, 1, {3, 6}),
        (7, 2, {1, 4}),
        (7, 3, {0, 2}),
        (7, 4, {1}),
        (7, 5, set()),
        (7, 6, set()),
    ],
)
def test_upstream_neighbors_toy(toy_egraph, l, h, expected):
    assert toy_egraph.upstream_neighbors(l, h) == expected


@pytest.mark.parametrize(
    "l,h,expected",
    [
        (1, 1, {2, 3}),
        (5, 1, {8}),
        (8, 1, {8}),
        (8, 2, {8}),
        (8, 5, {8}),
        (0, 2, {5, 6}),
    ],
)
def test_downstream_neighbors_toy(toy_egraph, l, h, expected):
    assert toy_egraph.downstream_neighbors(l, h) == expected


def test_unknown_link_in_neighbor_query(toy_egraph):
    with pytest.raises(UnknownLink):
        toy_egraph.upstream_neighbors(42, 1)
    with pytest.raises(UnknownLink):
        toy_egraph.downstream_neighbors(-1, 1)


def test_neighbors_consistent_with_matrix_support_and_walks():
    rng = np.random.default_rng(11)
    for _ in range(8):
        eg = extend_with_supersink(random_absorbing_graph(rng, int(rng.integers(3, 13))))
        tm = transition_matrix(eg)
        n = eg.n_vertices
        for h in range(0, 7):
            ph = tm.power(h)
            for l in range(n):
                up = eg.upstream_neighbors(l, h)
                support = {j for j in range(n) if ph[j, l] > 0}
                assert up == support
                for j in up:
                    walk = enumerate_walk_weight(eg, j, l, h)
                    assert walk == pytest.approx(ph[j, l], rel=1e-9)


def test_absorption_on_acyclic_networks(toy_tm):
    # Longest walk to the sink in the toy network has 5 edges.
    p5 = toy_tm.power(5)
    np.testing.assert_allclose(p5[:, -1], 1.0, atol=1e-12)
    np.testing.assert_allclose(p5[:, :-1], 0.0, atol=1e-12)
    np.testing.assert_allclose(toy_tm.power(9), p5, atol=1e-12)


def test_power_cache_identity_and_first_power(toy_tm):
    np.testing.assert_array_equal(toy_tm.power(0), np.eye(9))
    np.testing.assert_array_equal(toy_tm.power(1), toy_tm.matrix)


def test_sparse_fallback_matches_dense_math():
    n = 600  # above the dense limit: a long chain into one exit
    links = [Link(name=str(i)) for i in range(n)]
    movements = [Movement(str(i), str(i + 1), 1.0) for i in range(n - 1)]
    tm = transition_matrix(extend_with_supersink(build_graph(links, movements)))
    assert tm._sparse
    p3 = tm.power(3)
    assert p3[0, 3] == 1.0
    assert p3[n - 1, n] == 1.0  # exit row absorbed
    np.testing.assert_allclose(p3.sum(axis=1), 1.0, atol=1e-9, rtol=0)


def test_queue_snapshot_validation(toy_egraph):
    with pytest.raises(ValueError):
        QueueSnapshot(np.array([1.0, -0.5, 0.0]))
    with pytest.raises(ValueError):
        QueueSnapshot(np.array([0.0, 1.0]))
    with pytest.raises(DimensionMismatch):
        QueueSnapshot.from_counts(toy_egraph, [1, 2, 3])


def test_queue_snapshot_from_mapping_and_density(toy_egraph):
    snap = QueueSnapshot.from_counts(toy_egraph, {"3": 4.0, "6": 2.0})
    assert snap.values[3] == 4.0 and snap.values[6] == 2.0 and snap.values.sum() == 6.0
    dense = QueueSnapshot.from_counts(toy_egraph, {"3": 4.0}, density=True)
    assert dense.values[3] == pytest.approx(4.0 / 0.3)  # default 300 m links


def test_index_order_follows_input_order(toy_egraph):
    assert toy_egraph.names == tuple(str(i) for i in range(8)) + ("@sink",)
    assert toy_egraph.index_of("4") == 4
    with pytest.raises(UnknownLink):
        toy_egraph.index_of("nope")
