from fractions import Fraction as F

import numpy as np
import pytest

from mhp.errors import DimensionMismatch, UnknownLink
from mhp.network import QueueSnapshot, TransitionMatrix, extend_with_supersink, transition_matrix
from mhp.pressure import (
    Phase,
    link_importance,
    link_pressure,
    phase_pressure,
    potential_sum,
    pressure_vector,
    pressure_vector_unrolled,
    upstream_potential,
)

from conftest import enumerate_walk_weight, frac_vector, random_absorbing_graph, random_absorbing_matrix

# Reference pressure vectors for the worked toy example.  The hop-3 and
# hop-4 entries for link 3 are 5/3 by the walk-enumeration oracle.
GOLDEN = {
    0: [0, 0, 0, 1, F(3, 4), 0, 1, 0, 0],
    1: [0, 0, F(1, 3), F(5, 3), F(11, 4), F(3, 4), F(5, 4), 2, 0],
    2: [0, 0, F(1, 3), F(5, 3), F(37, 12), F(9, 4), F(7, 4), F(35, 12), F(11, 4)],
    3: [0, 0, F(1, 3), F(5, 3), F(37, 12), F(5, 2), F(11, 6), F(41, 12), F(95, 12)],
    4: [0, 0, F(1, 3), F(5, 3), F(37, 12), F(5, 2), F(11, 6), F(7, 2), F(83, 6)],
}


@pytest.mark.parametrize("hop", sorted(GOLDEN))
def test_golden_pressure_vectors(toy_tm, toy_queues, hop):
    got = pressure_vector(toy_tm, toy_queues, hop).values
    np.testing.assert_allclose(got, frac_vector(GOLDEN[hop]), atol=1e-12, rtol=0)


def test_pressure_by_hop_levels_exposed(toy_tm, toy_queues):
    pv = pressure_vector(toy_tm, toy_queues, 4)
    assert len(pv.by_hop) == 5
    for hop, level in enumerate(pv.by_hop):
        np.testing.assert_allclose(level, frac_vector(GOLDEN[hop]), atol=1e-12, rtol=0)


def test_upstream_potential_one_hop(toy_tm, toy_queues):
    expected = frac_vector([0, 0, F(1, 3), F(2, 3), 2, F(3, 4), F(1, 4), 2, 0])
    got = upstream_potential(toy_tm, toy_queues, 1)
    assert got.hop == 1
    np.testing.assert_allclose(got.values, expected, atol=1e-12, rtol=0)


def test_upstream_potential_hop_zero_is_queue(toy_tm, toy_queues):
    np.testing.assert_array_equal(upstream_potential(toy_tm, toy_queues, 0).values, toy_queues.values)


def test_upstream_potential_zero_queue(toy_tm, toy_egraph):
    zero = QueueSnapshot(np.zeros(9))
    np.testing.assert_array_equal(upstream_potential(toy_tm, zero, 3).values, np.zeros(9))


def test_potentials_nonnegative_random():
    rng = np.random.default_rng(3)
    for _ in range(10):
        eg = extend_with_supersink(random_absorbing_graph(rng, 10))
        tm = transition_matrix(eg)
        q = QueueSnapshot.from_counts(eg, rng.integers(0, 30, eg.n_real).astype(float))
        for h in range(5):
            assert (upstream_potential(tm, q, h).values >= 0).all()


def test_link_importance_examples(toy_tm):
    assert link_importance(toy_tm, 1, 7, 2) == pytest.approx(2 / 3, abs=1e-12)
    assert link_importance(toy_tm, 0, 7, 3) == pytest.approx(1 / 4, abs=1e-12)
    for j in range(8):
        for l in range(8):
            assert link_importance(toy_tm, j, l, 0) == (1.0 if j == l else 0.0)
    with pytest.raises(UnknownLink):
        link_importance(toy_tm, 0, 99, 1)


def test_link_importance_matches_walk_enumeration():
    rng = np.random.default_rng(5)
    for _ in range(6):
        eg = extend_with_supersink(random_absorbing_graph(rng, int(rng.integers(3, 13))))
        tm = transition_matrix(eg)
        for h in range(0, 7):
            for j in range(eg.n_vertices):
                for l in range(eg.n_vertices):
                    expected = enumerate_walk_weight(eg, j, l, h)
                    assert link_importance(tm, j, l, h) == pytest.approx(expected, abs=1e-9)


def test_importance_zero_iff_not_upstream(toy_tm, toy_egraph):
    for h in range(6):
        for j in range(9):
            for l in range(8):  # real links
                member = j in toy_egraph.upstream_neighbors(l, h)
                assert (link_importance(toy_tm, j, l, h) > 0) == member


def test_recursive_equals_unrolled_toy(toy_tm, toy_queues):
    for h in range(5):
        a = pressure_vector(toy_tm, toy_queues, h).values
        b = pressure_vector_unrolled(toy_tm, toy_queues, h).values
        np.testing.assert_allclose(a, b, atol=1e-12, rtol=0)


def test_recursive_equals_unrolled_random():
    rng = np.random.default_rng(17)
    tm = TransitionMatrix.from_matrix(random_absorbing_matrix(rng, 10))
    q = QueueSnapshot(np.concatenate([rng.random(9) * 5, [0.0]]))
    a = pressure_vector(tm, q, 6).values
    b = pressure_vector_unrolled(tm, q, 6).values
    np.testing.assert_allclose(a, b, atol=1e-9, rtol=0)


def test_both_forms_at_hop_zero(toy_tm, toy_queues):
    expected = toy_queues.values - toy_tm.matrix @ toy_queues.values
    np.testing.assert_allclose(pressure_vector(toy_tm, toy_queues, 0).values, expected, atol=0)
    np.testing.assert_allclose(pressure_vector_unrolled(toy_tm, toy_queues, 0).values, expected, atol=0)


def test_monotone_in_hop_for_real_links():
    rng = np.random.default_rng(23)
    for _ in range(8):
        eg = extend_with_supersink(random_absorbing_graph(rng, 10))
        tm = transition_matrix(eg)
        q = QueueSnapshot.from_counts(eg, rng.integers(0, 20, eg.n_real).astype(float))
        prev = pressure_vector(tm, q, 0).values
        for h in range(1, 6):
            cur = pressure_vector(tm, q, h).values
            assert (cur >= prev - 1e-12).all()
            prev = cur


def test_stabilization_on_toy(toy_tm, toy_queues):
    p4 = pressure_vector(toy_tm, toy_queues, 4).values
    total = toy_queues.values.sum()
    prev = p4
    for h in range(5, 10):
        ph = pressure_vector(toy_tm, toy_queues, h).values
        np.testing.assert_allclose(ph[:-1], p4[:-1], atol=1e-12, rtol=0)
        assert ph[-1] - prev[-1] == pytest.approx(total, abs=1e-9)
        prev = ph


def test_zero_queue_fixpoint(toy_tm):
    zero = QueueSnapshot(np.zeros(9))
    for h in range(6):
        np.testing.assert_array_equal(pressure_vector(toy_tm, zero, h).values, np.zeros(9))


def test_link_pressure_by_column_extraction(toy_tm, toy_queues):
    assert link_pressure(toy_tm, toy_queues, 4, 2) == pytest.approx(37 / 12, abs=1e-12)
    for h in range(5):
        assert link_pressure(toy_tm, toy_queues, 0, h) == pytest.approx(0.0, abs=1e-12)
    zero = QueueSnapshot(np.zeros(9))
    assert link_pressure(toy_tm, zero, 3, 2) == 0.0
    for l in range(9):
        for h in range(4):
            assert link_pressure(toy_tm, toy_queues, l, h) == pytest.approx(
                pressure_vector(toy_tm, toy_queues, h).values[l], abs=1e-12
            )
    with pytest.raises(UnknownLink):
        link_pressure(toy_tm, toy_queues, 9, 1)


def test_phase_pressure_examples(toy_tm, toy_queues):
    p1 = pressure_vector(toy_tm, toy_queues, 1)
    phase = Phase(intersection="x", label="EB", incoming=(3, 6))
    assert phase_pressure(p1, phase) == pytest.approx(35 / 12, abs=1e-12)
    lone = Phase(intersection="x", label="N", incoming=(0,))
    for h in range(5):
        assert phase_pressure(pressure_vector(toy_tm, toy_queues, h), lone) == pytest.approx(0.0, abs=1e-12)
    with pytest.raises(UnknownLink):
        phase_pressure(p1, Phase(intersection="x", label="bad", incoming=(99,)))
    with pytest.raises(ValueError):
        Phase(intersection="x", label="empty", incoming=())


def test_potential_sum_examples(toy_tm, toy_queues, toy_egraph):
    assert potential_sum(toy_tm, toy_queues, {7}, 1) == pytest.approx(2.0, abs=1e-12)
    assert potential_sum(toy_tm, toy_queues, {4}, 0) == pytest.approx(1.0, abs=1e-12)
    zero = QueueSnapshot(np.zeros(9))
    assert potential_sum(toy_tm, zero, {1, 4, 7}, 3) == 0.0
    # configurable start hop excludes the link's own queue
    assert potential_sum(toy_tm, toy_queues, {7}, 1, h_start=1) == pytest.approx(2.0, abs=1e-12)
    assert potential_sum(toy_tm, toy_queues, {4}, 1, h_start=1) == pytest.approx(2.0, abs=1e-12)
    with pytest.raises(UnknownLink):
        potential_sum(toy_tm, toy_queues, {77}, 1)


def test_dimension_mismatch(toy_tm):
    with pytest.raises(DimensionMismatch):
        pressure_vector(toy_tm, np.zeros(5), 1)
    with pytest.raises(DimensionMismatch):
        upstream_potential(toy_tm, QueueSnapshot(np.zeros(4)), 1)
