import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gridmrpp.matchings import (RegularityError, bottleneck_perfect_matching, build_color_row_graph,
                                decompose_into_matchings, lba_assign, verify_matching_set)

from oracles import bottleneck_by_enumeration, random_regular_multigraph

# A 4x3 table holding four colors three times each, labels 0..11.
FIG_COLORS = np.array([[2, 0, 3], [1, 3, 0], [0, 2, 1], [3, 1, 2]])
FIG_IDS = np.arange(12).reshape(4, 3)


def test_small_table_splits_into_three_matchings():
    graph = build_color_row_graph(FIG_COLORS, FIG_IDS)
    assert (graph.side, graph.degree) == (4, 3)
    ms = decompose_into_matchings(graph)
    assert ms.degree == 3
    verify_matching_set(graph, ms)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 20), st.integers(1, 8), st.integers(0, 2 ** 32 - 1))
def test_random_regular_multigraphs_decompose(m, d, seed):
    colors, ids = random_regular_multigraph(m, d, np.random.default_rng(seed))
    graph = build_color_row_graph(colors, ids)
    ms = decompose_into_matchings(graph, seed=seed)
    verify_matching_set(graph, ms)


def test_regularity_violations_are_reported():
    with pytest.raises(RegularityError):
        build_color_row_graph(np.array([[0, 0], [0, 1]]), np.arange(4).reshape(2, 2))
    with pytest.raises(RegularityError):
        build_color_row_graph(np.array([[0, 1], [1, 0]]), np.array([[0, 1], [1, 2]]))
    with pytest.raises(RegularityError):
        build_color_row_graph(np.array([[0, 1], [1, 0]]), np.array([[0, -1], [2, 3]]))


def test_decomposition_is_deterministic_per_seed():
    colors, ids = random_regular_multigraph(12, 5, np.random.default_rng(3))
    graph = build_color_row_graph(colors, ids)
    a = decompose_into_matchings(graph, seed=7)
    b = decompose_into_matchings(graph, seed=7)
    assert all(np.array_equal(x, y) for x, y in zip(a.matchings, b.matchings))


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 6), st.integers(0, 2 ** 32 - 1))
def test_bottleneck_matches_enumeration(n, seed):
    rng = np.random.default_rng(seed)
    costs = rng.integers(0, 20, size=(n, n)).astype(float)
    assign, value = bottleneck_perfect_matching(costs)
    assert sorted(assign.tolist()) == list(range(n))
    assert costs[np.arange(n), assign].max() == value
    assert value == bottleneck_by_enumeration(costs)


def test_bottleneck_respects_forbidden_entries():
    costs = np.array([[np.inf, 1.0], [5.0, np.inf]])
    assign, value = bottleneck_perfect_matching(costs)
    assert assign.tolist() == [1, 0] and value == 5.0
    with pytest.raises(ValueError):
        bottleneck_perfect_matching(np.array([[np.inf, np.inf], [1.0, 1.0]]))


def test_lba_prefers_goal_columns():
    # colors equal rows: the identity table is already solved, so every robot keeps its column
    colors = np.repeat(np.arange(3)[:, None], 3, axis=1)
    ids = np.arange(9).reshape(3, 3)
    cols = np.tile(np.arange(3), (3, 1))
    ms = lba_assign(colors, ids, cols, cols)
    verify_matching_set(build_color_row_graph(colors, ids), ms)
    col_of = ms.column_of()
    assert all(col_of[int(ids[r, c])] == c for r in range(3) for c in range(3))


@settings(max_examples=25, deadline=None)
@given(st.integers(2, 10), st.integers(1, 8), st.integers(0, 2 ** 32 - 1))
def test_lba_output_is_a_valid_split(m, w, seed):
    rng = np.random.default_rng(seed)
    colors, ids = random_regular_multigraph(m, w, rng)
    start = np.tile(np.arange(w), (m, 1))
    goal = rng.integers(0, w, size=(m, w))
    graph = build_color_row_graph(colors, ids)
    ms = lba_assign(colors, ids, start, goal)
    verify_matching_set(graph, ms)


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 20), st.integers(1, 8), st.integers(0, 8), st.integers(0, 2 ** 32 - 1))
def test_peeled_matchings_are_near_diagonal(m, d, count, seed):
    from gridmrpp.matchings import MatchingSet, peel_near_diagonal

    count = min(count, d)
    colors, ids = random_regular_multigraph(m, d, np.random.default_rng(seed))
    graph = build_color_row_graph(colors, ids)
    peeled, rest = peel_near_diagonal(graph, count)
    assert rest.degree == d - count
    others = decompose_into_matchings(rest).matchings if rest.degree else []
    verify_matching_set(graph, MatchingSet(peeled + others))
    if peeled:
        # the first peeled matching reaches the bottleneck optimum over |color - row|
        costs = np.full((m, m), np.inf)
        for r in range(m):
            for c in colors[r]:
                costs[c, r] = abs(int(c) - r)
        first = np.abs(peeled[0][:, 0] - peeled[0][:, 1]).max()
        assert first == bottleneck_by_enumeration(costs) if m <= 6 else first <= m - 1


def test_lba_reserved_columns_get_diagonal_matchings():
    rng = np.random.default_rng(5)
    colors, ids = random_regular_multigraph(8, 6, rng)
    cols = np.tile(np.arange(6), (8, 1))
    goal = rng.integers(0, 6, size=(8, 6))
    ms = lba_assign(colors, ids, cols, goal, reserved=[4, 5])
    verify_matching_set(build_color_row_graph(colors, ids), ms)
    from gridmrpp.matchings import peel_near_diagonal

    peeled, _ = peel_near_diagonal(build_color_row_graph(colors, ids), 2)
    assert np.array_equal(ms.matchings[4], peeled[0]) and np.array_equal(ms.matchings[5], peeled[1])
