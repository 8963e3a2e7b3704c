import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gridmrpp.gridcore import GridSpace
from gridmrpp.shuffles import (CenteredLayout, ContractError, balanced_to_centered, column_bands,
                               convert_centered, highway_shuffle, linear_merge_shuffle,
                               odd_even_shuffle)

from conftest import check_trajectory


def merge_bound(L):
    return L + 2 * (math.ceil(math.log2(L)) + 1) + 2


def sheet_traj(P, L, perms, mode="fast"):
    """Run odd-even on a P x L sheet where row p must apply ``perms[p]``."""
    occ = np.arange(P * L).reshape(P, L)
    tgt = np.array(perms)
    hist = odd_even_shuffle(occ, tgt, mode)
    where = np.argsort(hist.reshape(hist.shape[0], -1), axis=1)
    traj = np.stack([where // L + 1, where % L + 1], axis=2)
    final = traj[-1]
    assert (final[:, 1] - 1 == tgt.ravel()).all()
    assert (final[:, 0] - 1 == np.arange(P * L) // L).all()
    return check_trajectory(GridSpace((P, L)), traj)


def test_odd_even_identity_is_a_single_frame():
    assert sheet_traj(3, 5, [list(range(5))] * 3) == 0


@pytest.mark.parametrize("P", [2, 3, 4, 5, 7])
def test_odd_even_reversal_within_bound(P):
    L = 8
    assert sheet_traj(P, L, [list(range(L))[::-1]] * P) <= 7 * L


def test_odd_even_faster_mode():
    L = 9
    rng = np.random.default_rng(0)
    perms = [rng.permutation(L) for _ in range(4)]
    assert sheet_traj(4, L, perms, "faster") <= 4 * L + 8
    # an odd sheet falls back to one three-line band, still valid
    perms.append(rng.permutation(L))
    assert sheet_traj(5, L, perms, "faster") <= 7 * L


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 6), st.integers(2, 10), st.integers(0, 2 ** 32 - 1))
def test_odd_even_random_rows(P, L, seed):
    rng = np.random.default_rng(seed)
    perms = [rng.permutation(L) for _ in range(P)]
    if L == 2 and P in (2, 5):
        with pytest.raises(ContractError):
            odd_even_shuffle(np.arange(P * L).reshape(P, L), np.array([[1, 0]] * P))
        return
    assert sheet_traj(P, L, perms) <= 7 * L


def test_odd_even_rejects_non_permutation():
    with pytest.raises(ContractError):
        odd_even_shuffle(np.arange(6).reshape(2, 3), np.array([[0, 0, 1], [0, 1, 2]]))


def line_case(L, targets):
    """Robots on the middle row of a 3 x L strip; returns the highway makespan."""
    pos = np.stack([np.full(L, 2), np.arange(1, L + 1)], axis=1)
    traj = highway_shuffle(pos, np.asarray(targets) + 1, axis=1, lane_axis=0)
    assert (traj[-1, :, 1] == np.asarray(targets) + 1).all() and (traj[-1, :, 0] == 2).all()
    return check_trajectory(GridSpace((3, L)), traj)


def test_highway_reversal_of_twelve():
    assert line_case(12, list(range(12))[::-1]) <= 12 + 7


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 20).flatmap(lambda L: st.permutations(range(L))))
def test_highway_random_permutations(perm):
    assert line_case(len(perm), perm) <= len(perm) + 7


def merge_case(L, perm):
    pos = np.stack([np.ones(L, int), np.arange(1, L + 1)], axis=1)
    traj = linear_merge_shuffle(pos, np.asarray(perm) + 1, axis=1, sec_axis=0)
    assert (traj[-1, :, 1] == np.asarray(perm) + 1).all() and (traj[-1, :, 0] == 1).all()
    return check_trajectory(GridSpace((2, L)), traj)


@pytest.mark.parametrize("L", range(1, 7))
def test_linear_merge_exhaustive_short_lines(L):
    for perm in itertools.permutations(range(L)):
        assert merge_case(L, perm) <= merge_bound(max(L, 2))


@settings(max_examples=30, deadline=None)
@given(st.integers(8, 64), st.integers(0, 2 ** 32 - 1))
def test_linear_merge_sampled_long_lines(L, seed):
    perm = np.random.default_rng(seed).permutation(L)
    assert merge_case(L, perm) <= merge_bound(L)


def test_linear_merge_needs_full_line():
    pos = np.array([[1, 1], [1, 3]])
    with pytest.raises(ContractError):
        linear_merge_shuffle(pos, np.array([3, 1]), axis=1, sec_axis=0)


@pytest.mark.parametrize("m2,widths", [(9, [3, 3, 3]), (10, [3, 3, 2, 2]), (11, [3, 3, 3, 2]), (2, [2])])
def test_third_regime_column_bands(m2, widths):
    bands = column_bands("third", m2)
    assert [w for _, w in bands] == widths
    assert sum(widths) == m2 and bands[0][0] == 1


@pytest.mark.parametrize("regime,dims", [("third", (6, 9)), ("third", (3, 11)), ("half", (4, 6))])
def test_conversion_round_trip(regime, dims):
    layout = CenteredLayout(regime, dims)
    slots = layout.slots()
    down = convert_centered(slots, regime, True, dims[1])
    assert down.shape[0] == 3
    check_trajectory(GridSpace(dims), down)
    up = convert_centered(down[-1], regime, False, dims[1])
    assert np.array_equal(up[-1], slots)


def test_conversion_rejects_off_layout_robots():
    with pytest.raises(ContractError):
        convert_centered(np.array([[1, 1]]), "third", True, 3)


LAYOUTS = [("third", (9, 12), False), ("third", (9, 10), False), ("third", (6, 5), False),
           ("third", (9, 9), True), ("half", (6, 8), False), ("half", (4, 2), False),
           ("full", (4, 5), False)]


@pytest.mark.parametrize("regime,dims,holes", LAYOUTS)
def test_layout_shuffles_realize_targets(regime, dims, holes):
    layout = CenteredLayout(regime, dims, holes)
    obstacles = frozenset((3 * a + 2, 3 * b + 2) for a in range(dims[0] // 3)
                          for b in range(dims[1] // 3)) if holes else frozenset()
    space = GridSpace(dims, obstacles)
    rng = np.random.default_rng(1)
    pos = layout.slots()
    j, k = layout.abstract(pos)
    # row shuffle: permute each band
    tk = np.empty_like(k)
    for band in range(layout.height):
        sel = j == band
        tk[sel] = rng.permutation(k[sel])
    row = layout.row_shuffle(pos, tk)
    check_trajectory(space, row)
    assert np.array_equal(layout.abstract(row[-1])[1], tk)
    # column shuffle: permute each table column
    pos = row[-1]
    j, k = layout.abstract(pos)
    tj = np.empty_like(j)
    for c in range(layout.width):
        sel = k == c
        tj[sel] = rng.permutation(j[sel])
    col = layout.col_shuffle(pos, tj)
    T = check_trajectory(space, col)
    jj, kk = layout.abstract(col[-1])
    assert np.array_equal(jj, tj) and np.array_equal(kk, k)
    if regime == "third" and dims[1] % 3 == 0:
        assert T <= dims[0] + 7
    elif regime == "third":
        # 2-wide column bands merge along the slot column
        assert T <= merge_bound(dims[0]) + 4


@pytest.mark.parametrize("dims", [(6, 7, 3), (3, 4, 2)])
def test_depth_shuffle(dims):
    layout = CenteredLayout("third", dims)
    pos = layout.slots()
    rng = np.random.default_rng(2)
    tz = np.empty(len(pos), dtype=int)
    xy = pos[:, 0] * 100 + pos[:, 1]
    for key in np.unique(xy):
        sel = xy == key
        tz[sel] = rng.permutation(pos[sel, 2])
    traj = layout.depth_shuffle(pos, tz)
    check_trajectory(GridSpace(dims), traj)
    assert np.array_equal(traj[-1, :, 2], tz)


def test_layout_contracts():
    with pytest.raises(ContractError):
        CenteredLayout("third", (10, 9))
    with pytest.raises(ContractError):
        CenteredLayout("half", (4, 5))
    with pytest.raises(ContractError):
        CenteredLayout("full", (2, 2))
    with pytest.raises(ContractError):
        CenteredLayout("full", (5, 2))
    with pytest.raises(ContractError):
        CenteredLayout("third", (9, 10), holes=True)
    with pytest.raises(ContractError):
        CenteredLayout("third", (6, 6)).abstract(np.array([[1, 1]]))


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 3), st.integers(1, 3), st.integers(0, 2 ** 32 - 1))
def test_balanced_configurations_center(a, b, seed):
    rng = np.random.default_rng(seed)
    cells = []
    for ca in range(a):
        for cb in range(b):
            k = rng.integers(0, 4)
            local = rng.choice(9, k, replace=False)
            cells += [(3 * ca + 1 + v // 3, 3 * cb + 1 + v % 3) for v in local]
    if not cells:
        return
    pos = np.array(cells)
    traj = balanced_to_centered(pos)
    check_trajectory(GridSpace((3 * a, 3 * b)), traj)
    assert ((traj[-1, :, 1] - 1) % 3 == 1).all()
    assert traj.shape[0] - 1 <= 4


def test_overfull_cell_is_rejected():
    with pytest.raises(ContractError):
        balanced_to_centered(np.array([[1, 1], [1, 2], [1, 3], [2, 1]]))
