"""Color/row multigraphs, perfect-matching decomposition and bottleneck assignment.

An abstract table with ``m`` rows and ``w`` columns holds one robot per slot.
A robot's color is the abstract row it must finally reach. The table defines a
``w``-regular bipartite multigraph between colors and rows; splitting it into
``w`` perfect matchings tells every robot which column to visit first.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import maximum_bipartite_matching


class RegularityError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class ColorRowMultigraph:
    """Edges are ``(color, row, robot id)`` triples, 0-based colors and rows."""

    side: int
    degree: int
    edges: np.ndarray


@dataclass(frozen=True, eq=False)
class MatchingSet:
    """``matchings[c]`` is an ``(m, 3)`` edge array forming a perfect matching."""

    matchings: list[np.ndarray]

    @property
    def degree(self) -> int:
        return len(self.matchings)

    def column_of(self) -> dict[int, int]:
        """Robot id to the index of the matching that contains it."""
        return {int(e[2]): c for c, mt in enumerate(self.matchings) for e in mt}


def build_color_row_graph(colors: np.ndarray, ids: np.ndarray) -> ColorRowMultigraph:
    """Multigraph of a full table; ``colors[r, k]`` and ``ids[r, k]`` describe slot ``(r, k)``."""
    colors = np.asarray(colors, dtype=np.int64)
    ids = np.asarray(ids, dtype=np.int64)
    if colors.ndim != 2 or colors.shape != ids.shape:
        raise RegularityError("colors and ids must be equal-shaped 2D tables")
    m, w = colors.shape
    if (ids < 0).any():
        raise RegularityError("table is not fully occupied")
    if len(np.unique(ids)) != ids.size:
        raise RegularityError("robot ids repeat in the table")
    if colors.size and (colors.min() < 0 or colors.max() >= m):
        raise RegularityError("colors must lie in [0, m)")
    counts = np.bincount(colors.ravel(), minlength=m)
    if (counts != w).any():
        raise RegularityError("every color must appear once per column")
    rows = np.repeat(np.arange(m), w)
    edges = np.stack([colors.ravel(), rows, ids.ravel()], axis=1)
    return ColorRowMultigraph(m, w, edges)


def _check_regular(graph: ColorRowMultigraph) -> None:
    m, d = graph.side, graph.degree
    e = graph.edges
    if d < 1 or len(e) != m * d:
        raise RegularityError("edge count does not match side * degree")
    if (np.bincount(e[:, 0], minlength=m) != d).any() or (np.bincount(e[:, 1], minlength=m) != d).any():
        raise RegularityError("graph is not regular")


def _perfect(mask: np.ndarray, order: np.ndarray | None = None) -> np.ndarray | None:
    """Perfect matching color -> row on a boolean adjacency, or None."""
    m = mask.shape[0]
    if order is not None:
        mask = mask[:, order]
    match = maximum_bipartite_matching(csr_matrix(mask.astype(np.int8)), perm_type="column")
    if (match < 0).any():
        return None
    return match if order is None else order[match]


def decompose_into_matchings(graph: ColorRowMultigraph, seed: int = 0) -> MatchingSet:
    """Peel ``degree`` perfect matchings off a regular multigraph."""
    _check_regular(graph)
    m = graph.side
    e = graph.edges
    srt = np.lexsort((e[:, 2], e[:, 1], e[:, 0]))
    e = e[srt]
    key = e[:, 0] * m + e[:, 1]
    starts = np.searchsorted(key, np.arange(m * m))
    ends = np.searchsorted(key, np.arange(m * m), side="right")
    taken = np.zeros(m * m, dtype=np.int64)
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(graph.degree):
        avail = (ends - starts - taken).reshape(m, m) > 0
        match = _perfect(avail, rng.permutation(m))
        if match is None:
            raise RegularityError("residual graph lost its perfect matching")
        cells = np.arange(m) * m + match
        out.append(e[starts[cells] + taken[cells]].copy())
        taken[cells] += 1
    return MatchingSet(out)


def bottleneck_perfect_matching(costs: np.ndarray) -> tuple[np.ndarray, float]:
    """Row-to-column bijection minimizing the largest selected cost.

    Entries equal to ``inf`` are forbidden. Returns ``(assignment, bottleneck)``.
    """
    costs = np.asarray(costs, dtype=float)
    n = costs.shape[0]
    if costs.ndim != 2 or costs.shape[1] != n:
        raise ValueError("cost matrix must be square")
    if n == 0:
        return np.zeros(0, dtype=np.int64), 0.0
    values = np.unique(costs[np.isfinite(costs)])
    lo, hi = 0, len(values) - 1
    best = None
    if hi < 0 or _perfect(costs <= values[hi]) is None:
        raise ValueError("no finite perfect matching exists")
    while lo <= hi:
        mid = (lo + hi) // 2
        match = _perfect(costs <= values[mid])
        if match is None:
            lo = mid + 1
        else:
            best = (match, values[mid])
            hi = mid - 1
    match, value = best
    return match.astype(np.int64), float(value)


def peel_near_diagonal(graph: ColorRowMultigraph, count: int) -> tuple[list[np.ndarray], ColorRowMultigraph]:
    """Remove ``count`` perfect matchings, each minimizing the largest ``|color - row|``.

    Returns the matchings and the residual ``degree - count`` regular multigraph.
    """
    _check_regular(graph)
    m = graph.side
    if not 0 <= count <= graph.degree:
        raise ValueError(f"cannot peel {count} matchings off degree {graph.degree}")
    e = graph.edges
    color, row = e[:, 0], e[:, 1]
    cost = np.abs(color - row)
    alive = np.ones(len(e), dtype=bool)
    out = []
    for _ in range(count):
        live = np.flatnonzero(alive)
        table = np.full((m, m), np.inf)
        np.minimum.at(table, (color[live], row[live]), cost[live].astype(float))
        match, _ = bottleneck_perfect_matching(table)
        order = live[np.lexsort((e[live, 2], row[live], color[live]))]
        key = color[order] * m + row[order]
        chosen = order[np.searchsorted(key, np.arange(m) * m + match)]
        alive[chosen] = False
        out.append(e[chosen].copy())
    return out, ColorRowMultigraph(m, graph.degree - count, e[alive])


def matching_costs(target_cols: np.ndarray, width: int) -> np.ndarray:
    """Cost of placing each robot in each column: distance to its target column."""
    return np.abs(np.arange(width)[None, :] - np.asarray(target_cols)[:, None])


def lba_assign(colors: np.ndarray, ids: np.ndarray, start_cols: np.ndarray,
               goal_cols: np.ndarray, lam: int = 0, reserved=()) -> MatchingSet:
    """Matchings chosen column by column to keep per-robot detours small.

    ``start_cols`` and ``goal_cols`` are tables aligned with ``ids`` giving each
    robot's current and final abstract column. With ``lam = 0`` the cost of
    sending a robot through column ``c`` is ``|c - goal col|``; with ``lam = 1``
    it is ``|c - start col|``. Columns listed in ``reserved`` receive
    near-diagonal matchings (see ``peel_near_diagonal``) instead. The returned
    set is ordered by column.
    """
    graph = build_color_row_graph(colors, ids)
    m, w = graph.side, graph.degree
    reserved = sorted(set(int(c) for c in reserved))
    peeled, rest = peel_near_diagonal(graph, len(reserved))
    free_cols = [c for c in range(w) if c not in reserved]
    keep = np.isin(graph.edges[:, 2], rest.edges[:, 2])
    color = graph.edges[:, 0]
    row = graph.edges[:, 1]
    rid = graph.edges[:, 2]
    scol = np.asarray(start_cols).ravel()
    gcol = np.asarray(goal_cols).ravel()
    alive = keep.copy()
    raw = []
    for c in free_cols:
        cost = lam * np.abs(c - scol) + (1 - lam) * np.abs(c - gcol)
        live = np.flatnonzero(alive)
        table = np.full((m, m), np.inf)
        np.minimum.at(table, (color[live], row[live]), cost[live].astype(float))
        match, _ = bottleneck_perfect_matching(table)
        order = live[np.lexsort((rid[live], cost[live], row[live], color[live]))]
        key = color[order] * m + row[order]
        first = np.searchsorted(key, np.arange(m) * m + match)
        chosen = order[first]
        alive[chosen] = False
        raw.append(graph.edges[chosen])
    # reassign whole matchings to columns under the worst member's cost
    ordered = [None] * w
    for c, mt in zip(reserved, peeled):
        ordered[c] = mt
    if raw:
        members = np.stack([np.searchsorted(rid, mt[:, 2], sorter=np.argsort(rid)) for mt in raw])
        members = np.argsort(rid)[members]
        cols = np.array(free_cols)[None, None, :]
        cost = lam * np.abs(cols - scol[members][..., None]) + (1 - lam) * np.abs(cols - gcol[members][..., None])
        realloc = cost.max(axis=1).astype(float)
        assign, _ = bottleneck_perfect_matching(realloc)
        for j, c in enumerate(assign):
            ordered[free_cols[c]] = raw[j]
    return MatchingSet(ordered)


def verify_matching_set(graph: ColorRowMultigraph, ms: MatchingSet) -> None:
    """Raise ``AssertionError`` unless ``ms`` is an exact perfect-matching split of ``graph``."""
    m = graph.side
    assert ms.degree == graph.degree
    for mt in ms.matchings:
        assert mt.shape == (m, 3)
        assert sorted(mt[:, 0].tolist()) == list(range(m))
        assert sorted(mt[:, 1].tolist()) == list(range(m))
    union = np.concatenate(ms.matchings) if ms.matchings else np.zeros((0, 3), int)
    a = sorted(map(tuple, union.tolist()))
    b = sorted(map(tuple, graph.edges.tolist()))
    assert a == b
