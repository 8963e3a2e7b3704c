"""Unlabeled routing of a robot set onto a slot set via time-expanded max-flow.

The network has an in-node and an out-node per free cell and timestep; the
unit arc between them caps occupancy at one robot. Move and wait arcs join
consecutive layers. Swaps are not blocked inside the network. Instead, each
swap in the extracted paths is replaced by two waits and the two robots trade
the rest of their paths, which leaves the occupancy at every step unchanged.
A swap-blocking edge gadget is available for cross-checking.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import maximum_flow, shortest_path

from .gridcore import GridSpace

log = logging.getLogger(__name__)

try:
    from ortools.graph.python import max_flow as _ort_max_flow
except ImportError:  # pragma: no cover - exercised only without ortools
    _ort_max_flow = None

FULL_MATRIX_LIMIT = 2_000_000


class InfeasibleError(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class TargetAssignment:
    """``slot_of[i]`` is the slot index given to robot ``i``."""

    slot_of: np.ndarray
    bottleneck: int


@dataclass(frozen=True, eq=False)
class UnlabeledResult:
    """Trajectories ``(T + 1, n, D)`` in input robot order; ``traj[-1]`` fills the slots."""

    traj: np.ndarray
    horizon: int
    lower_bound: int


class _FreeGraph:
    """Compact indexing of free cells plus their adjacency."""

    def __init__(self, space: GridSpace):
        self.space = space
        free = space.free_mask().ravel()
        self.cells = np.flatnonzero(free)
        self.index = np.full(space.n_cells, -1, dtype=np.int64)
        self.index[self.cells] = np.arange(len(self.cells))
        u, v = space.edges()
        self.eu, self.ev = self.index[u], self.index[v]
        self.n = len(self.cells)

    def of(self, pos: np.ndarray) -> np.ndarray:
        idx = self.index[self.space.flat_index(pos)]
        if (idx < 0).any():
            raise ValueError("position on an obstacle")
        return idx

    def pos(self, idx: np.ndarray) -> np.ndarray:
        return self.space.cells_of(self.cells[idx])

    def csgraph(self) -> csr_matrix:
        n = self.n
        rows = np.concatenate([self.eu, self.ev])
        cols = np.concatenate([self.ev, self.eu])
        return csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(n, n))


# --------------------------------------------------------- target assignment

def _window_distances(space: GridSpace, pos: np.ndarray, d: int) -> tuple[np.ndarray, np.ndarray]:
    """Obstacle-aware distances up to ``d`` inside a radius-``d`` box per robot.

    Returns ``(offsets, dist)`` with ``dist[i, j]`` the distance from robot ``i``
    to ``pos[i] + offsets[j]`` (-1 when farther than ``d`` or blocked).
    """
    D = space.ndim
    rng = np.arange(-d, d + 1)
    offs = np.stack(np.meshgrid(*([rng] * D), indexing="ij"), axis=-1).reshape(-1, D)
    offs = offs[np.abs(offs).sum(axis=1) <= d]
    cells = pos[:, None, :] + offs[None]
    inside = space.in_bounds(cells)
    free = space.free_mask()
    ok = inside.copy()
    safe = np.where(inside[..., None], cells, 1)
    ok &= free[tuple((safe - 1).transpose(2, 0, 1))]
    if not space.obstacles:
        dist = np.where(ok, np.abs(offs).sum(axis=1)[None], -1)
        return offs, dist
    # BFS inside the window via offset lookups
    lookup = {tuple(o): j for j, o in enumerate(offs.tolist())}
    nbr = np.full((len(offs), 2 * D), -1, dtype=np.int64)
    for j, o in enumerate(offs.tolist()):
        for a in range(D):
            for s, col in ((-1, 2 * a), (1, 2 * a + 1)):
                q = list(o)
                q[a] += s
                nbr[j, col] = lookup.get(tuple(q), -1)
    center = lookup[tuple([0] * D)]
    dist = np.full(ok.shape, -1, dtype=np.int64)
    dist[:, center] = 0
    frontier = np.zeros(ok.shape, dtype=bool)
    frontier[:, center] = True
    for step in range(1, d + 1):
        reach = np.zeros(ok.shape, dtype=bool)
        for col in range(2 * D):
            valid = nbr[:, col] >= 0
            src = np.flatnonzero(valid)
            reach[:, nbr[src, col]] |= frontier[:, src]
        reach &= ok & (dist < 0)
        dist[reach] = step
        frontier = reach
    return offs, dist


def _match(n: int, rows: np.ndarray, cols: np.ndarray) -> np.ndarray | None:
    """Perfect matching robot -> slot over the given edges, via unit max-flow."""
    if len(np.unique(rows)) < n or len(np.unique(cols)) < n:
        return None
    src, snk = 2 * n, 2 * n + 1
    tails = np.concatenate([np.full(n, src), rows, n + np.arange(n)])
    heads = np.concatenate([np.arange(n), n + cols, np.full(n, snk)])
    value, flow = _max_flow(tails, heads, 2 * n + 2, src, snk, default_engine())
    if value < n:
        return None
    mid = flow[n : n + len(rows)] > 0
    match = np.empty(n, dtype=np.int64)
    match[rows[mid]] = cols[mid]
    return match


def assign_targets(occupied: np.ndarray, slots: np.ndarray, space: GridSpace) -> TargetAssignment:
    """Bijection robots to slots minimizing the largest shortest-path distance."""
    occupied = np.asarray(occupied, dtype=np.int64).reshape(-1, space.ndim)
    slots = np.asarray(slots, dtype=np.int64).reshape(-1, space.ndim)
    n = len(occupied)
    if len(slots) != n:
        raise ValueError(f"{n} robots but {len(slots)} slots")
    if n == 0:
        return TargetAssignment(np.zeros(0, dtype=np.int64), 0)
    fg = _FreeGraph(space)
    # no threshold below the farthest robot's distance to its nearest slot can work
    near = space.bfs_distances(slots)[tuple((occupied - 1).T)]
    if (near < 0).any():
        raise InfeasibleError("some robot cannot reach any slot")
    d0 = int(near.max())
    if n * fg.n <= FULL_MATRIX_LIMIT:
        dist = shortest_path(fg.csgraph(), unweighted=True, indices=fg.of(occupied))
        dist = dist[:, fg.of(slots)]
        if not np.isfinite(dist).all():
            raise InfeasibleError("some slot is unreachable")
        # ascending thresholds: the answer is usually close to d0 and sparse graphs match fast
        for value in np.unique(dist[dist >= d0]):
            r, c = np.nonzero(dist <= value)
            match = _match(n, r, c)
            if match is not None:
                return TargetAssignment(match.astype(np.int64), int(value))
        raise InfeasibleError("no assignment found")
    slot_at = np.full(space.n_cells, -1, dtype=np.int64)
    slot_at[space.flat_index(slots)] = np.arange(n)
    d = d0
    limit = sum(space.dims)
    while d <= limit * 2:
        offs, dist = _window_distances(space, occupied, d)
        cells = occupied[:, None, :] + offs[None]
        inside = space.in_bounds(cells)
        flat = space.flat_index(np.where(inside[..., None], cells, 1))
        hit = np.where(inside & (dist >= 0), slot_at[flat], -1)
        r, j = np.nonzero(hit >= 0)
        match = _match(n, r, hit[r, j])
        if match is not None:
            return TargetAssignment(match.astype(np.int64), d)
        d += 1
    raise InfeasibleError("no assignment found")


# ------------------------------------------------------------------- network

def _build_network(fg: _FreeGraph, starts: np.ndarray, targets: np.ndarray, T: int, gadget: bool):
    N, E = fg.n, len(fg.eu)
    layer = 2 * N + (2 * E if gadget else 0)
    V = layer * (T + 1) + 2
    src, snk = V - 2, V - 1
    tails, heads = [], []
    cells = np.arange(N)
    for t in range(T + 1):
        base = t * layer
        tails.append(base + cells)
        heads.append(base + N + cells)
        if t == T:
            break
        nxt = (t + 1) * layer
        tails.append(base + N + cells)
        heads.append(nxt + cells)
        if gadget:
            a = base + 2 * N + np.arange(E)
            b = a + E
            tails += [base + N + fg.eu, base + N + fg.ev, a, b, b]
            heads += [a, a, b, nxt + fg.eu, nxt + fg.ev]
        else:
            tails += [base + N + fg.eu, base + N + fg.ev]
            heads += [nxt + fg.ev, nxt + fg.eu]
    tails.append(np.full(len(starts), src))
    heads.append(starts)
    tails.append(T * layer + N + targets)
    heads.append(np.full(len(targets), snk))
    return np.concatenate(tails), np.concatenate(heads), V, src, snk, layer


def _max_flow(tails, heads, V, src, snk, engine: str):
    if engine == "ortools" and _ort_max_flow is not None:
        g = _ort_max_flow.SimpleMaxFlow()
        arcs = g.add_arcs_with_capacity(tails.astype(np.int32), heads.astype(np.int32),
                                        np.ones(len(tails), dtype=np.int64))
        status = g.solve(int(src), int(snk))
        if status != g.OPTIMAL:
            raise RuntimeError(f"max-flow solver returned status {status}")
        return int(g.optimal_flow()), np.asarray(g.flows(arcs))
    graph = csr_matrix((np.ones(len(tails), dtype=np.int32), (tails, heads)), shape=(V, V))
    res = maximum_flow(graph, int(src), int(snk), method="dinic")
    flow = np.asarray(res.flow[tails, heads]).ravel()
    return int(res.flow_value), flow


def default_engine() -> str:
    return "ortools" if _ort_max_flow is not None else "scipy"


def _extract(fg: _FreeGraph, tails, heads, flow, layer, T, starts, gadget):
    """Follow unit flow from each start; returns free-cell indices ``(T + 1, n)``."""
    N, E = fg.n, len(fg.eu)
    used = (flow > 0) & (tails < layer * (T + 1)) & (heads < layer * (T + 1))
    t_layer = tails // layer
    t_off = tails % layer
    h_off = heads % layer
    nxt = np.full((T, N), -1, dtype=np.int64)
    direct = used & (t_off >= N) & (t_off < 2 * N) & (h_off < N) & (heads // layer == t_layer + 1)
    nxt[t_layer[direct], t_off[direct] - N] = h_off[direct]
    if gadget:
        into_a = used & (t_off >= N) & (t_off < 2 * N) & (h_off >= 2 * N) & (h_off < 2 * N + E)
        out_b = used & (t_off >= 2 * N + E) & (t_off < 2 * N + 2 * E) & (heads // layer == t_layer + 1)
        e_in = h_off[into_a] - 2 * N
        tail_cell = np.full((T, E), -1, dtype=np.int64)
        tail_cell[t_layer[into_a], e_in] = t_off[into_a] - N
        e_out = t_off[out_b] - 2 * N - E
        tc = tail_cell[t_layer[out_b], e_out]
        nxt[t_layer[out_b], tc] = h_off[out_b]
    path = np.empty((T + 1, len(starts)), dtype=np.int64)
    path[0] = starts
    for t in range(T):
        path[t + 1] = nxt[t, path[t]]
    if (path < 0).any():
        raise RuntimeError("flow decomposition failed")
    return path


def remove_swaps(path: np.ndarray) -> np.ndarray:
    """Replace each two-robot swap by waits, trading the robots' remaining paths."""
    path = path.copy()
    T = path.shape[0] - 1
    for t in range(T):
        a, b = path[t], path[t + 1]
        moving = np.flatnonzero(a != b)
        if len(moving) < 2:
            continue
        key = a[moving] * (path.max() + 1) + b[moving]
        rev = b[moving] * (path.max() + 1) + a[moving]
        order = np.argsort(key)
        loc = np.clip(np.searchsorted(key[order], rev), 0, len(key) - 1)
        hit = key[order][loc] == rev
        i = moving[hit]
        j = moving[order[loc[hit]]]
        first = i < j
        i, j = i[first], j[first]
        if len(i):
            tail_i = path[t + 1:, i].copy()
            path[t + 1:, i] = path[t + 1:, j]
            path[t + 1:, j] = tail_i
    return path


def solve_unlabeled(occupied: np.ndarray, slots: np.ndarray, space: GridSpace, cap: int | None = None,
                    swap_gadget: bool = False, engine: str | None = None,
                    start_horizon: int | None = None) -> UnlabeledResult:
    """Makespan-optimal unlabeled routing of ``occupied`` onto ``slots``."""
    occupied = np.asarray(occupied, dtype=np.int64).reshape(-1, space.ndim)
    slots = np.asarray(slots, dtype=np.int64).reshape(-1, space.ndim)
    n = len(occupied)
    if len(slots) != n:
        raise ValueError(f"{n} robots but {len(slots)} slots")
    engine = engine or default_engine()
    if cap is None:
        cap = 4 * sum(space.dims)
    fg = _FreeGraph(space)
    s_idx, g_idx = fg.of(occupied), fg.of(slots)
    if n == 0 or set(s_idx.tolist()) == set(g_idx.tolist()):
        return UnlabeledResult(occupied[None].copy(), 0, 0)
    if start_horizon is None:
        start_horizon = assign_targets(occupied, slots, space).bottleneck
    lb = start_horizon
    T = max(lb, 1)
    while T <= cap:
        tails, heads, V, src, snk, layer = _build_network(fg, s_idx, g_idx, T, swap_gadget)
        value, flow = _max_flow(tails, heads, V, src, snk, engine)
        log.debug("unlabeled horizon %d: flow %d of %d", T, value, n)
        if value == n:
            path = _extract(fg, tails, heads, flow, layer, T, s_idx, swap_gadget)
            if not swap_gadget:
                path = remove_swaps(path)
            traj = fg.pos(path)
            return UnlabeledResult(traj, T, lb)
        T += 1
    raise InfeasibleError(f"no unlabeled plan within horizon {cap}")
