"""Concrete grid motions that permute robots along rows, columns or depth lines.

Engines return trajectories as integer arrays of shape ``(T + 1, k, D)`` that
follow the ``k`` input robots in their input order. Coordinates are 1-based.

* ``odd_even_shuffle``: full density, odd-even transposition over tiny blocks
  whose row permutations are looked up in the block oracle.
* ``highway_shuffle``: robots on a center line, with the two neighboring lines
  empty and used as one-way lanes.
* ``linear_merge_shuffle``: a full primary line plus one empty secondary line,
  permuted by a merge sort whose merges run in parallel.
* ``convert_centered``: two-step switches between the vertical and horizontal
  centered layouts of 3x3 or 2x2 cells.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import blockoracle


class ContractError(ValueError):
    """Input to a shuffle engine violates its precondition."""


def _pad(traj: np.ndarray, T: int) -> np.ndarray:
    if traj.shape[0] >= T + 1:
        return traj
    tail = np.repeat(traj[-1:], T + 1 - traj.shape[0], axis=0)
    return np.concatenate([traj, tail], axis=0)


def stay(pos: np.ndarray) -> np.ndarray:
    return np.asarray(pos)[None].copy()


# ----------------------------------------------------------- odd-even engine

def _bands(P: int, mode: str) -> list[tuple[int, int, str]]:
    """Split ``P`` perpendicular lines into bands ``(start, height, kind)``."""
    if P < 2:
        raise ContractError("odd-even shuffles need at least two perpendicular lines")
    heights: list[tuple[int, str]]
    if mode == "faster":
        heights = [(2, "wide")] * (P // 2)
        if P % 2:
            heights[-1] = (3, "pair")
    else:
        q, r = divmod(P, 3)
        if r == 0:
            heights = [(3, "pair")] * q
        elif r == 1:
            heights = [(3, "pair")] * (q - 1) + [(4, "pair")]
        elif q >= 2:
            heights = [(3, "pair")] * (q - 2) + [(4, "pair")] * 2
        else:
            heights = [(3, "pair")] * q + [(2, "wide")]
    out, start = [], 0
    for h, kind in heights:
        out.append((start, h, kind))
        start += h
    return out


def _row_ranks(vals: np.ndarray) -> tuple[tuple[int, ...], ...]:
    return tuple(tuple(int(v) for v in np.argsort(np.argsort(row, kind="stable"))) for row in vals)


def _band_history(occ: np.ndarray, tgt: np.ndarray, kind: str) -> list[np.ndarray]:
    """Sort one band; returns the list of occupancy states (first is the input)."""
    h, L = occ.shape
    states = [occ]
    cur_occ, cur_tgt = occ.copy(), tgt.copy()
    goal = np.arange(L)
    width = 2 if kind == "pair" else 4
    rnd = 0
    idle_rounds = 0
    cap = 4 * L + 8
    while not (cur_tgt == goal).all():
        if rnd > cap:
            raise RuntimeError("odd-even shuffle failed to converge")
        off = (rnd % 2) * (1 if kind == "pair" else 2)
        plans = []
        c = off
        while c < L:
            w = min(width, L - c)
            if (kind == "pair" and w == 2) or (kind == "wide" and w >= 3):
                block = cur_tgt[:, c:c + w]
                if (np.diff(block, axis=1) < 0).any():
                    pattern = _row_ranks(block)
                    sol = blockoracle.solve_pattern((h, w), pattern)
                    cells = (np.arange(h)[:, None] * L + c + np.arange(w)[None, :]).ravel()
                    plans.append((cells, sol.steps()))
            c += width
        rnd += 1
        if not plans:
            idle_rounds += 1
            if idle_rounds > 2:
                raise RuntimeError("odd-even shuffle stalled")
            continue
        idle_rounds = 0
        dur = max(len(s) for _, s in plans)
        flat_occ = cur_occ.ravel()
        flat_tgt = cur_tgt.ravel()
        for s in range(dur):
            idx = np.arange(h * L)
            for cells, steps in plans:
                if s < len(steps):
                    idx[cells] = cells[steps[s]]
            flat_occ = flat_occ[idx]
            flat_tgt = flat_tgt[idx]
            states.append(flat_occ.reshape(h, L))
        cur_occ, cur_tgt = flat_occ.reshape(h, L), flat_tgt.reshape(h, L)
    return states


def odd_even_shuffle(occ: np.ndarray, tgt: np.ndarray, mode: str = "fast") -> np.ndarray:
    """Permute every line of fully occupied sheets.

    ``occ[s, p, l]`` is the robot on sheet ``s``, perpendicular line ``p`` and
    along-line position ``l``; ``tgt`` (same shape) is that robot's target
    along-line position. Returns the occupancy history ``(T + 1, S, P, L)``.
    """
    occ = np.asarray(occ)
    tgt = np.asarray(tgt, dtype=np.int64)
    if occ.ndim == 2:
        return odd_even_shuffle(occ[None], tgt[None], mode)[:, 0]
    S, P, L = occ.shape
    if mode not in ("fast", "faster"):
        raise ValueError(f"unknown mode {mode}")
    if not (np.sort(tgt, axis=2) == np.arange(L)).all():
        raise ContractError("targets must permute each line")
    if mode == "faster" and L < 3:
        mode = "fast"
    if L < 2 or (tgt == np.arange(L)).all():
        return occ[None].copy()
    histories = []
    for s in range(S):
        for start, h, kind in _bands(P, mode):
            if kind == "wide" and L < 3:
                raise ContractError("a two-line band needs lines of length at least three")
            histories.append((s, start, h, _band_history(occ[s, start:start + h], tgt[s, start:start + h], kind)))
    T = max(len(hist) for *_, hist in histories) - 1
    out = np.empty((T + 1, S, P, L), dtype=occ.dtype)
    for s, start, h, hist in histories:
        arr = np.stack(hist)
        out[:, s, start:start + h] = _pad(arr, T)
    return out


# ------------------------------------------------------------ highway engine

def highway_shuffle(pos: np.ndarray, target: np.ndarray, axis: int, lane_axis: int) -> np.ndarray:
    """Move robots along ``axis`` to ``target`` using the two lanes beside their line.

    A robot heading toward smaller coordinates steps to the lane at ``-1`` on
    ``lane_axis``, the others to ``+1``; all travel without stopping and
    re-enter the center line at their target. The caller guarantees both lanes
    are free and targets form a bijection within each line.
    """
    pos = np.asarray(pos, dtype=np.int64)
    target = np.asarray(target, dtype=np.int64)
    p = pos[:, axis]
    d = np.abs(target - p)
    if len(p) == 0 or d.max() == 0:
        return pos[None].copy()
    T = int(d.max()) + 2
    sgn = np.sign(target - p)
    t = np.arange(T + 1)[:, None]
    along = p[None] + sgn[None] * np.clip(t - 1, 0, d[None])
    in_lane = (t >= 1) & (t <= d[None] + 1) & (d[None] > 0)
    traj = np.repeat(pos[None], T + 1, axis=0)
    traj[:, :, axis] = along
    traj[:, :, lane_axis] += np.where(in_lane, sgn[None], 0)
    return traj


# ------------------------------------------------------- linear merge engine

def _merge_levels(L: int) -> list[list[tuple[int, int, int]]]:
    levels: dict[int, list] = {}

    def rec(lo, hi, depth):
        if hi - lo <= 1:
            return
        mid = lo + (hi - lo) // 2
        levels.setdefault(depth, []).append((lo, mid, hi))
        rec(lo, mid, depth + 1)
        rec(mid, hi, depth + 1)

    rec(0, L, 0)
    return [levels[d] for d in sorted(levels, reverse=True)]


def _merge_line(tgt: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Along-line position and lane flag over time for robots indexed by start position."""
    L = len(tgt)
    arr = np.arange(L)
    key = np.asarray(tgt)
    along_parts = [np.arange(L)[None]]
    lane_parts = [np.zeros((1, L), dtype=np.int64)]
    pos_of = np.arange(L)
    for level in _merge_levels(L):
        plans = []
        dur = 0
        for lo, mid, hi in level:
            seg = arr[lo:hi].copy()
            new_order = seg[np.argsort(key[seg], kind="stable")]
            newpos = np.empty(L, dtype=np.int64)
            newpos[new_order] = np.arange(lo, hi)
            p = pos_of[seg]
            qq = newpos[seg]
            left_movers = (p >= mid) & (qq < p)
            right_movers = (p < mid) & (qq > p)
            lp, lq = p[left_movers], qq[left_movers]
            rp, rq = p[right_movers], qq[right_movers]
            # last time a leftward robot sits on each cell it passes
            if len(rp):
                passing = (lq[None, :] < rq[:, None]) & (rq[:, None] <= lp[None, :])
                last = np.where(passing, lp[None, :] - rq[:, None] + 1, 1).max(axis=1, initial=1)
                enter = np.maximum(rq - rp + 2, last)
            else:
                enter = np.zeros(0, dtype=np.int64)
            seg_dur = max(int((lp - lq).max(initial=0)), int(enter.max(initial=0)))
            dur = max(dur, seg_dur)
            plans.append((seg, left_movers, right_movers, enter, newpos, new_order, lo, hi))
        if dur == 0:
            continue
        t = np.arange(1, dur + 1)[:, None]
        along = np.repeat(pos_of[None], dur, axis=0)
        lane = np.zeros((dur, L), dtype=np.int64)
        for seg, lm, rm, enter, newpos, new_order, lo, hi in plans:
            robots = seg[lm]
            p, q = pos_of[robots], newpos[robots]
            along[:, robots] = np.maximum(p[None] - t, q[None])
            robots = seg[rm]
            p, q = pos_of[robots], newpos[robots]
            moving = np.minimum(p[None] + t - 1, q[None])
            entered = t >= enter[None]
            along[:, robots] = np.where(entered, q[None], moving)
            lane[:, robots] = np.where(entered, 0, 1)
            arr[lo:hi] = new_order
            pos_of[new_order] = np.arange(lo, hi)
        along_parts.append(along)
        lane_parts.append(lane)
    return np.concatenate(along_parts), np.concatenate(lane_parts)


def linear_merge_shuffle(pos: np.ndarray, target: np.ndarray, axis: int, sec_axis: int,
                         sec_offset: int = 1) -> np.ndarray:
    """Permute full primary lines along ``axis`` using the empty neighbor line.

    The secondary line lies at ``sec_offset`` along ``sec_axis``. Every primary
    line touched must be fully occupied over ``1..len``.
    """
    pos = np.asarray(pos, dtype=np.int64)
    target = np.asarray(target, dtype=np.int64)
    if len(pos) == 0 or (target == pos[:, axis]).all():
        return pos[None].copy()
    other = np.delete(pos, axis, axis=1)
    lines, line_of = np.unique(other, axis=0, return_inverse=True)
    line_of = line_of.ravel()
    results = []
    for li in range(len(lines)):
        members = np.flatnonzero(line_of == li)
        p = pos[members, axis]
        L = len(members)
        if sorted(p.tolist()) != list(range(1, L + 1)):
            raise ContractError("primary line must be fully occupied from position 1")
        if sorted(target[members].tolist()) != list(range(1, L + 1)):
            raise ContractError("targets must permute the primary line")
        tgt = np.empty(L, dtype=np.int64)
        tgt[p - 1] = target[members] - 1
        along, lane = _merge_line(tgt)
        robot_at = np.empty(L, dtype=np.int64)
        robot_at[p - 1] = members
        results.append((robot_at, along, lane))
    T = max(a.shape[0] for _, a, _ in results) - 1
    traj = np.repeat(pos[None], T + 1, axis=0)
    for robot_at, along, lane in results:
        along, lane = _pad(along, T), _pad(lane, T)
        traj[:, robot_at, axis] = along + 1
        traj[:, robot_at, sec_axis] += lane * sec_offset
    return traj


# ---------------------------------------------------------- layout changes

# Cell-local (row, col) paths from the horizontal slot with offset ``a`` to the
# matching vertical slot, keyed by (regime, column band width).
_TO_VERTICAL = {
    ("third", 3): {0: ((1, 0), (0, 0), (0, 1)), 1: ((1, 1), (1, 1), (1, 1)), 2: ((1, 2), (2, 2), (2, 1))},
    ("third", 2): {0: ((1, 0), (0, 0), (0, 0)), 1: ((1, 1), (2, 1), (2, 0))},
    ("half", 2): {0: ((0, 0), (0, 0), (0, 0)), 1: ((0, 1), (1, 1), (1, 0))},
}


def column_bands(regime: str, m2: int) -> list[tuple[int, int]]:
    """Partition columns ``1..m2`` into ``(first column, width)`` bands.

    Third regime uses 3-wide bands plus one or two 2-wide bands when ``m2`` is
    not a multiple of three; half regime uses 2-wide bands; full uses single columns.
    """
    if regime == "full":
        return [(y, 1) for y in range(1, m2 + 1)]
    if regime == "half":
        if m2 % 2:
            raise ContractError("half regime needs an even number of columns")
        return [(y, 2) for y in range(1, m2 + 1, 2)]
    if m2 < 2:
        raise ContractError("third regime needs at least two columns")
    twos = {0: 0, 1: 2, 2: 1}[m2 % 3]
    threes = (m2 - 2 * twos) // 3
    widths = [3] * threes + [2] * twos
    out, y = [], 1
    for w in widths:
        out.append((y, w))
        y += w
    return out


def convert_centered(pos: np.ndarray, regime: str, to_vertical: bool, m2: int | None = None) -> np.ndarray:
    """Switch robots between the horizontal and vertical centered layouts.

    Horizontal: robots on the center row of each band (row ``3j+2`` for the
    third regime, row ``2j+1`` for the half regime). Vertical: robots on the
    slot column of each column band. Moves stay inside each cell and take two
    steps; a single frame is returned when nobody moves.
    """
    pos = np.asarray(pos, dtype=np.int64)
    if regime not in ("third", "half"):
        raise ValueError(f"no centered conversion for regime {regime}")
    if len(pos) == 0:
        return pos[None].copy()
    h = 3 if regime == "third" else 2
    if m2 is None:
        m2 = int(pos[:, 1].max())
        m2 += (-m2) % h
    bands = column_bands(regime, m2)
    first = np.zeros(m2 + 2, dtype=np.int64)
    width = np.zeros(m2 + 2, dtype=np.int64)
    for c, w in bands:
        first[c:c + w] = c
        width[c:c + w] = w
    c0 = first[pos[:, 1]]
    w = width[pos[:, 1]]
    r0 = (pos[:, 0] - 1) // h * h + 1
    lx, ly = pos[:, 0] - r0, pos[:, 1] - c0
    steps = np.empty((len(pos), 3, 2), dtype=np.int64)
    for (reg, bw), paths in _TO_VERTICAL.items():
        if reg != regime:
            continue
        sel = w == bw
        if not sel.any():
            continue
        table = np.array([paths[a] for a in range(bw)])
        if to_vertical:
            a = ly[sel]
            ok = lx[sel] == table[0, 0, 0]
        else:
            # recover the offset from the vertical cell
            ends = {tuple(p[-1]): a for a, p in paths.items()}
            a = np.array([ends.get((int(x), int(y)), -1) for x, y in zip(lx[sel], ly[sel])])
            ok = a >= 0
        if not ok.all():
            raise ContractError("robots are not in the expected centered layout")
        st = table[a]
        steps[sel] = st if to_vertical else st[:, ::-1]
    if (steps[:, 0] == steps[:, -1]).all():
        return pos[None].copy()
    traj = np.repeat(pos[None], 3, axis=0)
    traj[:, :, 0] = r0[None] + steps[:, :, 0].T
    traj[:, :, 1] = c0[None] + steps[:, :, 1].T
    return traj


@lru_cache(maxsize=None)
def _cell_table(size: int, slot_cells: tuple[tuple[int, int], ...]) -> dict:
    """Shortest joint plans moving any occupancy of a cell onto its slot cells."""
    cells = [(r, c) for r in range(size) for c in range(size)]
    nbr = {v: [v] + [w for w in cells if abs(w[0] - v[0]) + abs(w[1] - v[1]) == 1] for v in cells}
    slots = frozenset(slot_cells)
    table = {}
    for k in range(len(slot_cells) + 1):
        for occ in itertools.combinations(cells, k):
            table[occ] = _cell_bfs(occ, slots, nbr)
    return table


def _cell_bfs(start, slots, nbr):
    from collections import deque

    if set(start) <= slots:
        return [start]
    seen = {start: None}
    queue = deque([start])
    while queue:
        state = queue.popleft()
        for nxt in itertools.product(*(nbr[v] for v in state)):
            if len(set(nxt)) < len(nxt) or nxt in seen:
                continue
            if any(nxt[i] == state[j] and nxt[j] == state[i] for i in range(len(state)) for j in range(i)):
                continue
            seen[nxt] = state
            if set(nxt) <= slots:
                path = [nxt]
                while seen[path[-1]] is not None:
                    path.append(seen[path[-1]])
                return path[::-1]
            queue.append(nxt)
    raise ContractError("cell cannot be centered")


def balanced_to_centered(pos: np.ndarray, regime: str = "third") -> np.ndarray:
    """Move a balanced configuration onto the vertical slots of its cells.

    Balanced means at most three robots per 3x3 cell (two per 2x2 cell in the
    half regime). Each cell is solved on its own by a joint search over its
    robots, so moves never cross cell borders.
    """
    pos = np.asarray(pos, dtype=np.int64)
    size = 3 if regime == "third" else 2
    col = 1 if regime == "third" else 0
    table = _cell_table(size, tuple((r, col) for r in range(size)))
    cell_id = np.stack([(pos[:, 0] - 1) // size, (pos[:, 1] - 1) // size], axis=1)
    keys, inv = np.unique(cell_id, axis=0, return_inverse=True)
    inv = inv.ravel()
    plans = []
    for ci in range(len(keys)):
        members = np.flatnonzero(inv == ci)
        if len(members) > size:
            raise ContractError("cell holds more robots than its slot capacity")
        local = [(int(pos[i, 0] - 1) % size, int(pos[i, 1] - 1) % size) for i in members]
        order = sorted(range(len(members)), key=lambda j: local[j])
        occ = tuple(local[j] for j in order)
        plans.append((members[order], keys[ci], table[occ]))
    T = max(len(p) for *_, p in plans) - 1
    traj = np.repeat(pos[None], T + 1, axis=0)
    for members, key, path in plans:
        arr = _pad(np.array(path, dtype=np.int64), T)
        traj[:, members, 0] = key[0] * size + 1 + arr[:, :, 0]
        traj[:, members, 1] = key[1] * size + 1 + arr[:, :, 1]
    return traj


# ------------------------------------------------------------------ layouts

def _merge_parallel(parts: list[tuple[np.ndarray, np.ndarray]], pos: np.ndarray) -> np.ndarray:
    """Combine trajectories of disjoint robot groups, padding to the longest."""
    T = max((tr.shape[0] for _, tr in parts), default=1) - 1
    out = np.repeat(np.asarray(pos, dtype=np.int64)[None], T + 1, axis=0)
    for members, tr in parts:
        out[:, members] = _pad(tr, T)
    return out


@dataclass(frozen=True)
class CenteredLayout:
    """Abstract table of a density regime embedded in the grid.

    The table has one row per band and one column per home slot of a band.
    Home slots lie on the band's center row: row ``3j+2`` (third regime),
    ``2j+1`` (half regime) or every row (full regime). In 3D the table repeats
    in every depth plane. Column shuffles run in the vertical layout, where the
    robots of each column band stand on its slot column.
    """

    regime: str
    dims: tuple[int, ...]
    holes: bool = False
    mode: str = "fast"

    def __post_init__(self):
        m1, m2 = self.dims[:2]
        h = {"third": 3, "half": 2, "full": 1}.get(self.regime)
        if h is None:
            raise ValueError(f"unknown regime {self.regime}")
        if m1 % h:
            raise ContractError(f"{self.regime} regime needs the row count divisible by {h}")
        column_bands(self.regime, m2)
        if self.holes and (self.regime != "third" or m2 % 3):
            raise ContractError("obstacles need the third regime with both dimensions divisible by 3")
        if self.regime == "full" and (m1 < 2 or m2 < 2 or (m1 == 2 and m2 == 2)):
            raise ContractError("full regime needs a grid larger than 2x2")
        if self.regime == "full" and sorted((m1, m2)) == [2, 5]:
            # a 2-line band would need lines of length three
            raise ContractError("full regime cannot band a 2x5 grid")
        if self.regime == "half" and (m1 < 2 or m2 < 2):
            raise ContractError("half regime needs at least two rows and columns")

    @property
    def band_height(self) -> int:
        return {"third": 3, "half": 2, "full": 1}[self.regime]

    @property
    def height(self) -> int:
        return self.dims[0] // self.band_height

    @property
    def cols(self) -> np.ndarray:
        """1-based grid columns of the table columns."""
        y = np.arange(1, self.dims[1] + 1)
        if self.holes:
            y = y[(y - 1) % 3 != 1]
        return y

    @property
    def width(self) -> int:
        return len(self.cols)

    @property
    def planes(self) -> int:
        return self.dims[2] if len(self.dims) == 3 else 1

    @property
    def narrow_columns(self) -> np.ndarray:
        """Table columns whose column shuffle runs as a linear merge (2-wide bands)."""
        if self.regime != "third":
            return np.zeros(0, dtype=np.int64)
        narrow = [y for c, w in column_bands("third", self.dims[1]) if w == 2 for y in range(c, c + w)]
        return np.flatnonzero(np.isin(self.cols, narrow))

    def home_row(self, j: np.ndarray) -> np.ndarray:
        h = self.band_height
        return np.asarray(j) * h + (2 if h == 3 else 1)

    def slots(self) -> np.ndarray:
        """All home slot cells, ordered by plane, band, column."""
        z, j, y = np.meshgrid(np.arange(self.planes) + 1, np.arange(self.height), self.cols, indexing="ij")
        x = self.home_row(j)
        if len(self.dims) == 3:
            return np.stack([x.ravel(), y.ravel(), z.ravel()], axis=1)
        return np.stack([x.ravel(), y.ravel()], axis=1)

    def abstract(self, pos: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """(band, table column) of robots standing on home slots."""
        pos = np.asarray(pos)
        h = self.band_height
        j = (pos[:, 0] - 1) // h
        k = np.searchsorted(self.cols, pos[:, 1])
        ok = (self.home_row(j) == pos[:, 0]) & (k < self.width)
        ok &= self.cols[np.minimum(k, self.width - 1)] == pos[:, 1]
        if not ok.all():
            raise ContractError("robot is not on a home slot")
        return j, k

    def cell(self, j: np.ndarray, k: np.ndarray, z: np.ndarray | None = None) -> np.ndarray:
        parts = [self.home_row(j), self.cols[np.asarray(k)]]
        if len(self.dims) == 3:
            parts.append(np.asarray(z))
        return np.stack(parts, axis=1)

    # -- shuffles over the whole table --------------------------------------

    def row_shuffle(self, pos: np.ndarray, target_k: np.ndarray) -> np.ndarray:
        """Every robot keeps its band and moves to table column ``target_k``."""
        pos = np.asarray(pos, dtype=np.int64)
        goal_y = self.cols[np.asarray(target_k)]
        if (goal_y == pos[:, 1]).all():
            return pos[None].copy()
        if self.regime == "third":
            return highway_shuffle(pos, goal_y, axis=1, lane_axis=0)
        if self.regime == "half":
            return linear_merge_shuffle(pos, goal_y, axis=1, sec_axis=0)
        return self._odd_even(pos, goal_y, axis=1)

    def col_shuffle(self, pos: np.ndarray, target_j: np.ndarray) -> np.ndarray:
        """Every robot keeps its table column and moves to band ``target_j``."""
        pos = np.asarray(pos, dtype=np.int64)
        target_j = np.asarray(target_j)
        j, _ = self.abstract(pos)
        if (j == target_j).all():
            return pos[None].copy()
        if self.regime == "full":
            return self._odd_even(pos, target_j + 1, axis=0)
        m2 = self.dims[1]
        down = convert_centered(pos, self.regime, True, m2)
        vert = down[-1]
        h = self.band_height
        goal_x = target_j * h + (vert[:, 0] - j * h)
        bands = column_bands(self.regime, m2)
        band_of = np.zeros(m2 + 1, dtype=np.int64)
        for b, (c, w) in enumerate(bands):
            band_of[c:c + w] = b
        b_idx = band_of[pos[:, 1]]
        widths = np.array([w for _, w in bands])[b_idx]
        parts = []
        hw = widths == 3
        if hw.any():
            members = np.flatnonzero(hw)
            parts.append((members, highway_shuffle(vert[members], goal_x[members], axis=0, lane_axis=1)))
        lm = ~hw
        if lm.any():
            members = np.flatnonzero(lm)
            parts.append((members, self._merge_with_phantoms(vert[members], goal_x[members])))
        mid = _merge_parallel(parts, vert)
        up = convert_centered(mid[-1], self.regime, False, m2)
        return np.concatenate([down, mid[1:], up[1:]])

    def _merge_with_phantoms(self, vert: np.ndarray, goal_x: np.ndarray) -> np.ndarray:
        """Linear merge along slot columns, padding unused positions with phantoms."""
        m1 = self.dims[0]
        lines = np.unique(np.delete(vert, 0, axis=1), axis=0)
        ph_pos, ph_goal = [], []
        for line in lines:
            on = (np.delete(vert, 0, axis=1) == line).all(axis=1)
            used = set(vert[on, 0].tolist())
            wanted = set(goal_x[on].tolist())
            free_now = [x for x in range(1, m1 + 1) if x not in used]
            free_goal = [x for x in range(1, m1 + 1) if x not in wanted]
            for a, b in zip(free_now, free_goal):
                ph_pos.append(np.insert(line, 0, a))
                ph_goal.append(b)
        if ph_pos:
            allpos = np.concatenate([vert, np.array(ph_pos)])
            allgoal = np.concatenate([goal_x, np.array(ph_goal)])
        else:
            allpos, allgoal = vert, goal_x
        traj = linear_merge_shuffle(allpos, allgoal, axis=0, sec_axis=1)
        return traj[:, : len(vert)]

    def depth_shuffle(self, pos: np.ndarray, target_z: np.ndarray) -> np.ndarray:
        """Permute robots along depth within their ``(x, y)`` column."""
        pos = np.asarray(pos, dtype=np.int64)
        target_z = np.asarray(target_z)
        if len(self.dims) != 3:
            raise ContractError("depth shuffles need a 3D grid")
        if (target_z == pos[:, 2]).all():
            return pos[None].copy()
        if self.regime == "third":
            return highway_shuffle(pos, target_z, axis=2, lane_axis=0)
        if self.regime == "half":
            return linear_merge_shuffle(pos, target_z, axis=2, sec_axis=0)
        return self._odd_even(pos, target_z, axis=2)

    def _odd_even(self, pos: np.ndarray, goal: np.ndarray, axis: int) -> np.ndarray:
        """Full-density shuffle along ``axis``; sheets are planes across the other axes."""
        D = len(self.dims)
        n = len(pos)
        if n != math.prod(self.dims):
            raise ContractError("full regime needs every cell occupied")
        rest = [a for a in range(D) if a != axis]
        perp = rest[0]
        order = [a for a in rest if a != perp] + [perp, axis]
        shape = [self.dims[a] for a in order]
        occ = np.full(shape, -1, dtype=np.int64)
        tgt = np.zeros(shape, dtype=np.int64)
        idx = tuple(pos[:, a] - 1 for a in order)
        occ[idx] = np.arange(n)
        tgt[idx] = goal - 1
        if D == 2:
            occ, tgt = occ[None], tgt[None]
        hist = odd_even_shuffle(occ, tgt, self.mode)
        T1 = hist.shape[0]
        where = np.argsort(hist.reshape(T1, -1), axis=1)
        coords = np.unravel_index(where, hist.shape[1:])
        traj = np.empty((T1, n, D), dtype=np.int64)
        shift = 1 if D == 2 else 0
        for i, a in enumerate(order):
            traj[:, :, a] = coords[i + shift] + 1
        return traj
