"""Optimal parallel-move solutions for per-row permutations on tiny full blocks.

On a fully occupied block the only legal joint moves are rotations along
vertex-disjoint simple cycles. A move is stored as a gather array ``src`` over
the row-major cells of the block: after the move, cell ``p`` holds the robot
that was at ``src[p]``.

Tables for blocks with at most nine cells come from a breadth-first sweep over
the full joint state space and are cached on disk. The 3x4 block is handled on
demand with a bounded meet-in-the-middle search.
"""

from __future__ import annotations

import itertools
import math
import os
import struct
import threading
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

import numpy as np

CACHE_MAGIC = b"GRBT"
CACHE_VERSION = 1
CACHE_ENV = "GRIDMRPP_CACHE"
SUPPORTED = {(2, 2), (3, 2), (2, 3), (4, 2), (2, 4), (3, 3), (3, 4)}
MITM_BALL_LIMIT = 400_000

_cache_dir: Path | None = None
_lock = threading.Lock()


def set_cache_dir(path) -> None:
    global _cache_dir
    _cache_dir = Path(path) if path is not None else None
    _load_table.cache_clear()


def cache_dir() -> Path:
    if _cache_dir is not None:
        return _cache_dir
    env = os.environ.get(CACHE_ENV)
    if env:
        return Path(env)
    return Path.home() / ".cache" / "gridmrpp"


@dataclass(frozen=True)
class BlockSolution:
    shape: tuple[int, int]
    moves: tuple[int, ...]

    @property
    def length(self) -> int:
        return len(self.moves)

    def steps(self) -> list[np.ndarray]:
        table = legal_parallel_moves(self.shape)
        return [table[m] for m in self.moves]


def _check_shape(shape) -> tuple[int, int]:
    shape = (int(shape[0]), int(shape[1]))
    if shape not in SUPPORTED:
        raise ValueError(f"unsupported block shape {shape}")
    return shape


def _simple_cycles(rows: int, cols: int) -> list[tuple[int, ...]]:
    """All simple cycles of the grid graph, each listed once with a fixed orientation."""
    n = rows * cols
    nbrs = [[] for _ in range(n)]
    for r in range(rows):
        for c in range(cols):
            p = r * cols + c
            if c + 1 < cols:
                nbrs[p].append(p + 1)
                nbrs[p + 1].append(p)
            if r + 1 < rows:
                nbrs[p].append(p + cols)
                nbrs[p + cols].append(p)
    cycles = []

    def dfs(start, path, seen):
        for w in nbrs[path[-1]]:
            if w == start and len(path) >= 4 and path[1] < path[-1]:
                cycles.append(tuple(path))
            elif w > start and w not in seen:
                seen.add(w)
                path.append(w)
                dfs(start, path, seen)
                path.pop()
                seen.discard(w)

    for s in range(n):
        dfs(s, [s], {s})
    return sorted(cycles, key=lambda c: (len(c), c))


@lru_cache(maxsize=None)
def _moves(shape: tuple[int, int]) -> tuple[np.ndarray, ...]:
    rows, cols = shape
    n = rows * cols
    cycles = _simple_cycles(rows, cols)
    sets = []

    def extend(chosen, used, start):
        for j in range(start, len(cycles)):
            if used.isdisjoint(cycles[j]):
                nxt = chosen + [j]
                sets.append(nxt)
                extend(nxt, used | set(cycles[j]), j + 1)

    extend([], set(), 0)
    moves = []
    for group in sets:
        for flips in itertools.product((False, True), repeat=len(group)):
            src = np.arange(n, dtype=np.int64)
            for j, flip in zip(group, flips):
                cyc = cycles[j][::-1] if flip else cycles[j]
                for a, b in zip(cyc, cyc[1:] + cyc[:1]):
                    src[b] = a
            src.setflags(write=False)
            moves.append(src)
    return tuple(moves)


def legal_parallel_moves(shape) -> list[np.ndarray]:
    """Every union of disjoint cycle rotations on a full ``rows x cols`` block."""
    return list(_moves(_check_shape(shape)))


# ------------------------------------------------------------- patterns

def _perm_rank(perm) -> int:
    perm = list(perm)
    rank = 0
    for i, v in enumerate(perm):
        smaller = sum(1 for w in perm[i + 1:] if w < v)
        rank += smaller * math.factorial(len(perm) - 1 - i)
    return rank


def pattern_id(shape, pattern) -> int:
    cols = shape[1]
    pid = 0
    for perm in pattern:
        pid = pid * math.factorial(cols) + _perm_rank(perm)
    return pid


def all_patterns(shape) -> list[tuple[tuple[int, ...], ...]]:
    rows, cols = shape
    perms = list(itertools.permutations(range(cols)))
    return [tuple(p) for p in itertools.product(perms, repeat=rows)]


def pattern_config(shape, pattern) -> np.ndarray:
    """Block configuration realizing ``pattern``: entry ``p`` is the original cell of its robot.

    ``pattern[r][c]`` is the destination column of the robot starting at ``(r, c)``.
    """
    rows, cols = shape
    conf = np.empty(rows * cols, dtype=np.int64)
    for r, perm in enumerate(pattern):
        if sorted(perm) != list(range(cols)):
            raise ValueError(f"row {r} of the pattern is not a permutation")
        for c, d in enumerate(perm):
            conf[r * cols + d] = r * cols + c
    return conf


def apply_moves(shape, moves, conf=None) -> np.ndarray:
    table = legal_parallel_moves(shape)
    conf = np.arange(shape[0] * shape[1]) if conf is None else np.asarray(conf)
    for m in moves:
        conf = conf[table[m]]
    return conf


# ----------------------------------------------------------- exhaustive BFS

def _lehmer_rank(states: np.ndarray) -> np.ndarray:
    k, n = states.shape
    rank = np.zeros(k, dtype=np.int64)
    for i in range(n - 1):
        smaller = (states[:, i + 1:] < states[:, i:i + 1]).sum(axis=1)
        rank += smaller * math.factorial(n - 1 - i)
    return rank


def _bfs_table(shape) -> dict[int, tuple[int, ...]]:
    rows, cols = shape
    n = rows * cols
    moves = _moves(shape)
    wanted = {}
    for pat in all_patterns(shape):
        conf = pattern_config(shape, pat)
        wanted[int(_lehmer_rank(conf[None])[0])] = pattern_id(shape, pat)

    total = math.factorial(n)
    parent = np.full(total, -1, dtype=np.int64)
    via = np.full(total, -1, dtype=np.int16)
    ident = np.arange(n, dtype=np.int8)[None]
    root = int(_lehmer_rank(ident)[0])
    parent[root] = root
    frontier, franks = ident, np.array([root])
    found = {r for r in wanted if r == root}
    while frontier.size and len(found) < len(wanted):
        new_states, new_ranks = [], []
        for mi, src in enumerate(moves):
            nxt = frontier[:, src]
            rk = _lehmer_rank(nxt)
            fresh = parent[rk] < 0
            if not fresh.any():
                continue
            rk, nxt, par = rk[fresh], nxt[fresh], franks[fresh]
            rk, first = np.unique(rk, return_index=True)
            parent[rk] = par[first]
            via[rk] = mi
            new_states.append(nxt[first])
            new_ranks.append(rk)
        if not new_states:
            break
        frontier = np.concatenate(new_states)
        franks = np.concatenate(new_ranks)
        found.update(int(r) for r in franks if int(r) in wanted)

    table = {}
    for rk, pid in wanted.items():
        if parent[rk] < 0:
            continue
        seq = []
        cur = rk
        while cur != root:
            seq.append(int(via[cur]))
            cur = int(parent[cur])
        table[pid] = tuple(reversed(seq))
    return table


# -------------------------------------------------------------- disk cache

def _cache_path(shape) -> Path:
    return cache_dir() / f"block_{shape[0]}x{shape[1]}.bin"


def _write_cache(shape, table: dict[int, tuple[int, ...]]) -> None:
    path = _cache_path(shape)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        buf = bytearray(struct.pack("<4sHBBI", CACHE_MAGIC, CACHE_VERSION, shape[0], shape[1], len(table)))
        for pid in sorted(table):
            seq = table[pid]
            buf += struct.pack(f"<IB{len(seq)}H", pid, len(seq), *seq)
        tmp = path.with_suffix(f".tmp{os.getpid()}")
        tmp.write_bytes(bytes(buf))
        os.replace(tmp, path)
    except OSError:
        pass


def _read_cache(shape) -> dict[int, tuple[int, ...]] | None:
    path = _cache_path(shape)
    try:
        data = path.read_bytes()
    except OSError:
        return None
    try:
        magic, version, r, c, count = struct.unpack_from("<4sHBBI", data, 0)
        if magic != CACHE_MAGIC or version != CACHE_VERSION or (r, c) != tuple(shape):
            return None
        off = struct.calcsize("<4sHBBI")
        table = {}
        n_moves = len(_moves(shape))
        for _ in range(count):
            pid, k = struct.unpack_from("<IB", data, off)
            off += 5
            seq = struct.unpack_from(f"<{k}H", data, off)
            off += 2 * k
            if any(m >= n_moves for m in seq):
                return None
            table[pid] = tuple(seq)
        if off != len(data):
            return None
        return table
    except struct.error:
        return None


def _valid_table(shape, table) -> bool:
    """Cheap integrity check: every stored sequence realizes its pattern."""
    pats = all_patterns(shape)
    if shape != (2, 2) and len(table) != len(pats):
        return False
    for pat in pats:
        seq = table.get(pattern_id(shape, pat))
        if seq is None:
            if shape != (2, 2):
                return False
            continue
        if not np.array_equal(apply_moves(shape, seq), pattern_config(shape, pat)):
            return False
    return True


@lru_cache(maxsize=None)
def _load_table(shape: tuple[int, int]) -> dict[int, tuple[int, ...]]:
    with _lock:
        table = _read_cache(shape)
        if table is None or not _valid_table(shape, table):
            table = _bfs_table(shape)
            _write_cache(shape, table)
        return table


def pattern_table(shape) -> dict[tuple[tuple[int, ...], ...], BlockSolution]:
    """Optimal solutions for every reachable per-row pattern of a block with at most nine cells."""
    shape = _check_shape(shape)
    if shape[0] * shape[1] > 9:
        raise ValueError("exhaustive tables are limited to blocks with at most nine cells")
    table = _load_table(shape)
    out = {}
    for pat in all_patterns(shape):
        seq = table.get(pattern_id(shape, pat))
        if seq is not None:
            out[pat] = BlockSolution(shape, seq)
    return out


def lookup(shape, pid: int) -> tuple[int, ...]:
    """Move sequence for a pattern id; raises ``KeyError`` if the pattern is unreachable."""
    return _load_table(_check_shape(shape))[pid]


# ------------------------------------------------------------ 3x4 search

def _pack(states: np.ndarray) -> np.ndarray:
    key = np.zeros(len(states), dtype=np.int64)
    for i in range(states.shape[1]):
        key = (key << 4) | states[:, i].astype(np.int64)
    return key


@lru_cache(maxsize=1)
def _ball_3x4():
    """Configurations reachable from identity, by depth, until the size budget is hit."""
    shape = (3, 4)
    moves = _moves(shape)
    ident = np.arange(12, dtype=np.int8)[None]
    keys = {int(_pack(ident)[0]): ()}
    layer = [(ident[0], ())]
    depth = 0
    while len(keys) * len(moves) <= MITM_BALL_LIMIT * 8:
        states = np.stack([s for s, _ in layer])
        nxt_layer = []
        for mi, src in enumerate(moves):
            nxt = states[:, src]
            for j, k in enumerate(_pack(nxt).tolist()):
                if k not in keys:
                    keys[k] = layer[j][1] + (mi,)
                    nxt_layer.append((nxt[j], keys[k]))
        depth += 1
        layer = nxt_layer
        if not layer or len(keys) > MITM_BALL_LIMIT:
            break
    states = np.array([[(k >> (4 * (11 - i))) & 15 for i in range(12)] for k in keys], dtype=np.int8)
    return keys, states, depth


_cache_3x4: dict[int, tuple[int, ...]] = {}


def _solve_3x4(pattern) -> tuple[int, ...]:
    shape = (3, 4)
    pid = pattern_id(shape, pattern)
    if pid in _cache_3x4:
        return _cache_3x4[pid]
    target = pattern_config(shape, pattern)
    keys, states, _ = _ball_3x4()
    # target = a[b] with a, b in the ball, so a = target[b^-1]
    inv = np.argsort(states, axis=1)
    cand = target[inv]
    ck = _pack(cand).tolist()
    best = None
    for j, k in enumerate(ck):
        a = keys.get(k)
        if a is None:
            continue
        b = keys[int(_pack(states[j:j + 1])[0])]
        if best is None or len(a) + len(b) < len(best):
            best = a + b
    if best is None or len(best) > 8:
        # sequential fallback: rows 0-1 on a 2x4 block, then rows 1-2
        first = lookup((2, 4), pattern_id((2, 4), pattern[:2]))
        second = lookup((2, 4), pattern_id((2, 4), (tuple(range(4)), pattern[2])))
        fallback = _embed_2x4(first, 0) + _embed_2x4(second, 1)
        if best is None or len(fallback) < len(best):
            best = fallback
    _cache_3x4[pid] = tuple(best)
    return _cache_3x4[pid]


def _embed_2x4(seq, row0: int) -> tuple[int, ...]:
    """Translate 2x4 moves into 3x4 move indices for the rows starting at ``row0``."""
    big = _moves((3, 4))
    index = {tuple(m.tolist()): i for i, m in enumerate(big)}
    out = []
    for m in seq:
        src = np.arange(12)
        small = _moves((2, 4))[m]
        src[row0 * 4: row0 * 4 + 8] = small + row0 * 4
        out.append(index[tuple(src.tolist())])
    return tuple(out)


def solve_pattern(shape, pattern) -> BlockSolution:
    """A shortest move sequence realizing ``pattern`` (bounded search for 3x4)."""
    shape = _check_shape(shape)
    pattern = tuple(tuple(int(v) for v in row) for row in pattern)
    if len(pattern) != shape[0]:
        raise ValueError("pattern needs one permutation per block row")
    pattern_config(shape, pattern)
    if all(row == tuple(range(shape[1])) for row in pattern):
        return BlockSolution(shape, ())
    if shape == (3, 4):
        return BlockSolution(shape, _solve_3x4(pattern))
    try:
        return BlockSolution(shape, lookup(shape, pattern_id(shape, pattern)))
    except KeyError:
        raise ValueError(f"pattern {pattern} is unreachable on a {shape} block") from None
