"""Order-preserving plan compression.

Every vertex keeps the order in which robots enter it in the input plan. The
refined plan is executed step by step: a robot advances along its path (with
waits removed) as soon as it is next in line at its next vertex and that vertex
is free or being vacated in the same step. Chains of robots follow each other;
closed chains of three or more robots rotate together.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .gridcore import Instance, InvalidPlanError, Plan, validate_plan


class DeadlockError(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class VisitOrderIndex:
    """Compressed paths plus per-vertex entry queues.

    ``seq[off[i]:off[i + 1]]`` is robot ``i``'s vertex sequence without waits.
    ``queue[qstart[v]:qstart[v + 1]]`` lists robot indices entering vertex ``v``
    in plan order.
    """

    seq: np.ndarray
    off: np.ndarray
    queue: np.ndarray
    qstart: np.ndarray

    def queue_of(self, v: int) -> list[int]:
        return self.queue[self.qstart[v]:self.qstart[v + 1]].tolist()


def visit_order(flat: np.ndarray, n_vertices: int) -> VisitOrderIndex:
    """Build the index from flat vertex ids of shape ``(T + 1, n)``."""
    T1, n = flat.shape
    enter = np.ones((T1, n), dtype=bool)
    enter[1:] = flat[1:] != flat[:-1]
    t, i = np.nonzero(enter)
    # robot-major order gives the compressed sequences
    by_robot = np.lexsort((t, i))
    seq = flat[t[by_robot], i[by_robot]]
    off = np.concatenate([[0], np.cumsum(np.bincount(i, minlength=n))])
    v = flat[t, i]
    by_vertex = np.lexsort((t, v))
    queue = i[by_vertex]
    qstart = np.concatenate([[0], np.cumsum(np.bincount(v, minlength=n_vertices))])
    return VisitOrderIndex(seq, off, queue, qstart)


def _step(nxt_target: np.ndarray, occ: np.ndarray, order_ok: np.ndarray, n: int) -> np.ndarray:
    """Robots that advance this step, resolving follow chains and rotations."""
    decided = np.zeros(n, dtype=np.int8)  # 0 unknown, 1 move, 2 stay
    decided[~order_ok] = 2
    pos_on_chain = {}
    for i in np.flatnonzero(order_ok):
        if decided[i]:
            continue
        chain = []
        pos_on_chain.clear()
        cur = int(i)
        outcome = 2
        while True:
            if decided[cur]:
                outcome = decided[cur]
                break
            if cur in pos_on_chain:
                start = pos_on_chain[cur]
                cycle = chain[start:]
                if len(cycle) >= 3:
                    decided[cycle] = 1
                    outcome = 1
                else:
                    decided[cycle] = 2
                    outcome = 2
                chain = chain[:start]
                break
            pos_on_chain[cur] = len(chain)
            chain.append(cur)
            j = occ[nxt_target[cur]]
            if j < 0:
                outcome = 1
                break
            cur = int(j)
        if chain:
            decided[chain] = outcome
    return decided == 1


def refine(instance: Instance, plan: Plan, max_steps: int | None = None) -> Plan:
    """Compress ``plan`` while keeping every vertex's entry order."""
    report = validate_plan(instance, plan)
    if not report.valid:
        raise InvalidPlanError(report)
    space = instance.space
    flat = space.flat_index(plan.positions.astype(np.int64))
    T1, n = flat.shape
    if n == 0 or T1 == 1:
        return plan
    index = visit_order(flat, space.n_cells)
    seq, off = index.seq, index.off
    queue, qstart = index.queue, index.qstart
    qptr = qstart[:-1].copy()
    np.add.at(qptr, flat[0], 1)
    k = off[:-1].copy()
    last = off[1:] - 1
    occ = np.full(space.n_cells, -1, dtype=np.int64)
    occ[flat[0]] = np.arange(n)
    cur = flat[0].copy()
    frames = [cur.copy()]
    limit = max_steps or T1 - 1
    while (k < last).any():
        if len(frames) > limit:
            raise DeadlockError("refined plan exceeds the input horizon")
        active = k < last
        target = np.where(active, seq[np.minimum(k + 1, len(seq) - 1)], 0)
        qp = qptr[target]
        head = np.where(qp < qstart[target + 1], queue[np.minimum(qp, len(queue) - 1)], -1)
        order_ok = active & (head == np.arange(n))
        movers = _step(target, occ, order_ok, n)
        if not movers.any():
            raise DeadlockError("no robot can advance")
        mv = np.flatnonzero(movers)
        occ[cur[mv]] = -1
        cur[mv] = target[mv]
        occ[cur[mv]] = mv
        qptr[target[mv]] += 1
        k[mv] += 1
        frames.append(cur.copy())
    out = space.cells_of(np.stack(frames))
    return Plan(out, plan.ids)
