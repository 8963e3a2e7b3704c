"""Grid workspace, robot configurations, plans, validation and metrics.

Coordinates are 1-based throughout: ``x`` is the row in ``[1, m1]``, ``y`` the
column in ``[1, m2]`` and, for 3D grids, ``z`` the depth in ``[1, m3]``.
Plans are stored time-major as an integer array of shape ``(T + 1, n, D)``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np
from scipy import ndimage

VIOLATION_KINDS = ("vertex", "swap", "adjacency", "endpoint", "obstacle")
MAX_REPORTED = 200


class StructuralError(ValueError):
    """Plan and instance do not describe the same robots or dimensions."""


class InvalidPlanError(ValueError):
    def __init__(self, report: "ValidationReport"):
        self.report = report
        super().__init__(f"plan is invalid: {report.summary()}")


@dataclass(frozen=True)
class GridSpace:
    dims: tuple[int, ...]
    obstacles: frozenset = frozenset()

    def __post_init__(self):
        dims = tuple(int(d) for d in self.dims)
        if len(dims) not in (2, 3) or min(dims) < 1:
            raise ValueError(f"dims must be 2 or 3 positive integers, got {self.dims}")
        obstacles = frozenset(tuple(int(c) for c in o) for o in self.obstacles)
        for o in obstacles:
            if len(o) != len(dims) or any(not 1 <= c <= d for c, d in zip(o, dims)):
                raise ValueError(f"obstacle {o} out of bounds for {dims}")
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "obstacles", obstacles)
        free = self.free_mask()
        if free.any():
            _, ncomp = ndimage.label(free)
            if ncomp > 1:
                raise ValueError("free cells of the grid are not connected")

    @property
    def m1(self) -> int:
        return self.dims[0]

    @property
    def m2(self) -> int:
        return self.dims[1]

    @property
    def m3(self) -> int | None:
        return self.dims[2] if len(self.dims) == 3 else None

    @property
    def ndim(self) -> int:
        return len(self.dims)

    @property
    def n_cells(self) -> int:
        return int(np.prod(self.dims))

    @property
    def n_free(self) -> int:
        return self.n_cells - len(self.obstacles)

    def obstacle_mask(self) -> np.ndarray:
        """Boolean array of shape ``dims`` (0-based indexing), True on obstacles."""
        mask = np.zeros(self.dims, dtype=bool)
        if self.obstacles:
            idx = np.array(sorted(self.obstacles)) - 1
            mask[tuple(idx.T)] = True
        return mask

    def free_mask(self) -> np.ndarray:
        return ~self.obstacle_mask()

    def flat_index(self, cells: np.ndarray) -> np.ndarray:
        """Row-major 0-based index of 1-based cells; works on any leading shape."""
        cells = np.asarray(cells, dtype=np.int64)
        out = np.zeros(cells.shape[:-1], dtype=np.int64)
        for axis, d in enumerate(self.dims):
            out = out * d + (cells[..., axis] - 1)
        return out

    def cells_of(self, flat: np.ndarray) -> np.ndarray:
        flat = np.asarray(flat, dtype=np.int64)
        return np.stack(np.unravel_index(flat, self.dims), axis=-1) + 1

    def in_bounds(self, cells: np.ndarray) -> np.ndarray:
        cells = np.asarray(cells)
        ok = np.ones(cells.shape[:-1], dtype=bool)
        for axis, d in enumerate(self.dims):
            ok &= (cells[..., axis] >= 1) & (cells[..., axis] <= d)
        return ok

    def free_cells(self) -> np.ndarray:
        """All free cells, 1-based, in row-major order."""
        return np.argwhere(self.free_mask()) + 1

    def edges(self) -> tuple[np.ndarray, np.ndarray]:
        """Undirected edges between free cells as two arrays of flat indices."""
        free = self.free_mask()
        idx = np.arange(self.n_cells).reshape(self.dims)
        us, vs = [], []
        for axis in range(self.ndim):
            lo = [slice(None)] * self.ndim
            hi = [slice(None)] * self.ndim
            lo[axis] = slice(0, -1)
            hi[axis] = slice(1, None)
            ok = free[tuple(lo)] & free[tuple(hi)]
            us.append(idx[tuple(lo)][ok])
            vs.append(idx[tuple(hi)][ok])
        return np.concatenate(us), np.concatenate(vs)

    def bfs_distances(self, sources: np.ndarray) -> np.ndarray:
        """Multi-source shortest-path distance (array of shape ``dims``, -1 if unreachable)."""
        free = self.free_mask()
        dist = np.full(self.dims, -1, dtype=np.int64)
        frontier = np.asarray(sources, dtype=np.int64).reshape(-1, self.ndim) - 1
        if len(frontier) == 0:
            return dist
        dist[tuple(frontier.T)] = 0
        d = 0
        while len(frontier):
            d += 1
            nxt = []
            for axis in range(self.ndim):
                for step in (-1, 1):
                    cand = frontier.copy()
                    cand[:, axis] += step
                    ok = (cand[:, axis] >= 0) & (cand[:, axis] < self.dims[axis])
                    nxt.append(cand[ok])
            cand = np.unique(np.concatenate(nxt), axis=0)
            sel = tuple(cand.T)
            keep = free[sel] & (dist[sel] < 0)
            frontier = cand[keep]
            dist[tuple(frontier.T)] = d
        return dist


def _frozen_array(a, dtype=np.int64) -> np.ndarray:
    a = np.array(a, dtype=dtype)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Instance:
    """Labeled start and goal configurations of ``n`` robots.

    ``starts[i]`` and ``goals[i]`` belong to robot ``ids[i]``; ``virtual[i]``
    marks placeholder robots that are exempt from endpoint checks and metrics.
    """

    space: GridSpace
    starts: np.ndarray
    goals: np.ndarray
    ids: np.ndarray = None
    virtual: np.ndarray = None

    def __post_init__(self):
        D = self.space.ndim
        starts = _frozen_array(self.starts).reshape(-1, D)
        goals = _frozen_array(self.goals).reshape(-1, D)
        n = len(starts)
        if len(goals) != n:
            raise ValueError("starts and goals differ in length")
        ids = _frozen_array(np.arange(1, n + 1) if self.ids is None else self.ids)
        virtual = _frozen_array(np.zeros(n) if self.virtual is None else self.virtual, bool)
        if len(ids) != n or len(virtual) != n or len(set(ids.tolist())) != n:
            raise ValueError("ids/virtual must be unique and match the robot count")
        for name, conf in (("starts", starts), ("goals", goals)):
            if n and not self.space.in_bounds(conf).all():
                raise ValueError(f"{name} contain out-of-bounds cells")
            flat = self.space.flat_index(conf)
            if len(np.unique(flat)) != n:
                raise ValueError(f"{name} are not injective")
            if n and self.space.obstacle_mask().ravel()[flat].any():
                raise ValueError(f"{name} contain obstacle cells")
        if n > self.space.n_free:
            raise ValueError("more robots than free cells")
        object.__setattr__(self, "starts", starts)
        object.__setattr__(self, "goals", goals)
        object.__setattr__(self, "ids", ids)
        object.__setattr__(self, "virtual", virtual)

    @property
    def n(self) -> int:
        return len(self.starts)

    @property
    def n_real(self) -> int:
        return int((~self.virtual).sum())

    @property
    def density(self) -> Fraction:
        return Fraction(self.n, self.space.n_cells)

    def subset(self, mask: np.ndarray) -> "Instance":
        mask = np.asarray(mask, dtype=bool)
        return Instance(self.space, self.starts[mask], self.goals[mask],
                        self.ids[mask], self.virtual[mask])

    def reversed(self) -> "Instance":
        return Instance(self.space, self.goals, self.starts, self.ids, self.virtual)

    def transposed(self) -> "Instance":
        """Swap the roles of the first two axes."""
        perm = [1, 0] + list(range(2, self.space.ndim))
        dims = tuple(self.space.dims[p] for p in perm)
        obstacles = frozenset(tuple(o[p] for p in perm) for o in self.space.obstacles)
        return Instance(GridSpace(dims, obstacles), self.starts[:, perm],
                        self.goals[:, perm], self.ids, self.virtual)


@dataclass(frozen=True, eq=False)
class Plan:
    """Synchronized paths; ``positions[t, i]`` is robot ``ids[i]``'s cell at step ``t``."""

    positions: np.ndarray
    ids: np.ndarray

    def __post_init__(self):
        pos = np.asarray(self.positions)
        if pos.ndim != 3:
            raise StructuralError("positions must have shape (T+1, n, D)")
        pos = np.array(pos, dtype=np.int16 if pos.size and pos.max() < 32767 else np.int32)
        pos.setflags(write=False)
        ids = _frozen_array(self.ids)
        if len(ids) != pos.shape[1]:
            raise StructuralError("ids do not match the number of paths")
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "ids", ids)

    @property
    def horizon(self) -> int:
        return self.positions.shape[0] - 1

    @property
    def n(self) -> int:
        return self.positions.shape[1]

    def path(self, robot_id: int) -> np.ndarray:
        i = int(np.flatnonzero(self.ids == robot_id)[0])
        return self.positions[:, i]

    def reversed(self) -> "Plan":
        return Plan(self.positions[::-1], self.ids)

    def select(self, mask: np.ndarray) -> "Plan":
        return Plan(self.positions[:, np.asarray(mask, dtype=bool)], self.ids[mask])

    def trimmed(self) -> "Plan":
        """Drop trailing steps in which nobody moves."""
        pos = self.positions
        T = pos.shape[0] - 1
        while T > 0 and np.array_equal(pos[T], pos[T - 1]):
            T -= 1
        return Plan(pos[: T + 1], self.ids)

    def transposed(self) -> "Plan":
        perm = [1, 0] + list(range(2, self.positions.shape[2]))
        return Plan(self.positions[:, :, perm], self.ids)


@dataclass
class Violation:
    kind: str
    time: int
    robots: tuple[int, ...]


@dataclass
class ValidationReport:
    violations: list[Violation] = field(default_factory=list)
    counts: dict[str, int] = field(default_factory=dict)

    @property
    def valid(self) -> bool:
        return not self.violations

    def summary(self) -> str:
        if self.valid:
            return "valid"
        return ", ".join(f"{k}={v}" for k, v in sorted(self.counts.items()))

    def add(self, kind: str, times: np.ndarray, robots: Sequence[np.ndarray]):
        times = np.asarray(times)
        if len(times) == 0:
            return
        self.counts[kind] = self.counts.get(kind, 0) + len(times)
        room = MAX_REPORTED - sum(1 for v in self.violations if v.kind == kind)
        for j in range(min(room, len(times))):
            self.violations.append(Violation(kind, int(times[j]), tuple(int(r[j]) for r in robots)))


@dataclass(frozen=True)
class Metrics:
    makespan: int
    soc: int
    lower_bound: int
    optimality_ratio: Fraction | float


def _align(instance: Instance, plan: Plan) -> np.ndarray:
    """Indices into the instance for every plan robot; raises on structural mismatch."""
    if plan.positions.shape[2] != instance.space.ndim:
        raise StructuralError("plan dimension differs from the grid dimension")
    lookup = {int(r): i for i, r in enumerate(instance.ids)}
    try:
        idx = np.array([lookup[int(r)] for r in plan.ids], dtype=np.int64)
    except KeyError as e:
        raise StructuralError(f"plan robot {e.args[0]} is not in the instance") from None
    missing = set(np.flatnonzero(~instance.virtual).tolist()) - set(idx.tolist())
    if missing:
        raise StructuralError(f"plan lacks paths for robots {sorted(instance.ids[list(missing)].tolist())[:10]}")
    return idx


def validate_plan(instance: Instance, plan: Plan) -> ValidationReport:
    """Check vertex, swap, adjacency, obstacle and endpoint conditions."""
    idx = _align(instance, plan)
    space = instance.space
    report = ValidationReport()
    pos = plan.positions.astype(np.int64)
    T1, n, _ = pos.shape
    ids = plan.ids
    if n == 0:
        return report

    inside = space.in_bounds(pos)
    if not inside.all():
        t, i = np.nonzero(~inside)
        report.add("obstacle", t, [ids[i]])
        pos = np.where(inside[..., None], pos, 1)
    flat = space.flat_index(pos)

    hit = space.obstacle_mask().ravel()[flat] & inside
    t, i = np.nonzero(hit)
    report.add("obstacle", t, [ids[i]])

    order = np.argsort(flat, axis=1, kind="stable")
    srt = np.take_along_axis(flat, order, axis=1)
    dup = srt[:, 1:] == srt[:, :-1]
    t, j = np.nonzero(dup)
    report.add("vertex", t, [ids[order[t, j]], ids[order[t, j + 1]]])

    if T1 > 1:
        step = np.abs(np.diff(pos, axis=0)).sum(axis=2)
        t, i = np.nonzero(step > 1)
        report.add("adjacency", t + 1, [ids[i]])

        moving = flat[1:] != flat[:-1]
        t, i = np.nonzero(moving)
        a, b = flat[t, i], flat[t + 1, i]
        N = space.n_cells
        fwd = (t.astype(np.int64) * N + a) * N + b
        rev = (t.astype(np.int64) * N + b) * N + a
        srt_fwd = np.argsort(fwd)
        loc = np.searchsorted(fwd[srt_fwd], rev)
        loc = np.minimum(loc, len(fwd) - 1)
        match = fwd[srt_fwd][loc] == rev
        mine = match & (a < b)
        other = srt_fwd[loc[mine]]
        report.add("swap", t[mine] + 1, [ids[i[mine]], ids[i[other]]])

    real = ~instance.virtual[idx]
    bad_start = real & (pos[0] != instance.starts[idx]).any(axis=1)
    bad_goal = real & (pos[-1] != instance.goals[idx]).any(axis=1)
    report.add("endpoint", np.zeros(bad_start.sum(), int), [ids[bad_start]])
    report.add("endpoint", np.full(bad_goal.sum(), T1 - 1), [ids[bad_goal]])
    return report


def makespan_lower_bound(instance: Instance, obstacle_aware: bool = False) -> int:
    """Largest start-goal distance among real robots (Manhattan unless ``obstacle_aware``)."""
    real = ~instance.virtual
    if not real.any():
        return 0
    if not obstacle_aware:
        return int(np.abs(instance.starts[real] - instance.goals[real]).sum(axis=1).max())
    best = 0
    space = instance.space
    for s, g in zip(instance.starts[real], instance.goals[real]):
        best = max(best, int(space.bfs_distances(g[None])[tuple(s - 1)]))
    return best


def arrival_times(plan: Plan) -> np.ndarray:
    """Per robot, the first step from which it rests at its final cell for good."""
    pos = plan.positions
    if pos.shape[0] == 1:
        return np.zeros(pos.shape[1], dtype=np.int64)
    moved = (pos[1:] != pos[:-1]).any(axis=2)
    T = moved.shape[0]
    last = T - np.argmax(moved[::-1], axis=0)
    return np.where(moved.any(axis=0), last, 0).astype(np.int64)


def compute_metrics(instance: Instance, plan: Plan, obstacle_aware: bool = False) -> Metrics:
    report = validate_plan(instance, plan)
    if not report.valid:
        raise InvalidPlanError(report)
    idx = _align(instance, plan)
    real = ~instance.virtual[idx]
    arrive = arrival_times(plan)[real]
    makespan = int(arrive.max()) if len(arrive) else 0
    soc = int(arrive.sum())
    lb = makespan_lower_bound(instance, obstacle_aware)
    if lb == 0:
        ratio = Fraction(1) if makespan == 0 else float("inf")
    else:
        ratio = Fraction(makespan, lb)
    return Metrics(makespan, soc, lb, ratio)


def strip_virtual(instance: Instance, plan: Plan) -> Plan:
    idx = _align(instance, plan)
    return plan.select(~instance.virtual[idx])


# ---------------------------------------------------------------- JSON I/O

def instance_to_dict(instance: Instance) -> dict:
    return {
        "dims": list(instance.space.dims),
        "obstacles": [list(o) for o in sorted(instance.space.obstacles)],
        "robots": [
            {"id": int(r), "start": s.tolist(), "goal": g.tolist(), "virtual": bool(v)}
            for r, s, g, v in zip(instance.ids, instance.starts, instance.goals, instance.virtual)
        ],
    }


def instance_from_dict(data: dict) -> Instance:
    space = GridSpace(tuple(data["dims"]), frozenset(tuple(o) for o in data.get("obstacles", [])))
    robots = data.get("robots", [])
    D = space.ndim
    return Instance(
        space,
        np.array([r["start"] for r in robots], dtype=np.int64).reshape(-1, D),
        np.array([r["goal"] for r in robots], dtype=np.int64).reshape(-1, D),
        np.array([r["id"] for r in robots], dtype=np.int64),
        np.array([bool(r.get("virtual", False)) for r in robots]),
    )


def plan_to_dict(plan: Plan) -> dict:
    return {
        "horizon": plan.horizon,
        "paths": {str(int(r)): plan.positions[:, i].tolist() for i, r in enumerate(plan.ids)},
    }


def plan_from_dict(data: dict, ndim: int | None = None) -> Plan:
    paths = data["paths"]
    T = int(data["horizon"])
    ids = [int(k) for k in paths]
    if not ids:
        return Plan(np.zeros((T + 1, 0, ndim or 2), dtype=np.int64), np.zeros(0, dtype=np.int64))
    arr = np.array([paths[k] for k in paths], dtype=np.int64)
    if arr.ndim != 3 or arr.shape[1] != T + 1:
        raise StructuralError("every path must have horizon + 1 cells")
    return Plan(arr.transpose(1, 0, 2), np.array(ids))


def dumps(obj: dict) -> str:
    return json.dumps(obj, separators=(",", ":"))


def load_instance(path) -> Instance:
    with open(path) as fh:
        return instance_from_dict(json.load(fh))


def load_plan(path) -> Plan:
    with open(path) as fh:
        return plan_from_dict(json.load(fh))


def concat_fragments(fragments: Iterable[np.ndarray]) -> np.ndarray:
    """Join fragments that share boundary states (last of one == first of next)."""
    frags = [np.asarray(f) for f in fragments]
    out = [frags[0]]
    last = frags[0][-1]
    for f in frags[1:]:
        if not np.array_equal(last, f[0]):
            raise ValueError("fragments do not connect")
        out.append(f[1:])
        last = f[-1]
    return np.concatenate(out, axis=0)
