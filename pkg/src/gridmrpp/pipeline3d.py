"""GRH for 3D grids.

Robots are routed onto the home slots of every depth plane, sent along depth to
the plane chosen by a perfect-matching split of their (x, y) classes, fitted in
(x, y) plane by plane, sent along depth to their goal plane and finally routed
from the home slots to their goals.
"""

from __future__ import annotations

import numpy as np

from . import matchings, unlabeled
from .gridcore import Instance, Plan, concat_fragments
from .pipeline2d import (RegimeError, SolverOptions, _fill_to, _finish, _orient, _trivial,
                         table_phases)
from .shuffles import CenteredLayout


def _xy_class(layout: CenteredLayout, pos: np.ndarray) -> np.ndarray:
    j, k = layout.abstract(pos)
    return j * layout.width + k


def matching_xy(layout: CenteredLayout, pos: np.ndarray, goal: np.ndarray,
                options: SolverOptions = SolverOptions()) -> tuple[np.ndarray, np.ndarray]:
    """Choose an intermediate plane per robot and move there along depth.

    Afterwards every plane holds exactly one robot of each goal (x, y) class.
    Returns ``(planes, trajectory)`` with 1-based planes.
    """
    pos = np.asarray(pos, dtype=np.int64)
    goal = np.asarray(goal, dtype=np.int64)
    m3 = layout.planes
    cur = _xy_class(layout, pos)
    tgt = _xy_class(layout, goal)
    C = layout.height * layout.width
    colors = np.empty((C, m3), dtype=np.int64)
    ids = np.empty((C, m3), dtype=np.int64)
    colors[cur, pos[:, 2] - 1] = tgt
    ids[cur, pos[:, 2] - 1] = np.arange(len(pos))
    if options.matching == "lba":
        zs = np.empty_like(ids)
        zg = np.empty_like(ids)
        zs[cur, pos[:, 2] - 1] = pos[:, 2] - 1
        zg[cur, pos[:, 2] - 1] = goal[:, 2] - 1
        ms = matchings.lba_assign(colors, ids, zs, zg)
    else:
        ms = matchings.decompose_into_matchings(matchings.build_color_row_graph(colors, ids), options.seed)
    planes = np.empty(len(pos), dtype=np.int64)
    for c, mt in enumerate(ms.matchings):
        planes[mt[:, 2]] = c + 1
    return planes, layout.depth_shuffle(pos, planes)


def xy_fitting(layout: CenteredLayout, pos: np.ndarray, goal_xy: np.ndarray,
               options: SolverOptions = SolverOptions()) -> np.ndarray:
    """Run the 2D table phases in every plane at once; depth stays fixed."""
    pos = np.asarray(pos, dtype=np.int64)
    goal = np.concatenate([np.asarray(goal_xy, dtype=np.int64)[:, :2], pos[:, 2:]], axis=1)
    return table_phases(layout, pos, goal, options)


def solve_grh3d(instance: Instance, options: SolverOptions = SolverOptions()) -> Plan:
    """3D pipeline for up to one robot per three cells."""
    if instance.space.ndim != 3:
        raise RegimeError("GRH3D needs a 3D grid")
    if instance.space.obstacles:
        raise RegimeError("obstacles are not supported in 3D")
    if options.mode != "fast":
        raise RegimeError("faster mode needs the full regime")
    trivial = _trivial(instance)
    if trivial is not None:
        return trivial
    flip = _orient(instance, options, "third", False)
    inst = instance.transposed() if flip else instance
    layout = CenteredLayout("third", inst.space.dims)
    slots = layout.slots()
    if inst.n > len(slots):
        raise RegimeError(f"{inst.n} robots exceed the {len(slots)} slots of the third regime")
    inst = _fill_to(inst, len(slots), np.random.default_rng(options.seed))
    fwd = unlabeled.solve_unlabeled(inst.starts, slots, inst.space, engine=options.engine).traj
    back = unlabeled.solve_unlabeled(inst.goals, slots, inst.space, engine=options.engine).traj
    p, q = fwd[-1], back[-1]
    _, depth1 = matching_xy(layout, p, q, options)
    fit = xy_fitting(layout, depth1[-1], q, options)
    if not np.array_equal(fit[-1][:, :2], q[:, :2]):
        raise RuntimeError("plane fitting missed a goal column")
    depth2 = layout.depth_shuffle(fit[-1], q[:, 2])
    traj = concat_fragments([fwd, depth1, fit, depth2, back[::-1]])
    return _finish(inst, traj, options, flip)
