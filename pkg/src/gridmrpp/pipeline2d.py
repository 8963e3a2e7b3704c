"""Rubik-table pipelines for 2D grids: GRM (full), GRLM (half) and GRH (third density).

A pipeline first routes robots onto the home slots of a density regime, then
runs three table phases (row shuffles, column shuffles, row shuffles) and
finally replays the goal side's routing backwards. At full density the home
slots are all cells and the routing phases vanish.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from . import matchings, unlabeled
from .gridcore import GridSpace, Instance, Plan, concat_fragments, strip_virtual
from .shuffles import CenteredLayout, ContractError


class RegimeError(ValueError):
    """Instance does not fit the density regime or dimensions of a solver."""


class PhaseInvariantError(RuntimeError):
    pass


@dataclass(frozen=True)
class SolverOptions:
    mode: str = "fast"
    matching: str = "hall"
    refine: bool = False
    seed: int = 0
    orientation: str = "rcr"
    engine: str | None = None

    def __post_init__(self):
        if self.mode not in ("fast", "faster"):
            raise ValueError(f"unknown shuffle mode {self.mode}")
        if self.matching not in ("hall", "lba"):
            raise ValueError(f"unknown matching {self.matching}")
        if self.orientation not in ("rcr", "crc"):
            raise ValueError(f"unknown orientation {self.orientation}")


def _regime_dims_ok(regime: str, dims: tuple[int, ...], holes: bool) -> bool:
    try:
        CenteredLayout(regime, dims, holes)
    except ContractError:
        return False
    return True


def fill_virtual(instance: Instance, target_density: Fraction | float, seed: int = 0) -> Instance:
    """Add placeholder robots until ``floor(target_density * cells)`` robots exist."""
    count = int(Fraction(target_density).limit_denominator(10 ** 6) * instance.space.n_cells)
    return _fill_to(instance, count, np.random.default_rng(seed))


def _fill_to(instance: Instance, count: int, rng: np.random.Generator) -> Instance:
    """Placeholders rest at cells outside starts and goals; when those run out
    (full density) each one pairs a free start cell with a free goal cell."""
    space = instance.space
    extra = count - instance.n
    if extra < 0:
        raise RegimeError("instance is denser than the target")
    if extra == 0:
        return instance
    if count > space.n_free:
        raise RegimeError("not enough free cells for placeholder robots")
    free = space.flat_index(space.free_cells())
    s = space.flat_index(instance.starts)
    g = space.flat_index(instance.goals)
    outside = np.setdiff1d(free, np.union1d(s, g))
    if len(outside) >= extra:
        pick = np.sort(rng.choice(outside, extra, replace=False))
        vs = vg = space.cells_of(pick)
    else:
        fs = np.setdiff1d(free, s)
        fg = np.setdiff1d(free, g)
        vs = space.cells_of(np.sort(rng.choice(fs, extra, replace=False)))
        vg = space.cells_of(rng.permutation(np.sort(rng.choice(fg, extra, replace=False))))
    base = int(instance.ids.max()) + 1 if instance.n else 1
    return Instance(
        space,
        np.concatenate([instance.starts, vs]),
        np.concatenate([instance.goals, vg]),
        np.concatenate([instance.ids, np.arange(base, base + extra)]),
        np.concatenate([instance.virtual, np.ones(extra, dtype=bool)]),
    )


# ------------------------------------------------------------- table phases

def _matching_columns(j0, k0, jg, kg, width: int, height: int, options: SolverOptions,
                      seed: int, narrow=()) -> np.ndarray:
    """Table column every robot visits after the first row phase.

    Columns in ``narrow`` get matchings that keep robots near their own band,
    so their merge-based column shuffle stays short.
    """
    n = len(j0)
    colors = np.empty((height, width), dtype=np.int64)
    ids = np.empty((height, width), dtype=np.int64)
    colors[j0, k0] = jg
    ids[j0, k0] = np.arange(n)
    if options.matching == "lba":
        start_cols = np.empty_like(ids)
        goal_cols = np.empty_like(ids)
        start_cols[j0, k0] = k0
        goal_cols[j0, k0] = kg
        ms = matchings.lba_assign(colors, ids, start_cols, goal_cols, reserved=narrow)
    else:
        graph = matchings.build_color_row_graph(colors, ids)
        peeled, rest = matchings.peel_near_diagonal(graph, len(narrow))
        others = matchings.decompose_into_matchings(rest, seed).matchings if rest.degree else []
        wide = [c for c in range(width) if c not in set(int(x) for x in narrow)]
        ordered = [None] * width
        for c, mt in zip(list(narrow) + wide, peeled + others):
            ordered[int(c)] = mt
        ms = matchings.MatchingSet(ordered)
    col = np.empty(n, dtype=np.int64)
    for c, mt in enumerate(ms.matchings):
        col[mt[:, 2]] = c
    return col


def table_phases(layout: CenteredLayout, pos: np.ndarray, goal: np.ndarray,
                 options: SolverOptions) -> np.ndarray:
    """Three shuffle phases taking robots from home slots ``pos`` to home slots ``goal``.

    In 3D every depth plane is an independent table; robots never change plane.
    """
    pos = np.asarray(pos, dtype=np.int64)
    goal = np.asarray(goal, dtype=np.int64)
    j0, k0 = layout.abstract(pos)
    jg, kg = layout.abstract(goal)
    z = pos[:, 2] if pos.shape[1] == 3 else np.ones(len(pos), dtype=np.int64)
    if pos.shape[1] == 3 and (goal[:, 2] != z).any():
        raise ContractError("table phases keep robots in their plane")
    tau = np.empty(len(pos), dtype=np.int64)
    for plane in np.unique(z):
        sel = np.flatnonzero(z == plane)
        if len(sel) != layout.height * layout.width:
            raise ContractError("table is not fully occupied")
        tau[sel] = _matching_columns(j0[sel], k0[sel], jg[sel], kg[sel], layout.width,
                                     layout.height, options, options.seed + int(plane),
                                     layout.narrow_columns)

    key = z * layout.width + tau
    # every table column holds each goal band once
    _check(np.unique(key * layout.height + jg).size == len(pos), "row phase output")
    row1 = layout.row_shuffle(pos, tau)
    _check_abstract(layout, row1[-1], j0, tau)
    col = layout.col_shuffle(row1[-1], jg)
    _check_abstract(layout, col[-1], jg, tau)
    row2 = layout.row_shuffle(col[-1], kg)
    _check(np.array_equal(row2[-1], goal), "final row phase")
    return concat_fragments([row1, col, row2])


def _check(ok: bool, what: str) -> None:
    if not ok:
        raise PhaseInvariantError(f"phase invariant broken after {what}")


def _check_abstract(layout: CenteredLayout, pos: np.ndarray, j: np.ndarray, k: np.ndarray) -> None:
    jj, kk = layout.abstract(pos)
    _check(np.array_equal(jj, j) and np.array_equal(kk, k), "shuffle phase")


# ---------------------------------------------------------------- solvers

def _orient(instance: Instance, options: SolverOptions, regime: str, holes: bool) -> bool:
    """Whether to solve the transposed instance."""
    flip = options.orientation == "crc"
    dims = instance.space.dims
    tdims = (dims[1], dims[0]) + dims[2:]
    if _regime_dims_ok(regime, tdims if flip else dims, holes):
        return flip
    # fall back to the other orientation when only that one fits
    if (flip or regime == "third") and _regime_dims_ok(regime, dims if flip else tdims, holes):
        return not flip
    raise RegimeError(f"grid {dims} does not fit the {regime} regime")


def _holes(space: GridSpace) -> bool:
    if not space.obstacles:
        return False
    m1, m2 = space.dims[:2]
    expect = {(3 * a + 2, 3 * b + 2) for a in range(m1 // 3) for b in range(m2 // 3)}
    if space.ndim != 2 or m1 % 3 or m2 % 3 or set(space.obstacles) != expect:
        raise RegimeError("only the center-hole obstacle pattern is supported")
    return True


def _trivial(instance: Instance) -> Plan | None:
    real = ~instance.virtual
    if (instance.starts[real] == instance.goals[real]).all():
        return Plan(instance.starts[real][None], instance.ids[real])
    return None


def _finish(instance: Instance, traj: np.ndarray, options: SolverOptions, flip: bool) -> Plan:
    plan = strip_virtual(instance, Plan(traj, instance.ids))
    if flip:
        plan = plan.transposed()
    if options.refine:
        from .refine import refine

        orig = instance.transposed() if flip else instance
        plan = refine(orig.subset(~orig.virtual), plan)
    return plan.trimmed()


def _solve(instance: Instance, options: SolverOptions, regime: str) -> Plan:
    if instance.space.ndim != 2:
        raise RegimeError("2D pipelines need a 2D grid")
    trivial = _trivial(instance)
    if trivial is not None:
        return trivial
    holes = _holes(instance.space)
    if holes and regime != "third":
        raise RegimeError(f"obstacles are not supported in the {regime} regime")
    flip = _orient(instance, options, regime, holes)
    inst = instance.transposed() if flip else instance
    layout = CenteredLayout(regime, inst.space.dims, holes, options.mode)
    slots = layout.slots()
    if inst.n > len(slots):
        raise RegimeError(f"{inst.n} robots exceed the {len(slots)} slots of the {regime} regime")
    inst = _fill_to(inst, len(slots), np.random.default_rng(options.seed))
    if regime == "full":
        traj = table_phases(layout, inst.starts, inst.goals, options)
    else:
        eng = options.engine
        fwd = unlabeled.solve_unlabeled(inst.starts, slots, inst.space, engine=eng).traj
        back = unlabeled.solve_unlabeled(inst.goals, slots, inst.space, engine=eng).traj
        mid = table_phases(layout, fwd[-1], back[-1], options)
        traj = concat_fragments([fwd, mid, back[::-1]])
    return _finish(inst, traj, options, flip)


def solve_grm(instance: Instance, options: SolverOptions = SolverOptions()) -> Plan:
    """Full-density pipeline; sparser instances are padded with placeholder robots."""
    if instance.space.obstacles:
        raise RegimeError("GRM does not support obstacles")
    return _solve(instance, options, "full")


def solve_grh(instance: Instance, options: SolverOptions = SolverOptions()) -> Plan:
    """Pipeline for up to one robot per three cells, using highway shuffles."""
    if options.mode != "fast":
        raise RegimeError("faster mode needs the full regime")
    return _solve(instance, options, "third")


def solve_grlm(instance: Instance, options: SolverOptions = SolverOptions()) -> Plan:
    """Pipeline for up to one robot per two cells, using linear merge shuffles."""
    if options.mode != "fast":
        raise RegimeError("faster mode needs the full regime")
    if instance.space.obstacles:
        raise RegimeError("obstacles are not supported in the half regime")
    return _solve(instance, options, "half")
