"""Instance generation, algorithm registry and benchmark sweeps."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, replace
from fractions import Fraction
from typing import Callable, Iterable

import numpy as np

from .gridcore import GridSpace, Instance, InvalidPlanError, Plan, compute_metrics, validate_plan
from .pipeline2d import RegimeError, SolverOptions, solve_grh, solve_grlm, solve_grm
from .pipeline3d import solve_grh3d
from .shuffles import ContractError

CSV_COLUMNS = ("spec_digest", "algorithm", "seed", "makespan", "soc", "lower_bound",
               "ratio", "runtime", "bound_ok", "status")
SCENARIOS = ("random", "squares", "blocks")


@dataclass(frozen=True)
class InstanceSpec:
    dims: tuple[int, ...]
    density: Fraction = Fraction(1, 3)
    obstacles: str | tuple = "none"
    scenario: str = "random"
    seed: int = 0
    block: int = 3

    def digest(self) -> str:
        """Stable hash of everything except the seed."""
        data = asdict(replace(self, seed=0))
        data["density"] = str(Fraction(self.density))
        data["obstacles"] = self.obstacles if isinstance(self.obstacles, str) else sorted(map(list, self.obstacles))
        text = json.dumps(data, sort_keys=True, default=list)
        return hashlib.sha256(text.encode()).hexdigest()[:12]


def center_holes(dims: tuple[int, ...]) -> frozenset:
    m1, m2 = dims[:2]
    return frozenset((3 * a + 2, 3 * b + 2) for a in range(m1 // 3) for b in range(m2 // 3))


def _space(spec: InstanceSpec) -> GridSpace:
    if spec.obstacles == "none":
        return GridSpace(spec.dims)
    if spec.obstacles == "center-hole":
        if len(spec.dims) != 2:
            raise ValueError("center-hole obstacles are defined for 2D grids")
        return GridSpace(spec.dims, center_holes(spec.dims))
    return GridSpace(spec.dims, frozenset(tuple(o) for o in spec.obstacles))


def generate(spec: InstanceSpec) -> Instance:
    """Deterministic instance for a spec; ``density`` counts robots per grid cell."""
    space = _space(spec)
    n = math.floor(Fraction(spec.density) * space.n_cells)
    if n > space.n_free:
        raise ValueError(f"density {spec.density} needs {n} robots but only {space.n_free} cells are free")
    rng = np.random.default_rng(spec.seed)
    free = space.free_cells()
    if spec.scenario == "random":
        starts = free[np.sort(rng.choice(len(free), n, replace=False))]
        goals = free[rng.choice(len(free), n, replace=False)]
    elif spec.scenario == "squares":
        starts, goals = _squares(space, n, rng)
    elif spec.scenario == "blocks":
        starts, goals = _blocks(space, spec, rng)
    else:
        raise ValueError(f"unknown scenario {spec.scenario}")
    return Instance(space, starts, goals)


def _squares(space: GridSpace, n: int, rng: np.random.Generator):
    """Robots on every third concentric ring; goals are the 180 degree rotations."""
    if space.ndim != 2:
        raise ValueError("squares scenario is defined for 2D grids")
    m1, m2 = space.dims
    cells = space.free_cells()
    ring = np.minimum.reduce([cells[:, 0] - 1, m1 - cells[:, 0], cells[:, 1] - 1, m2 - cells[:, 1]])
    rot = np.stack([m1 + 1 - cells[:, 0], m2 + 1 - cells[:, 1]], axis=1)
    ok = (ring % 3 == 0) & space.free_mask()[tuple((rot - 1).T)]
    pool = cells[ok]
    if n > len(pool):
        raise ValueError(f"rings hold only {len(pool)} robots, {n} requested")
    starts = pool[np.sort(rng.choice(len(pool), n, replace=False))]
    goals = np.stack([m1 + 1 - starts[:, 0], m2 + 1 - starts[:, 1]], axis=1)
    return starts, goals


def _blocks(space: GridSpace, spec: InstanceSpec, rng: np.random.Generator):
    """Equal robot counts per block; whole blocks are permuted.

    Robots of a block, sorted by start cell, take the sorted goal cells of the
    destination block.
    """
    b = spec.block
    if space.obstacles or any(d % b for d in space.dims):
        raise ValueError(f"blocks scenario needs an obstacle-free grid divisible by {b}")
    per = math.floor(Fraction(spec.density) * b ** space.ndim)
    shape = tuple(d // b for d in space.dims)
    nb = math.prod(shape)
    local = np.argwhere(np.ones((b,) * space.ndim, dtype=bool))
    corner = (np.argwhere(np.ones(shape, dtype=bool)) * b + 1)
    dest = rng.permutation(nb)
    starts, goals = [], []
    for k in range(nb):
        s = np.sort(rng.choice(len(local), per, replace=False))
        g = np.sort(rng.choice(len(local), per, replace=False))
        starts.append(corner[k] + local[s])
        goals.append(corner[dest[k]] + local[g])
    D = space.ndim
    return (np.concatenate(starts).reshape(-1, D), np.concatenate(goals).reshape(-1, D))


# --------------------------------------------------------------- algorithms

_SOLVERS: dict[str, Callable] = {"grm": solve_grm, "grh": solve_grh, "grlm": solve_grlm, "grh3d": solve_grh3d}


def parse_algorithm(name: str, base: SolverOptions = SolverOptions()) -> tuple[Callable, SolverOptions]:
    """``grh``, ``grh-lba``, ``grh-pr``, ``grh-lba-pr`` or ``igrh`` (LBA plus refinement)."""
    parts = name.lower().split("-")
    head, flags = parts[0], set(parts[1:])
    opts = base
    if head.startswith("i") and head[1:] in _SOLVERS:
        head = head[1:]
        flags |= {"lba", "pr"}
    if head not in _SOLVERS or flags - {"lba", "pr", "faster"}:
        raise ValueError(f"unknown algorithm {name}")
    if "lba" in flags:
        opts = replace(opts, matching="lba")
    if "pr" in flags:
        opts = replace(opts, refine=True)
    if "faster" in flags:
        opts = replace(opts, mode="faster")
    return _SOLVERS[head], opts


def makespan_bound(name: str, dims: tuple[int, ...], mode: str = "fast") -> int:
    """Guaranteed makespan of an algorithm on a grid, in the orientation it solves."""
    head = name.lower().split("-")[0]
    if head.startswith("i") and head[1:] in _SOLVERS:
        head = head[1:]
    m1, m2 = dims[:2]
    if head in ("grh", "grh3d") and m1 % 3 and not m2 % 3:
        m1, m2 = m2, m1
    if head == "grm":
        return 4 * (m1 + 2 * m2) + 8 if mode == "faster" else 7 * (m1 + 2 * m2)
    if head == "grh":
        return 3 * m1 + 4 * m2 + 30
    if head == "grlm":
        return 3 * m1 + 4 * m2 + 2 * (math.ceil(math.log2(m1)) + math.ceil(math.log2(m2))) + 8
    if head == "grh3d":
        return 3 * m1 + 4 * m2 + 4 * dims[2] + 40
    raise ValueError(f"unknown algorithm {name}")


def run_algorithm(name: str, instance: Instance, seed: int = 0) -> Plan:
    solver, opts = parse_algorithm(name, SolverOptions(seed=seed))
    return solver(instance, opts)


# -------------------------------------------------------------------- bench

def _row(spec: InstanceSpec, algo: str) -> dict:
    inst = generate(spec)
    row = dict.fromkeys(CSV_COLUMNS, "")
    row.update(spec_digest=spec.digest(), algorithm=algo, seed=spec.seed)
    t0 = time.perf_counter()
    try:
        plan = run_algorithm(algo, inst, spec.seed)
    except (RegimeError, ContractError) as e:
        row.update(status=f"error: {e}")
        return row
    runtime = time.perf_counter() - t0
    report = validate_plan(inst, plan)
    if not report.valid:
        raise InvalidPlanError(report)
    m = compute_metrics(inst, plan)
    mode = parse_algorithm(algo)[1].mode
    row.update(makespan=m.makespan, soc=m.soc, lower_bound=m.lower_bound,
               ratio=f"{float(m.optimality_ratio):.6f}", runtime=f"{runtime:.3f}",
               bound_ok=m.makespan <= makespan_bound(algo, inst.space.dims, mode), status="ok")
    return row


def bench(specs: Iterable[InstanceSpec], algorithms: Iterable[str], seeds: Iterable[int],
          out=None, workers: int = 1) -> list[dict]:
    """Run every (spec, seed, algorithm) combination and write CSV rows to ``out``.

    Solver regime errors become failed rows; an invalid plan aborts the sweep.
    """
    jobs = [(replace(s, seed=seed), a) for s in specs for seed in seeds for a in algorithms]
    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        rows = list(pool.map(lambda job: _row(*job), jobs))
    rows.sort(key=lambda r: (r["spec_digest"], r["algorithm"], r["seed"]))
    if out is not None:
        writer = csv.DictWriter(out, fieldnames=CSV_COLUMNS, lineterminator="\n")
        writer.writeheader()
        writer.writerows(rows)
    return rows


def rows_to_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=CSV_COLUMNS, lineterminator="\n")
    writer.writeheader()
    writer.writerows(rows)
    return buf.getvalue()
