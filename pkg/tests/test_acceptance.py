"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -v``; the criterion lines appear in
the terminal output even without ``-s``.
"""

import itertools
import math
import subprocess
import sys
import time
from dataclasses import replace
from fractions import Fraction

import numpy as np
import pytest

from gridmrpp import blockoracle
from gridmrpp.bench import InstanceSpec, generate, makespan_bound, parse_algorithm
from gridmrpp.gridcore import GridSpace, Instance, Plan, compute_metrics, validate_plan
from gridmrpp.matchings import (bottleneck_perfect_matching, build_color_row_graph,
                                decompose_into_matchings, verify_matching_set)
from gridmrpp.refine import refine, visit_order
from gridmrpp.shuffles import CenteredLayout, linear_merge_shuffle, odd_even_shuffle
from gridmrpp.unlabeled import solve_unlabeled

from oracles import bottleneck_by_enumeration, joint_unlabeled_optimum, random_regular_multigraph

pytestmark = pytest.mark.acceptance


@pytest.fixture
def report(capsys):
    def emit(number, ok, detail):
        with capsys.disabled():
            print(f"\nCRITERION {number:>3}: {'PASS' if ok else 'FAIL'}  {detail}", flush=True)
    return emit


def run(algo, inst, seed=0):
    solver, opts = parse_algorithm(algo)
    t0 = time.perf_counter()
    plan = solver(inst, replace(opts, seed=seed))
    return plan, time.perf_counter() - t0


def metrics(inst, plan):
    rep = validate_plan(inst, plan)
    assert rep.valid, f"invalid plan: {rep.summary()}"
    return compute_metrics(inst, plan)


def entry_orders(space, plan):
    flat = space.flat_index(plan.positions)
    idx = visit_order(flat, space.n_cells)
    return idx.queue, idx.qstart


# ------------------------------------------------------------ fuzz corpus

def fuzz_cases():
    """500 (algorithm, spec) pairs spread over every solver, regime and scenario."""
    rng = np.random.default_rng(2024)
    cases = []
    kinds = ["grm", "grm-faster", "grm-pr", "grh", "grh-lba", "grh-hole", "grh-crc", "grlm",
             "grlm-lba", "grh3d", "grh3d-lba", "grh-squares", "grh-blocks", "igrh"]
    for i in range(500):
        kind = kinds[i % len(kinds)]
        seed = int(rng.integers(0, 10 ** 6))
        if kind.startswith("grm"):
            dims = (int(rng.integers(2, 8)) * 2, int(rng.integers(2, 8)) * 2)
            dens = Fraction(int(rng.integers(1, 5)), 4)
            spec = InstanceSpec(dims, dens, seed=seed)
        elif kind.startswith("grlm"):
            dims = (int(rng.integers(1, 7)) * 2, int(rng.integers(1, 7)) * 2)
            spec = InstanceSpec(dims, Fraction(int(rng.integers(1, 3)), 4), seed=seed)
        elif kind.startswith("grh3d"):
            dims = (int(rng.integers(1, 4)) * 3, int(rng.integers(2, 7)), int(rng.integers(2, 5)))
            spec = InstanceSpec(dims, Fraction(int(rng.integers(1, 4)), 9), seed=seed)
        elif kind == "grh-hole":
            dims = (int(rng.integers(1, 6)) * 3, int(rng.integers(1, 6)) * 3)
            spec = InstanceSpec(dims, Fraction(int(rng.integers(1, 3)), 9), "center-hole", seed=seed)
        elif kind == "grh-squares":
            dims = (int(rng.integers(2, 6)) * 3, int(rng.integers(2, 6)) * 3)
            spec = InstanceSpec(dims, Fraction(1, 9), scenario="squares", seed=seed)
        elif kind == "grh-blocks":
            dims = (int(rng.integers(1, 6)) * 3, int(rng.integers(1, 6)) * 3)
            spec = InstanceSpec(dims, Fraction(1, 3), scenario="blocks", seed=seed)
        else:
            dims = (int(rng.integers(1, 6)) * 3, int(rng.integers(2, 16)))
            if rng.random() < 0.5:
                dims = dims[::-1]
            spec = InstanceSpec(dims, Fraction(int(rng.integers(1, 4)), 9), seed=seed)
        algo = {"grh-hole": "grh", "grh-squares": "grh", "grh-blocks": "grh", "grh-crc": "grh"}.get(kind, kind)
        cases.append((kind, algo, spec))
    return cases


@pytest.fixture(scope="module")
def fuzz_plans():
    out = []
    t0 = time.perf_counter()
    for kind, algo, spec in fuzz_cases():
        inst = generate(spec)
        solver, opts = parse_algorithm(algo)
        opts = replace(opts, seed=spec.seed % 997)
        if kind == "grh-crc":
            opts = replace(opts, orientation="crc")
        plan = solver(inst, opts)
        out.append((kind, inst, plan))
    return out, time.perf_counter() - t0


def test_c01_validity_fuzz(fuzz_plans, report):
    plans, elapsed = fuzz_plans
    bad = [kind for kind, inst, plan in plans if not validate_plan(inst, plan).valid]
    ok = not bad and len(plans) == 500 and elapsed < 600
    report(1, ok, f"{len(plans) - len(bad)}/{len(plans)} valid, {elapsed:.1f}s total")
    assert ok, bad[:10]


# ------------------------------------------------------------- bounds

def test_c02_grm_bound(report):
    slow, spans = 0.0, []
    for seed in range(20):
        inst = generate(InstanceSpec((24, 18), Fraction(1), seed=seed))
        plan, dt = run("grm", inst, seed)
        spans.append(metrics(inst, plan).makespan)
        slow = max(slow, dt)
    fspans = []
    for seed in range(20):
        inst = generate(InstanceSpec((24, 16), Fraction(1), seed=seed))
        plan, dt = run("grm-faster", inst, seed)
        fspans.append(metrics(inst, plan).makespan)
        slow = max(slow, dt)
    fb = 4 * (24 + 32) + 8
    ok = max(spans) <= 420 and max(fspans) <= fb and slow < 5
    report(2, ok, f"fast max {max(spans)} <= 420, faster max {max(fspans)} <= {fb}, slowest {slow:.2f}s")
    assert ok


def test_c03_grh_bound(report):
    spans, hole_spans, slow = [], [], 0.0
    for seed in range(20):
        inst = generate(InstanceSpec((90, 60), Fraction(1, 3), seed=seed))
        plan, dt = run("grh", inst, seed)
        spans.append(metrics(inst, plan).makespan)
        slow = max(slow, dt)
        inst = generate(InstanceSpec((90, 60), Fraction(2, 9), "center-hole", seed=seed))
        plan, dt = run("grh", inst, seed)
        hole_spans.append(metrics(inst, plan).makespan)
        slow = max(slow, dt)
    ok = max(spans) <= 540 and max(hole_spans) <= 540 and slow < 10
    report(3, ok, f"max {max(spans)}, with holes max {max(hole_spans)} (bound 540), slowest {slow:.2f}s")
    assert ok


def test_c04_grh_trend(report):
    means = []
    for dims in [(30, 20), (90, 60), (150, 100)]:
        ratios = []
        for seed in range(20):
            inst = generate(InstanceSpec(dims, Fraction(1, 3), seed=seed))
            plan, _ = run("grh", inst, seed)
            ratios.append(float(metrics(inst, plan).optimality_ratio))
        means.append(float(np.mean(ratios)))
    inst = generate(InstanceSpec((300, 200), Fraction(1, 3), seed=0))
    plan, dt = run("grh", inst, 0)
    smoke = validate_plan(inst, plan).valid and dt < 120
    mono = all(b <= a for a, b in zip(means, means[1:]))
    ok = mono and means[-1] <= 2.2 and smoke
    report(4, ok, f"mean ratios {[round(m, 3) for m in means]}, 300x200 with {inst.n} robots "
                  f"{'valid' if smoke else 'FAILED'} in {dt:.1f}s")
    assert ok


def test_c05_grlm_bound(report):
    bound = 3 * 40 + 4 * 40 + 2 * (6 + 6) + 8
    spans = []
    for seed in range(20):
        inst = generate(InstanceSpec((40, 40), Fraction(1, 2), seed=seed))
        plan, _ = run("grlm", inst, seed)
        spans.append(metrics(inst, plan).makespan)
    ok = max(spans) <= bound
    report(5, ok, f"max makespan {max(spans)} <= {bound}")
    assert ok


# ------------------------------------------------------------ primitives

def test_c06_block_oracle(report):
    expect = {(3, 2): 7, (4, 2): 6, (2, 3): 6, (3, 3): 7, (2, 4): 6}
    got = {s: max(sol.length for sol in blockoracle.pattern_table(s).values()) for s in expect}
    swap = blockoracle.solve_pattern((3, 2), ((1, 0), (1, 0), (1, 0))).length
    ok = got == expect and swap == 7
    report(6, ok, f"maxima {[got[s] for s in expect]}, all-swap 3x2 in {swap} steps")
    assert ok


def _odd_even_steps(P, perms):
    L = len(perms[0])
    occ = np.arange(P * L).reshape(P, L)
    tgt = np.array(perms)
    hist = odd_even_shuffle(occ, tgt)
    where = np.argsort(hist.reshape(hist.shape[0], -1), axis=1)
    traj = np.stack([where // L + 1, where % L + 1], axis=2)
    inst = Instance(GridSpace((P, L)), traj[0], traj[-1])
    assert validate_plan(inst, Plan(traj, inst.ids)).valid
    assert (traj[-1, :, 1] - 1 == tgt.ravel()).all()
    return traj.shape[0] - 1


def _merge_steps(perm):
    L = len(perm)
    pos = np.stack([np.ones(L, int), np.arange(1, L + 1)], axis=1)
    traj = linear_merge_shuffle(pos, np.asarray(perm) + 1, axis=1, sec_axis=0)
    inst = Instance(GridSpace((2, L)), traj[0], traj[-1])
    assert validate_plan(inst, Plan(traj, inst.ids)).valid
    assert (traj[-1, :, 1] == np.asarray(perm) + 1).all()
    return traj.shape[0] - 1


def test_c07_line_shuffles(report):
    rng = np.random.default_rng(7)
    worst_oe, worst_lm, cases = 0.0, 0.0, 0
    for L in range(4, 17):
        # odd-even: exhaustive over one line for short lengths, sampled otherwise
        if L <= 6:
            perms = [list(p) for p in itertools.permutations(range(L))]
        else:
            perms = [rng.permutation(L).tolist() for _ in range(40)]
        for p in perms:
            other = [rng.permutation(L).tolist() for _ in range(2)]
            steps = _odd_even_steps(3, [p] + other)
            worst_oe = max(worst_oe, steps / (7 * L))
            cases += 1
        bound = L + 2 * (math.ceil(math.log2(L)) + 1) + 2
        mperms = itertools.permutations(range(L)) if L <= 7 else (rng.permutation(L) for _ in range(200))
        for p in mperms:
            worst_lm = max(worst_lm, _merge_steps(p) / bound)
            cases += 1
    ok = worst_oe <= 1 and worst_lm <= 1
    report(7, ok, f"{cases} cases, worst odd-even {worst_oe:.2f} and merge {worst_lm:.2f} of bound")
    assert ok


def test_c08_matching_decomposition(report):
    rng = np.random.default_rng(8)
    good = 0
    for case in range(200):
        m, d = int(rng.integers(1, 65)), int(rng.integers(1, 9))
        colors, ids = random_regular_multigraph(m, d, rng)
        graph = build_color_row_graph(colors, ids)
        ms = decompose_into_matchings(graph, seed=case)
        verify_matching_set(graph, ms)
        edges = np.concatenate(ms.matchings)
        union = sorted(map(tuple, edges.tolist()))
        multiset = sorted((int(colors[r, c]), r, int(ids[r, c])) for r in range(m) for c in range(d))
        good += len(ms.matchings) == d and union == multiset
    ok = good == 200
    report(8, ok, f"{good}/200 multigraphs split into d perfect matchings")
    assert ok


def test_c09_bottleneck_oracle(report):
    rng = np.random.default_rng(9)
    good = 0
    for _ in range(100):
        costs = rng.integers(0, 50, size=(7, 7)).astype(float)
        _, value = bottleneck_perfect_matching(costs)
        good += value == bottleneck_by_enumeration(costs)
    ok = good == 100
    report(9, ok, f"{good}/100 7x7 matrices match 7! enumeration")
    assert ok


def test_c10_unlabeled_optimality(report):
    rng = np.random.default_rng(10)
    good = 0
    for _ in range(50):
        m1, m2 = int(rng.integers(2, 6)), int(rng.integers(2, 6))
        n = int(rng.integers(1, 5))
        cells = np.array([(x, y) for x in range(1, m1 + 1) for y in range(1, m2 + 1)])
        starts = cells[rng.choice(len(cells), n, replace=False)]
        slots = cells[rng.choice(len(cells), n, replace=False)]
        res = solve_unlabeled(starts, slots, GridSpace((m1, m2)))
        good += res.horizon == joint_unlabeled_optimum((m1, m2), (), starts, slots)
    space = GridSpace((30, 30))
    slots = CenteredLayout("third", (30, 30)).slots()
    worst = 0
    for seed in range(20):
        inst = generate(InstanceSpec((30, 30), Fraction(1, 3), seed=seed))
        for side in (inst.starts, inst.goals):
            worst = max(worst, solve_unlabeled(side, slots, space).horizon)
    ok = good == 50 and worst <= 12
    report(10, ok, f"{good}/50 small instances optimal, 30x30 worst horizon {worst} <= 12")
    assert ok


# ------------------------------------------------------------- refinement

def test_c11_refinement(fuzz_plans, report):
    plans, _ = fuzz_plans
    dominated = ordered = 0
    for kind, inst, plan in plans:
        real = inst.subset(~inst.virtual)
        out = refine(real, plan)
        before, after = compute_metrics(real, plan), compute_metrics(real, out)
        dominated += after.makespan <= before.makespan and after.soc <= before.soc
        qa, sa = entry_orders(real.space, plan)
        qb, sb = entry_orders(real.space, out)
        ordered += np.array_equal(qa, qb) and np.array_equal(sa, sb)
    reductions = []
    for seed in range(20):
        inst = generate(InstanceSpec((60, 60), Fraction(1, 3), seed=seed))
        plan, _ = run("grh", inst, seed)
        out = refine(inst, plan)
        a, b = metrics(inst, plan).makespan, metrics(inst, out).makespan
        reductions.append(1 - b / a)
    space = GridSpace((3, 3), frozenset({(2, 2)}))
    ring = [(1, 1), (1, 2), (1, 3), (2, 3), (3, 3), (3, 2), (3, 1), (2, 1)]
    paths = np.array([[ring[(i + s // 2) % 8] for s in range(17)] for i in range(8)])
    rplan = Plan(paths.transpose(1, 0, 2), np.arange(1, 9))
    rinst = Instance(space, rplan.positions[0], rplan.positions[-1])
    rout = refine(rinst, rplan)
    ring_ok = validate_plan(rinst, rout).valid and rout.horizon == 8
    mean_red = float(np.mean(reductions))
    n = len(plans)
    ok = dominated == n and ordered == n and mean_red >= 0.05 and ring_ok
    report(11, ok, f"(a) {dominated}/{n} not worse, (b) {ordered}/{n} order kept, "
                   f"(c) mean reduction {100 * mean_red:.1f}%, (d) ring horizon {rout.horizon}")
    assert ok


def test_c12_lba_effect(report):
    plain, lba = [], []
    for seed in range(20):
        inst = generate(InstanceSpec((60, 60), Fraction(1, 3), seed=seed))
        plain.append(metrics(inst, run("grh", inst, seed)[0]).makespan)
        lba.append(metrics(inst, run("grh-lba", inst, seed)[0]).makespan)
    ok = np.mean(lba) <= np.mean(plain)
    report(12, ok, f"mean makespan GRH-LBA {np.mean(lba):.1f} vs GRH {np.mean(plain):.1f}")
    assert ok


def test_c13_grh3d(report):
    spans, means = [], []
    for dims in [(12, 6, 3), (24, 12, 6)]:
        ratios = []
        for seed in range(10):
            inst = generate(InstanceSpec(dims, Fraction(1, 3), seed=seed))
            plan, _ = run("grh3d", inst, seed)
            m = metrics(inst, plan)
            ratios.append(float(m.optimality_ratio))
            if dims == (24, 12, 6):
                spans.append(m.makespan)
        means.append(float(np.mean(ratios)))
    bound = makespan_bound("grh3d", (24, 12, 6))
    ok = max(spans) <= bound == 184 and means[1] <= means[0]
    report(13, ok, f"max makespan {max(spans)} <= {bound}, mean ratios {[round(m, 3) for m in means]}")
    assert ok


def test_c14_determinism(tmp_path, report):
    inst_path = tmp_path / "inst.json"
    cmd = [sys.executable, "-m", "gridmrpp"]
    subprocess.run(cmd + ["gen", "--dims", "30x21", "--seed", "5", "--out", str(inst_path)], check=True)
    outputs = {}
    for algo in ["grh", "grh-lba", "igrh", "grlm", "grm"]:
        if algo in ("grlm", "grm"):
            path = tmp_path / f"{algo}.json"
            dens = "1/2" if algo == "grlm" else "1"
            subprocess.run(cmd + ["gen", "--dims", "12x12", "--density", dens, "--seed", "5",
                                  "--out", str(path)], check=True)
        else:
            path = inst_path
        runs = [subprocess.run(cmd + ["solve", str(path), "--algo", algo, "--seed", "3"],
                               check=True, capture_output=True).stdout for _ in range(2)]
        outputs[algo] = runs[0] == runs[1] and len(runs[0]) > 0
    ok = all(outputs.values())
    report(14, ok, f"identical plan JSON across two runs: {outputs}")
    assert ok
