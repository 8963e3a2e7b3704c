import numpy as np
import pytest

from gridmrpp import blockoracle
from gridmrpp.gridcore import GridSpace, Instance


@pytest.fixture(scope="session", autouse=True)
def block_cache(tmp_path_factory):
    path = tmp_path_factory.mktemp("block-cache")
    blockoracle.set_cache_dir(path)
    return path


def random_instance(dims, n, seed, obstacles=frozenset()):
    rng = np.random.default_rng(seed)
    space = GridSpace(tuple(dims), obstacles)
    free = space.free_cells()
    starts = free[rng.choice(len(free), n, replace=False)]
    goals = free[rng.choice(len(free), n, replace=False)]
    return Instance(space, starts, goals)


def check_trajectory(space, traj):
    """Validate a trajectory fragment as a plan between its own endpoints."""
    from gridmrpp.gridcore import Plan, validate_plan

    inst = Instance(space, traj[0], traj[-1])
    report = validate_plan(inst, Plan(traj, inst.ids))
    assert report.valid, report.violations[:5]
    return traj.shape[0] - 1
