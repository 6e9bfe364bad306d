import numpy as np
import pytest

from formbound.torus import Grid, ScalarField, VectorField


@pytest.fixture
def grid2():
    return Grid(2, 32, 1.0)


@pytest.fixture
def grid3():
    return Grid(3, 16, 1.0)


@pytest.fixture
def noise():
    """White-noise field factory, mean-subtracted per component."""

    def make(grid, seed=0, kind="vector"):
        rng = np.random.default_rng(seed)
        if kind == "scalar":
            vals = rng.standard_normal(grid.shape)
            return ScalarField(grid, vals - vals.mean())
        comps = []
        for _ in range(grid.dim):
            vals = rng.standard_normal(grid.shape)
            comps.append(ScalarField(grid, vals - vals.mean()))
        return VectorField(tuple(comps))

    return make
