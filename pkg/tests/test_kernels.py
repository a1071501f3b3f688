"""The compiled and pure-numpy upwind kernels must agree bit for bit."""

import numpy as np
import pytest

from shocklab import kernels
from shocklab.core import make_grid, make_stencils


@pytest.fixture(scope="module")
def setup():
    grid = make_grid(513, 0.041, 10.0)
    stencils = make_stencils(grid)
    rng = np.random.default_rng(7)
    f = np.sin(grid.nodes) + 0.01 * rng.standard_normal(grid.n_nodes)
    speed = np.cos(3.0 * grid.nodes)  # mixed signs -> exercises both tables
    return grid, stencils, f, speed


def test_paths_bit_identical(setup):
    grid, stencils, f, speed = setup
    a = kernels._upwind_dx_numpy(
        f, speed, stencils.w_pos, stencils.w_neg, stencils.i_pos, stencils.i_neg,
        np.empty_like(f),
    )
    b = kernels._upwind_dx_loop(
        f, speed, stencils.w_pos, stencils.w_neg, stencils.i_pos, stencils.i_neg,
        np.empty_like(f),
    )
    np.testing.assert_array_equal(a, b)


def test_active_path_matches_reference(setup):
    grid, stencils, f, speed = setup
    got = kernels.upwind_dx(f, speed, stencils)
    ref = kernels._upwind_dx_numpy(
        f, speed, stencils.w_pos, stencils.w_neg, stencils.i_pos, stencils.i_neg,
        np.empty_like(f),
    )
    np.testing.assert_array_equal(got, ref)


def test_upwind_accuracy_smooth(setup):
    grid, stencils, _, _ = setup
    f = np.tanh(grid.nodes)
    df = np.where(np.abs(grid.nodes) < 300.0, 1.0 / np.cosh(np.clip(grid.nodes, -300, 300)) ** 2, 0.0)
    got = kernels.upwind_dx(f, np.ones_like(f), stencils)
    mask = np.abs(grid.nodes) < 2.0
    assert np.max(np.abs(got - df)[mask]) < 5e-5


def test_out_buffer_reused(setup):
    grid, stencils, f, speed = setup
    out = np.empty_like(f)
    got = kernels.upwind_dx(f, speed, stencils, out=out)
    assert got is out


def test_active_name():
    assert kernels.ACTIVE in ("numba", "numpy")
