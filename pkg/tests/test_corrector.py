import numpy as np
import pytest

from multibump.ansatz import EvenFunction, make_grid
from multibump.corrector import newton_solve, symmetry_defect, verify_solution_profile
from multibump.errors import Diverged
from multibump.pipeline import base_params


def test_single_bump_one_iteration():
    prm = base_params(1, 2.0, 0.2)
    u, rep = newton_solve(prm, hx=0.2, hz=0.2)
    assert rep.iterations == 1
    assert rep.residual_sup[-1] < 1e-12
    assert rep.distance_star < 1e-10
    assert rep.positive


@pytest.fixture(scope="module")
def k2_solution():
    prm = base_params(2, 2.0, 0.1)
    grid = make_grid(prm, hx=0.2, hz=0.2)
    u, rep = newton_solve(prm, grid=grid)
    return prm, grid, u, rep


def test_k2_converges_quadratically(k2_solution):
    prm, grid, u, rep = k2_solution
    assert rep.converged and rep.iterations <= 8
    assert rep.residual_sup[-1] < 1e-9
    r = rep.residual_sup
    assert all(b < a for a, b in zip(r, r[1:]))
    assert max(rep.quadratic_ratios) < 1e3
    assert rep.positive and rep.contamination < 1e-3


def test_k2_symmetry_and_profile(k2_solution):
    prm, grid, u, rep = k2_solution
    assert symmetry_defect(u) < 1e-10
    diag = verify_solution_profile(u, prm)
    assert diag["margin_max"] < 1e-6
    assert diag["ridge_deviation"] <= 2 * grid.hx


def test_perturbed_e_gives_nearby_solution(k2_solution):
    prm, grid, u, rep = k2_solution
    z = grid.z
    bump = 0.01 * np.exp(-((z - 4.0) / 2.0) ** 2)
    e = EvenFunction(z, bump, -(z - 4.0) / 2.0 * bump, ((z - 4.0) ** 2 / 4.0 - 0.5) * bump)
    u2, _ = newton_solve(prm.with_updates(e=[e, e]), grid=grid)
    # same discrete problem up to the O(h^2) split between analytic and discrete Laplacians
    assert np.max(np.abs(u2.values - u.values)) < 1e-3


def test_divergence_carries_history():
    # bumps too close for the base ansatz to sit in the Newton basin
    prm = base_params(2, 2.0, 0.15)
    with pytest.raises(Diverged) as info:
        newton_solve(prm, hx=0.2, hz=0.2)
    assert len(info.value.history["residual_sup"]) >= 2


def test_iteration_cap():
    prm = base_params(2, 2.0, 0.25)
    with pytest.raises(Diverged):
        newton_solve(prm, hx=0.2, hz=0.2, max_iter=1)
