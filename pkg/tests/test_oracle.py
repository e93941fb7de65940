"""Cross-checked minimal-time oracles on the ODE reductions."""

import numpy as np
import pytest

from mintime.oracle import INFEASIBLE, OdeReduction, analytic_min_time_scalar, brute_force_min_time


def test_scalar_reference_instance():
    # a = 1, y0 = 0, c = 1/2, rho = 1: T* = ln 2
    assert analytic_min_time_scalar(1.0, 0.0, 0.5, 1.0) == pytest.approx(np.log(2.0), rel=1e-12)


def test_scalar_trivial_and_limits():
    assert analytic_min_time_scalar(1.0, 0.3, 0.3, 1.0) == 0.0
    # monotone decreasing in rho, to 0
    ts = [analytic_min_time_scalar(1.0, 0.0, 0.5, rho) for rho in (1.0, 2.0, 8.0, 64.0)]
    assert all(b < a for a, b in zip(ts, ts[1:]))
    assert ts[-1] < 0.01
    # a = 0 linear growth case
    assert analytic_min_time_scalar(0.0, 0.0, 0.5, 2.0) == pytest.approx(0.25, rel=1e-12)


def test_scalar_infeasible_flag():
    # equilibrium of the saturated dynamics sits before the target
    assert analytic_min_time_scalar(2.0, 0.0, 1.0, 1.0) == INFEASIBLE


def test_cross_oracle_agreement_scalar():
    dt = 1e-3
    for a, y0, c, rho in [(1.0, 0.0, 0.5, 1.0), (0.5, -0.2, 0.4, 1.5), (2.0, 0.1, -0.3, 3.0)]:
        red = OdeReduction(matrix=[[a]], rho=rho, y0=[y0], target=[c])
        t_bf = brute_force_min_time(red, dt, switch_budget=0, t_max=2.0)
        t_an = analytic_min_time_scalar(a, y0, c, rho)
        assert abs(t_bf - t_an) <= 2 * dt


def test_grid_consistency_under_refinement():
    red = OdeReduction(matrix=[[1.0]], rho=1.0, y0=[0.0], target=[0.5])
    dt = 2e-3
    t1 = brute_force_min_time(red, dt, switch_budget=0, t_max=2.0)
    t2 = brute_force_min_time(red, dt / 2, switch_budget=0, t_max=2.0)
    assert abs(t1 - t2) <= 2 * dt


def test_target_equals_initial():
    red = OdeReduction(matrix=[[1.0]], rho=1.0, y0=[0.4], target=[0.4])
    assert brute_force_min_time(red, 1e-3, 0, t_max=1.0) == 0.0


def test_2d_first_component_target():
    # mild coupling: minimal time close to the uncoupled scalar answer
    m = np.array([[1.0, 0.1], [0.0, 1.0]])
    red = OdeReduction(matrix=m, rho=1.0, y0=[0.0, 0.0], target=[0.5],
                       target_first_only=True)
    t = brute_force_min_time(red, 1e-3, switch_budget=1, t_max=3.0)
    assert t == pytest.approx(np.log(2.0), abs=0.05)


def test_2d_infeasible_returns_inf():
    m = np.eye(2)
    red = OdeReduction(matrix=m, rho=0.25, y0=[0.0, 0.0], target=[0.9],
                       target_first_only=True)
    assert brute_force_min_time(red, 1e-3, 1, t_max=2.0) == INFEASIBLE


def test_budget_guard():
    red = OdeReduction(matrix=[[1.0]], rho=1.0, y0=[0.0], target=[0.5])
    with pytest.raises(ValueError):
        brute_force_min_time(red, 1e-3, switch_budget=4)
