"""
Tests for the trapezoidal integrator, its Newton solver and the contraction diagnostic.
"""

import math

import numpy as np
import pytest

from app.conns.exceptions import ArgumentError, SolverError
from app.conns.integrator import (
    TRAPEZOIDAL,
    ButcherTableau,
    check_newton_contraction,
    newton_map_contraction,
    newton_solve,
    newton_update,
    read_trajectory,
    simulate,
    step_trapezoidal,
    trapezoidal_residual,
    write_trajectory,
)
from app.conns.models import NewtonConfig
from app.conns.systems import LinearSystem


def test_trapezoidal_tableau():
    assert TRAPEZOIDAL.s == 2
    assert TRAPEZOIDAL.b == (0.5, 0.5)


def test_tableau_rows_must_sum_to_c():
    with pytest.raises(ArgumentError):
        ButcherTableau(alpha=((0.0, 0.0), (0.5, 0.0)), b=(0.5, 0.5), c=(0.0, 1.0))


def test_second_order_convergence(decay, newton_cfg):
    """
    Test that halving dt divides the global error at t=1 by about four.
    """
    errors = []
    for dt in (0.02, 0.01, 0.005):
        record = simulate(decay, [1.0], dt, 1.0, newton_cfg)
        assert record.times[-1] == pytest.approx(1.0)
        errors.append(abs(record.states[-1, 0] - math.exp(-1.0)))
    for coarse, fine in zip(errors[:-1], errors[1:]):
        assert 3.5 <= coarse / fine <= 4.5


def test_newton_solve_converges_quickly(cubic, newton_cfg):
    trace = newton_solve(cubic, [1.0, 0.5], 0.01, newton_cfg)
    assert trace.converged
    assert trace.iterations <= 10
    assert trace.residual_norms[-1] <= 1e-9
    assert np.max(np.abs(trapezoidal_residual(cubic, trace.x, cubic.rhs(trace.x), trace.k2_star, 0.01))) <= 1e-9


def test_newton_update_matches_solver_iterates(cubic, newton_cfg):
    """
    Test that every recorded iterate is one Newton map application of the previous one.
    """
    x = np.array([1.0, 0.5])
    trace = newton_solve(cubic, x, 0.01, newton_cfg)
    k1 = cubic.rhs(x)
    for k_in, k_out in zip(trace.iterates[:-1], trace.iterates[1:]):
        assert np.allclose(newton_update(cubic, x, k1, k_in, 0.01), k_out, rtol=0, atol=1e-14)


def test_step_uses_trapezoidal_rule(decay, newton_cfg):
    x_next, trace = step_trapezoidal(decay, [1.0], 0.1, newton_cfg)
    # exact trapezoidal update for dx/dt = -x
    assert x_next[0] == pytest.approx((1 - 0.05) / (1 + 0.05), abs=1e-12)
    assert trace.converged


def test_simulate_grid_and_iteration_counts(cubic, newton_cfg):
    record = simulate(cubic, [1.0, 0.5], 0.01, 0.1, newton_cfg, record_traces=True)
    assert record.times.shape == (11,)
    assert record.states.shape == (11, 2)
    assert record.iterations_per_step.shape == (10,)
    assert record.total_iterations == sum(trace.iterations for trace in record.traces)
    assert record.iteration_label == "newton_iters"


def test_simulate_rejects_bad_step(cubic, newton_cfg):
    with pytest.raises(ArgumentError):
        simulate(cubic, [1.0, 0.5], 0.0, 1.0, newton_cfg)
    with pytest.raises(ArgumentError):
        simulate(cubic, [1.0, 0.5], 0.01, -1.0, newton_cfg)


def test_singular_jacobian_reports_time_index(newton_cfg):
    """
    Test that a singular Newton Jacobian fails with the step index.
    """
    system = LinearSystem({"A": [[2.0]]})
    with pytest.raises(SolverError) as exc:
        simulate(system, [1.0], 1.0, 1.0, newton_cfg)
    assert exc.value.time_index == 0


def test_newton_init_policies_agree(cubic):
    """
    Test that both k2 initializations give the same trajectory up to solver noise.
    """
    warm = simulate(cubic, [1.2, 0.3], 0.01, 0.5, NewtonConfig(k2_init_policy="previous_step"))
    cold = simulate(cubic, [1.2, 0.3], 0.01, 0.5, NewtonConfig(k2_init_policy="f_of_x"))
    assert np.max(np.abs(warm.states - cold.states)) <= 1e-7


def test_contraction_of_scalar_square_residual():
    """
    Test that the Newton map of k^2 = 0 contracts with factor one half.
    """
    estimate, failures = newton_map_contraction(
        lambda k: k**2,
        lambda k: 2.0 * k,
        [np.array([1.0]), np.array([-0.5]), np.array([3.0])],
    )
    assert failures == []
    assert estimate == pytest.approx(0.5, abs=1e-3)


def flat_near_zero(k: np.ndarray) -> np.ndarray:
    return np.where(np.abs(k) < 0.1, 0.0, 2.0 * k)


def test_contraction_skips_singular_points():
    estimate, failures = newton_map_contraction(lambda k: k**2, flat_near_zero, [np.array([0.0]), np.array([1.0])])
    assert failures == [0]
    assert estimate == pytest.approx(0.5, abs=1e-3)


def test_contraction_fails_when_every_point_is_singular():
    with pytest.raises(SolverError):
        newton_map_contraction(lambda k: k**2, flat_near_zero, [np.array([0.0])])


def test_newton_map_of_linear_system_is_constant(decay):
    assert check_newton_contraction(decay, [1.0], 0.01, [np.array([0.3])]) < 1e-6


def test_check_contraction_on_cubic(cubic):
    x = np.array([1.0, 0.5])
    assert check_newton_contraction(cubic, x, 0.01, [cubic.rhs(x)]) < 1.0


def test_trajectory_csv(tmp_path, cubic, newton_cfg):
    """
    Test the trajectory CSV layout and that it reads back.
    """
    record = simulate(cubic, [1.0, 0.5], 0.01, 0.05, newton_cfg)
    path = tmp_path / "traj.csv"
    write_trajectory(record, path)

    lines = path.read_text().splitlines()
    assert lines[0] == "t,x,y,newton_iters"
    assert lines[1].endswith(",0")
    assert len(lines) == 7

    again = read_trajectory(path)
    assert np.array_equal(again.states, record.states)
    assert np.array_equal(again.iterations_per_step, record.iterations_per_step)
    assert again.system_name == "cubic_oscillator"


def test_newton_converges_quadratically_near_the_root(cubic):
    """
    Test that the last three residuals above the roundoff floor give a
    log-log slope of at least 1.8.
    """
    trace = newton_solve(cubic, [1.5, 1.0], 0.05, NewtonConfig(tol=1e-15, max_iter=20), k2_init=np.zeros(2))
    residuals = [r for r in trace.residual_norms if r > 1e-12]
    assert len(residuals) >= 3
    r0, r1, r2 = residuals[-3:]
    assert math.log(r2 / r1) / math.log(r1 / r0) >= 1.8


def test_newton_map_is_flat_at_the_root_of_a_nonlinear_system(cubic):
    """
    Test that the contraction estimate vanishes at the converged k2 of the cubic oscillator.
    """
    x = np.array([1.0, 0.5])
    trace = newton_solve(cubic, x, 0.05, NewtonConfig(tol=1e-13, max_iter=50))
    assert trace.converged
    assert check_newton_contraction(cubic, x, 0.05, [trace.k2_star]) <= 1e-3
    assert check_newton_contraction(cubic, x, 0.05, [trace.k2_star + 5.0]) > 1e-3
