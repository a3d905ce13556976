"""
Tests for the dynamical systems, the sampler and the registry.
"""

import json
from pathlib import Path

import numpy as np
import pytest

from app.conns.exceptions import ArgumentError, ConfigError
from app.conns.systems import (
    SYSTEM_REGISTRY,
    DynamicalSystem,
    InitialConditionSampler,
    KundurSystem,
    LinearSystem,
    eval_jacobian,
    eval_rhs,
    load_system_file,
    make_system,
    register_system,
)
from app.conns.systems.registry import dump_system_file, get_system_class

CONFIGS_DIR = Path(__file__).resolve().parent.parent / "configs"
KUNDUR_FILE = CONFIGS_DIR / "systems" / "kundur_default.json"
KUNDUR_REDUCED_FILE = CONFIGS_DIR / "systems" / "kundur_reduced.json"


def numerical_jacobian(system: DynamicalSystem, x: np.ndarray, h: float = 1e-5) -> np.ndarray:
    J = np.empty((system.n, system.n))
    for j in range(system.n):
        e = np.zeros(system.n)
        e[j] = h
        J[:, j] = (system.rhs(x + e) - system.rhs(x - e)) / (2 * h)
    return J


def test_cubic_rhs_at_base_state(cubic):
    """
    Test the cubic oscillator right-hand side against hand-computed values.
    """
    assert np.allclose(eval_rhs(cubic, [1.0, 0.5]), [0.15, -2.0125], atol=1e-15)


def test_cubic_rhs_at_unit_state(cubic):
    assert np.allclose(eval_rhs(cubic, [1.0, 1.0]), [1.9, -2.1], atol=1e-15)


def test_hopf_keeps_mu_constant(hopf):
    assert eval_rhs(hopf, [0.1, 0.3, -0.2])[0] == 0.0


JACOBIAN_CASES = [
    (make_system("cubic_oscillator"), np.zeros(2), 1.0),
    (make_system("hopf"), np.zeros(3), 1.0),
    (load_system_file(KUNDUR_FILE), load_system_file(KUNDUR_FILE).equilibrium(), 0.3),
]


@pytest.mark.parametrize("system, center, spread", JACOBIAN_CASES, ids=["cubic_oscillator", "hopf", "kundur"])
def test_jacobian_matches_finite_differences(system, center, spread):
    """
    Test the analytic Jacobians against central differences at 100 random states,
    entry by entry relative to max(|J_ij|, 1).
    """
    rng = np.random.default_rng(0)
    worst = 0.0
    for _ in range(100):
        x = center + spread * rng.standard_normal(system.n)
        J = eval_jacobian(system, x)
        worst = max(worst, float(np.max(np.abs(J - numerical_jacobian(system, x)) / np.maximum(np.abs(J), 1.0))))
    assert worst <= 1e-6


def test_kundur_off_diagonal_coupling_term():
    system = load_system_file(KUNDUR_FILE)
    x = system.equilibrium() + 0.2
    x[1] += 0.3
    J = system.jacobian(x)
    N = system.machines
    assert J[N + 0, 1] == pytest.approx(system.params["B"][0, 1] * np.cos(x[0] - x[1]), rel=1e-14)


def test_kundur_coupling_sines_cancel_pairwise():
    """
    Test that with symmetric B the coupling flows sum to zero, so at zero
    speed the speed derivatives sum to sum(p) for any angles.
    """
    system = load_system_file(KUNDUR_FILE)
    N = system.machines
    rng = np.random.default_rng(5)
    for _ in range(20):
        x = np.concatenate([rng.uniform(-np.pi, np.pi, N), np.zeros(N)])
        assert np.sum(system.rhs(x)[N:]) == pytest.approx(float(np.sum(system.params["p"])), abs=1e-12)


def test_kundur_equilibrium_is_stationary():
    """
    Test that the default operating point is an equilibrium with delta_1 = 0.
    """
    system = load_system_file(KUNDUR_FILE)
    x_eq = system.equilibrium()
    assert system.n == 10
    assert system.machines == 5
    assert x_eq[0] == 0.0
    assert np.max(np.abs(system.rhs(x_eq))) < 1e-10
    assert np.array_equal(system.default_base_state(), x_eq)


def test_kundur_requires_parameters():
    with pytest.raises(ConfigError, match="missing"):
        KundurSystem({"p": [0.0, 0.0]})


def test_kundur_without_balanced_power_has_no_equilibrium():
    """
    Test that an unbalanced network is rejected instead of returning a non-stationary point.
    """
    system = KundurSystem({"p": [0.3, 0.0], "d": [0.4, 0.4], "B": [[0.0, 2.0], [2.0, 0.0]]})
    with pytest.raises(ConfigError, match="no equilibrium"):
        system.equilibrium()


def test_single_machine_needs_zero_power():
    assert np.array_equal(KundurSystem({"p": [0.0], "d": [0.5], "B": [[0.0]]}).equilibrium(), np.zeros(2))
    with pytest.raises(ConfigError):
        KundurSystem({"p": [0.2], "d": [0.5], "B": [[0.0]]}).equilibrium()


def test_reduced_variant_has_four_states():
    system = load_system_file(KUNDUR_REDUCED_FILE)
    assert system.n == 4
    assert np.max(np.abs(system.rhs(system.equilibrium()))) < 1e-10


def test_generator_subset_selects_machines():
    system = KundurSystem(
        {"p": [0.5, 0.25, -0.5], "d": [0.4, 0.4, 0.4], "B": [[0, 10, 0.5], [10, 0, 0.5], [0.5, 0.5, 0]], "generators": [0, 2]}
    )
    assert system.n == 4
    assert system.state_names == ("delta1", "delta2", "omega1", "omega2")


def test_kundur_rejects_bad_generator_set():
    with pytest.raises(ConfigError):
        KundurSystem({"p": [0.0, 0.0], "d": [1.0, 1.0], "B": [[0, 1], [1, 0]], "generators": [0, 2]})


def test_rhs_rejects_wrong_dimension(cubic):
    with pytest.raises(ArgumentError):
        cubic.rhs([1.0, 2.0, 3.0])


def test_linear_system_requires_square_matrix():
    with pytest.raises(ConfigError):
        LinearSystem({"A": [[1.0, 2.0]]})


def test_parameters_are_read_only():
    system = LinearSystem({"A": [[-1.0, 0.0], [0.0, -2.0]]})
    with pytest.raises(ValueError):
        system.params["A"][0, 0] = 5.0


def test_unknown_system_is_rejected():
    with pytest.raises(ConfigError, match="Unknown system"):
        get_system_class("pendulum")


def test_register_user_system():
    """
    Test that user-defined systems become available through the registry.
    """

    class Scalar(LinearSystem):
        name = "scalar_test"

    register_system("scalar_test", Scalar)
    try:
        system = make_system("scalar_test", {"A": [[-2.0]]})
        assert isinstance(system, Scalar)
    finally:
        SYSTEM_REGISTRY.pop("scalar_test")


def test_register_rejects_non_systems():
    with pytest.raises(ConfigError):
        register_system("bad", dict)


def test_system_file_round_trip(tmp_path):
    """
    Test that a dumped parameter file rebuilds the same Kundur system.
    """
    system = load_system_file(KUNDUR_FILE)
    path = tmp_path / "system.json"
    dump_system_file(system, path)

    with open(path, encoding="utf-8") as f:
        assert json.load(f)["params"]["generators"] == [0, 1, 2, 3, 4]
    again = load_system_file(path)
    x = system.equilibrium() + 0.05
    assert np.array_equal(again.rhs(x), system.rhs(x))


def test_sampler_is_deterministic(cubic):
    a = InitialConditionSampler(cubic.default_base_state(), 0.5, seed=11)
    b = InitialConditionSampler(cubic.default_base_state(), 0.5, seed=11)
    assert np.array_equal(a.sample(), b.sample())


def test_trajectory_streams_depend_only_on_seed_and_id(cubic):
    """
    Test that per-trajectory samplers do not depend on draw order.
    """
    sampler = InitialConditionSampler(cubic.default_base_state(), 0.5, seed=11)
    late = sampler.for_trajectory(3).sample()
    sampler.sample()
    assert np.array_equal(sampler.for_trajectory(3).sample(), late)
    assert not np.array_equal(sampler.for_trajectory(4).sample(), late)


def test_scaled_sampler_shrinks_perturbation(cubic):
    base = cubic.default_base_state()
    sampler = InitialConditionSampler(base, 0.5, seed=2)
    assert np.array_equal(sampler.scaled(0.0).sample(), base)
    full = sampler.for_trajectory(0).sample() - base
    half = sampler.scaled(0.5).for_trajectory(0).sample() - base
    assert np.allclose(half, 0.5 * full)


def test_sampler_rejects_negative_scale():
    with pytest.raises(ArgumentError):
        InitialConditionSampler(np.zeros(2), [-1.0, 1.0])
