import os
from dataclasses import replace

os.environ.setdefault("LOGS_PATH", "")

import numpy as np  # noqa: E402
import pytest  # noqa: E402

from app.conns.config_loader import RunConfig, load_run_config  # noqa: E402
from app.conns.dataset import Dataset, generate_dataset  # noqa: E402
from app.conns.models import Architecture, ModelMetadata, NewtonConfig, ProjectionSpec  # noqa: E402
from app.conns.network import NetworkParams, init_params  # noqa: E402
from app.conns.projection import project_network  # noqa: E402
from app.conns.systems import CubicOscillator, HopfNormalForm, InitialConditionSampler, LinearSystem  # noqa: E402

TEST_DT = 0.01


@pytest.fixture()
def cubic() -> CubicOscillator:
    return CubicOscillator()


@pytest.fixture()
def hopf() -> HopfNormalForm:
    return HopfNormalForm()


@pytest.fixture()
def decay() -> LinearSystem:
    """dx/dt = -x"""
    return LinearSystem({"A": [[-1.0]]})


@pytest.fixture()
def newton_cfg() -> NewtonConfig:
    return NewtonConfig(tol=1e-9, max_iter=50)


@pytest.fixture()
def cubic_sampler(cubic) -> InitialConditionSampler:
    return InitialConditionSampler(cubic.default_base_state(), 0.3, seed=7)


@pytest.fixture()
def small_dataset(cubic, cubic_sampler, newton_cfg) -> Dataset:
    return generate_dataset(cubic, cubic_sampler, 4, TEST_DT, 0.1, newton_cfg, include_fixed_point_pairs=True)


@pytest.fixture()
def small_network() -> NetworkParams:
    p = init_params(2, Architecture(width=8, hidden_layers=2), seed=3)
    rng = np.random.default_rng(3)
    return replace(p, b=[0.1 * rng.standard_normal(b.shape) for b in p.b])


@pytest.fixture()
def contracting_network(small_network) -> NetworkParams:
    """Feasible for a margin of 0.5, so Phi contracts in k2 with factor <= 0.125."""
    spec = ProjectionSpec(mode="spectral", eps=0.5)
    p, _ = project_network(small_network, spec)
    return replace(p, meta=ModelMetadata(system_name="cubic_oscillator", dt=TEST_DT, projection_mode="spectral", eps_proj=0.5))


@pytest.fixture()
def tiny_overrides(tmp_path) -> dict:
    return {
        "out_dir": str(tmp_path / "runs"),
        "integration": {"dt": TEST_DT, "t_end": 0.05},
        "data": {"train_trajectories": 3, "test_trajectories": 2},
        "train": {"width": 8, "hidden_layers": 2, "epochs": 20, "log_every": 10, "lr": 1.0e-3},
        "fixed_point": {
            "constrained": {"tol": 1.0e-6, "max_iter": 200},
            "unconstrained": {"tol": 1.0e-6, "max_iter": 200},
        },
        "eval": {"vector_field": {"points": 5, "span": 0.5}},
    }


@pytest.fixture()
def config(tiny_overrides) -> RunConfig:
    return load_run_config(overrides=tiny_overrides)
