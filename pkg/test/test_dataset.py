"""
Tests for Newton-step dataset generation, splitting and file formats.
"""

import numpy as np
import pytest

from app.conns.dataset import (
    Dataset,
    Standardizer,
    export_csv,
    generate_dataset,
    load_dataset,
    save_dataset,
    split_by_trajectory,
)
from app.conns.exceptions import ArgumentError, FormatError
from app.conns.integrator import newton_update, simulate
from app.conns.network import save_model


def test_sample_count_equals_newton_iterations(cubic, cubic_sampler, newton_cfg):
    """
    Test that every Newton iteration of every step becomes exactly one sample.
    """
    ds = generate_dataset(cubic, cubic_sampler, 3, 0.01, 0.1, newton_cfg, include_fixed_point_pairs=False)
    expected = sum(
        simulate(cubic, x0, 0.01, 0.1, newton_cfg).total_iterations for x0 in ds.initial_conditions().values()
    )
    assert len(ds) == expected
    assert ds.trajectory_count == 3
    assert set(ds.trajectory_ids.tolist()) == {0, 1, 2}


def test_fixed_point_pairs_add_one_sample_per_step(cubic, cubic_sampler, newton_cfg):
    plain = generate_dataset(cubic, cubic_sampler, 2, 0.01, 0.1, newton_cfg, include_fixed_point_pairs=False)
    extended = generate_dataset(cubic, cubic_sampler, 2, 0.01, 0.1, newton_cfg)
    assert extended.extra["include_fixed_point_pairs"]
    assert len(extended) == len(plain) + 2 * 10


def test_samples_are_newton_map_pairs(small_dataset, cubic):
    """
    Test that k2_out is the Newton map applied to k2_in at the anchor state.
    """
    for sample in small_dataset.samples[:25]:
        expected = newton_update(cubic, sample.x, cubic.rhs(sample.x), sample.k2_in, small_dataset.dt)
        assert np.allclose(sample.k2_out, expected, rtol=0, atol=1e-12)


def test_generation_is_deterministic_across_workers(cubic, cubic_sampler, newton_cfg):
    serial = generate_dataset(cubic, cubic_sampler, 4, 0.01, 0.05, newton_cfg, workers=1)
    parallel = generate_dataset(cubic, cubic_sampler, 4, 0.01, 0.05, newton_cfg, workers=3)
    assert serial.equals(parallel)


def test_generation_rejects_zero_trajectories(cubic, cubic_sampler, newton_cfg):
    with pytest.raises(ArgumentError):
        generate_dataset(cubic, cubic_sampler, 0, 0.01, 0.1, newton_cfg)


def test_split_keeps_trajectories_whole(small_dataset):
    """
    Test that no trajectory contributes samples to both sides of a split.
    """
    train, test = split_by_trajectory(small_dataset, 0.25, seed=1)
    train_ids = set(train.trajectory_ids.tolist())
    test_ids = set(test.trajectory_ids.tolist())
    assert len(test_ids) == 1
    assert not train_ids & test_ids
    assert len(train) + len(test) == len(small_dataset)
    assert set(test.initial_conditions()) == test_ids


@pytest.mark.parametrize("fraction", [0.0, 1.0, 0.05, 0.95])
def test_split_rejects_empty_sides(small_dataset, fraction):
    with pytest.raises(ArgumentError):
        split_by_trajectory(small_dataset, fraction)


def test_save_and_load_are_bit_exact(tmp_path, small_dataset):
    path = tmp_path / "train.cnns"
    save_dataset(small_dataset, path)
    assert path.read_bytes()[:4] == b"CNNS"
    assert load_dataset(path).equals(small_dataset)


def test_empty_dataset_is_saved(tmp_path):
    ds = Dataset.empty(2, system_name="cubic_oscillator", dt=0.01, newton_tol=1e-9, trajectory_count=1, seed=0)
    path = tmp_path / "empty.cnns"
    save_dataset(ds, path)
    assert len(load_dataset(path)) == 0


def test_load_rejects_trailing_bytes(tmp_path, small_dataset):
    path = tmp_path / "train.cnns"
    save_dataset(small_dataset, path)
    path.write_bytes(path.read_bytes() + b"\x00" * 8)
    with pytest.raises(FormatError):
        load_dataset(path)


def test_load_rejects_checkpoint_files(tmp_path, small_network):
    path = tmp_path / "model.cnnm"
    save_model(small_network, path)
    with pytest.raises(FormatError):
        load_dataset(path)


def test_dataset_rejects_inconsistent_columns():
    with pytest.raises(ArgumentError):
        Dataset(
            x=np.zeros((3, 2)),
            k2_in=np.zeros((2, 2)),
            k2_out=np.zeros((3, 2)),
            trajectory_ids=np.zeros(3, dtype=np.int64),
            time_indices=np.zeros(3, dtype=np.int64),
            system_name="cubic_oscillator",
            dt=0.01,
            newton_tol=1e-9,
            trajectory_count=1,
            seed=0,
        )


def test_export_csv_header(tmp_path, small_dataset):
    path = tmp_path / "train.csv"
    export_csv(small_dataset, path)
    lines = path.read_text().splitlines()
    assert lines[0] == "traj,t_idx,x1,x2,k2_in1,k2_in2,k2_out1,k2_out2"
    assert len(lines) == len(small_dataset) + 1


def test_standardizer_fit(small_dataset):
    """
    Test that the fitted transform centres x and uses one scale for k2.
    """
    std = Standardizer.fit(small_dataset)
    k2, x = std.transform(small_dataset.k2_in, small_dataset.x)
    assert np.allclose(x.mean(axis=0), 0.0, atol=1e-12)
    assert np.allclose(k2 * std.k2_scale, small_dataset.k2_in)
    again = Standardizer.from_dict(std.to_dict())
    assert again.k2_scale == std.k2_scale
    assert Standardizer.from_dict(None) is None
