"""
Tests for Adam and the full-batch training loop.
"""

from dataclasses import replace

import numpy as np
import pytest

from app.conns.exceptions import ArgumentError, TrainingError
from app.conns.models import Architecture, TrainingConfig
from app.conns.network import init_params, loss_and_gradient
from app.conns.training import AdamState, adam_step, train

ARCH = Architecture(width=8, hidden_layers=2)


def test_adam_first_step_moves_by_learning_rate(small_network, small_dataset):
    """
    Test that the bias-corrected first Adam step has size lr where the gradient is non-zero.
    """
    cfg = TrainingConfig(lr=1e-3)
    _, g = loss_and_gradient(small_network, small_dataset)
    before = [t.copy() for t in small_network.tensors()]
    state, p = adam_step(AdamState.zeros_like(small_network), small_network, g, cfg)

    assert state.t == 1
    assert all(np.array_equal(a, b) for a, b in zip(small_network.tensors(), before))
    for old, new, grad in zip(before, p.tensors(), g.tensors()):
        mask = np.abs(grad) > 1e-6
        assert np.allclose(np.abs(new - old)[mask], 1e-3, rtol=1e-2)


def test_training_reduces_loss(small_dataset):
    p, report = train(small_dataset, ARCH, TrainingConfig(lr=1e-3, epochs=200, log_every=100))
    assert len(report.loss_history) == 200
    assert report.loss_history[-1] < report.loss_history[0]
    assert report.stopped_reason == "epochs"
    assert p.meta.system_name == "cubic_oscillator"
    assert p.meta.dt == small_dataset.dt
    assert not p.meta.constrained


def test_constrained_training_audit_stays_feasible(small_dataset):
    """
    Test that every epoch's singular-value audit respects the projection bound.
    """
    cfg = TrainingConfig(lr=1e-2, epochs=50, projection_mode="spectral", eps_proj=1e-3)
    p, report = train(small_dataset, ARCH, cfg)
    assert len(report.sv_audit_history) == 50
    for audit in report.sv_audit_history:
        assert all(sigma <= 1 - 1e-3 + 1e-8 for sigma in audit.values())
    assert p.meta.projection_mode == "spectral"
    assert p.meta.eps_proj == 1e-3


def test_symmetric_training_keeps_square_layers_symmetric(small_dataset):
    cfg = TrainingConfig(lr=1e-2, epochs=20, projection_mode="symmetric", eps_proj=1e-2)
    p, _ = train(small_dataset, ARCH, cfg)
    W2 = p.W[0]
    assert np.allclose(W2, W2.T, atol=1e-12)


def test_loss_target_stops_training(small_dataset):
    _, report = train(small_dataset, ARCH, TrainingConfig(epochs=100, loss_target=1e9))
    assert report.stopped_reason == "loss_target"
    assert len(report.loss_history) == 1
    assert report.to_dict()["epochs_run"] == 1


def test_non_finite_loss_raises_with_epoch(small_dataset):
    p = init_params(2, ARCH, seed=0)
    p = replace(p, W1=np.full_like(p.W1, np.nan))
    with pytest.raises(TrainingError) as exc:
        train(small_dataset, ARCH, TrainingConfig(epochs=5), init=p)
    assert exc.value.epoch == 1


def test_init_dimension_must_match(small_dataset):
    p = init_params(3, ARCH, seed=0)
    with pytest.raises(ArgumentError):
        train(small_dataset, ARCH, TrainingConfig(epochs=1), init=p)


def test_standardize_stores_normalization(small_dataset):
    p, _ = train(small_dataset, ARCH, TrainingConfig(epochs=2, standardize=True))
    assert p.normalization is not None
    assert p.standardizer.k2_scale > 0


def test_training_is_deterministic(small_dataset):
    cfg = TrainingConfig(lr=1e-3, epochs=20, seed=5)
    a, _ = train(small_dataset, ARCH, cfg)
    b, _ = train(small_dataset, ARCH, cfg)
    assert all(np.array_equal(x, y) for x, y in zip(a.tensors(), b.tensors()))
