"""
Full-batch Adam training with an optional projection after every step.
"""

import time
from dataclasses import dataclass, replace
from typing import List, Optional, Tuple

import numpy as np

from .dataset import Dataset, Standardizer
from .exceptions import ArgumentError, TrainingError
from .logging_config import setup_logger
from .models import Architecture, TrainingConfig, TrainReport
from .network import NetworkParams, batch_arrays, init_params, loss_and_gradient_arrays, max_singular_values
from .projection import project_network

logger = setup_logger()


@dataclass
class AdamState:
    """First and second moment estimates, one array per parameter tensor."""

    m: List[np.ndarray]
    v: List[np.ndarray]
    t: int = 0

    @classmethod
    def zeros_like(cls, p: NetworkParams) -> "AdamState":
        return cls(m=[np.zeros_like(x) for x in p.tensors()], v=[np.zeros_like(x) for x in p.tensors()], t=0)


def adam_step(state: AdamState, p: NetworkParams, g: NetworkParams, cfg: TrainingConfig) -> Tuple[AdamState, NetworkParams]:
    """One bias-corrected Adam update; inputs are not modified."""
    t = state.t + 1
    new_m, new_v, new_params = [], [], []
    for theta, grad, m, v in zip(p.tensors(), g.tensors(), state.m, state.v):
        m = cfg.beta1 * m + (1.0 - cfg.beta1) * grad
        v = cfg.beta2 * v + (1.0 - cfg.beta2) * grad**2
        m_hat = m / (1.0 - cfg.beta1**t)
        v_hat = v / (1.0 - cfg.beta2**t)
        new_params.append(theta - cfg.lr * m_hat / (np.sqrt(v_hat) + cfg.eps_adam))
        new_m.append(m)
        new_v.append(v)
    return AdamState(m=new_m, v=new_v, t=t), p.with_tensors(new_params)


def train(
    ds: Dataset, arch: Architecture, cfg: TrainingConfig, init: Optional[NetworkParams] = None
) -> Tuple[NetworkParams, TrainReport]:
    """
    Train Phi on the Newton pairs of ``ds``.

    With a projection mode set, every weight matrix W1..Wh is projected onto
    the constraint set after each Adam step; U and the biases stay free.

    Args:
        ds: Training pairs.
        arch: Width, depth and output activation; ignored when ``init`` is given.
        cfg: Optimizer, projection and stopping settings.
        init: Starting parameters, e.g. from constrained_init.

    Returns:
        The trained parameters and a report with one loss and one
        singular-value audit per epoch.

    Raises:
        ArgumentError: for an empty dataset or an init of the wrong dimension.
        TrainingError: when the loss becomes non-finite.
    """
    K2, X, target = batch_arrays(ds)
    if init is None:
        p = init_params(ds.n, arch, seed=cfg.seed)
        if cfg.standardize:
            p = replace(p, normalization=Standardizer.fit(ds).to_dict())
    else:
        if init.n != ds.n:
            raise ArgumentError(f"Initial network has n={init.n}, dataset has n={ds.n}")
        p = init

    spec = cfg.projection_spec
    if spec is not None:
        p, _ = project_network(p, spec)
    p = replace(
        p,
        meta=replace(
            p.meta,
            system_name=ds.system_name,
            dt=ds.dt,
            projection_mode=cfg.projection_mode,
            eps_proj=cfg.eps_proj if spec is not None else None,
        ),
    )

    report = TrainReport()
    state = AdamState.zeros_like(p)
    start = time.perf_counter()
    logger.info(
        "Training: %s samples, n=%s m=%s h=%s, projection=%s", len(ds), p.n, p.m, p.h, cfg.projection_mode
    )

    for epoch in range(1, cfg.epochs + 1):
        loss, g = loss_and_gradient_arrays(p, K2, X, target)
        if not np.isfinite(loss):
            raise TrainingError("Loss is not finite", epoch=epoch)
        report.loss_history.append(loss)
        if cfg.loss_target is not None and loss <= cfg.loss_target:
            report.stopped_reason = "loss_target"
            logger.info("Training: reached loss target %.3e at epoch %s", cfg.loss_target, epoch)
            break

        state, p = adam_step(state, p, g, cfg)
        if spec is not None:
            p, _ = project_network(p, spec)
        report.sv_audit_history.append(max_singular_values(p))

        if epoch % cfg.log_every == 0:
            logger.info("Training: epoch %s loss %.6e", epoch, loss)

    report.wall_time = time.perf_counter() - start
    return p, report
