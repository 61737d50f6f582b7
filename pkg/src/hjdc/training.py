"""Adam training of the momentum-regression loss with subinterval scheduling.

[0, T] is split into M_T equal subintervals; each gets an independently
initialized network trained only on its own time nodes.  Every iteration
draws one fresh particle batch (without replacement) shared by all time
nodes of the subinterval.  Time node i=0 is excluded from the loss.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import field_net as fn
from .integrators import TrajectoryBundle

__all__ = ["TrainPlan", "AdamState", "adam_step", "train", "TrainingDivergedError"]


class TrainingDivergedError(ArithmeticError):
    """Non-finite loss during training; carries the iteration index."""

    def __init__(self, message, iteration=None):
        super().__init__(message)
        self.iteration = iteration


@dataclass
class TrainPlan:
    lr: float
    n_iter: int
    batch_size: int
    M_T: int = 1
    loss_kind: str = "Quadratic"
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps_adam: float = 1e-8


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    step_count: int = 0

    @classmethod
    def fresh(cls, n_params):
        return cls(m=np.zeros(n_params), v=np.zeros(n_params), step_count=0)


def adam_step(state: AdamState, params, grad, plan: TrainPlan):
    """Standard bias-corrected Adam update; returns (state, new params)."""
    t = state.step_count + 1
    m = plan.beta1 * state.m + (1 - plan.beta1) * grad
    v = plan.beta2 * state.v + (1 - plan.beta2) * grad**2
    m_hat = m / (1 - plan.beta1**t)
    v_hat = v / (1 - plan.beta2**t)
    new_params = params - plan.lr * m_hat / (np.sqrt(v_hat) + plan.eps_adam)
    return AdamState(m=m, v=v, step_count=t), new_params


def _interval_nodes(M, M_T):
    """Time-node indices per subinterval; node 0 never trains, node M is last's."""
    if M % M_T != 0:
        raise ValueError(f"M_T={M_T} must divide M={M}")
    ell = M // M_T
    groups = []
    for j in range(M_T):
        nodes = list(range(j * ell + (1 if j == 0 else 0), (j + 1) * ell))
        if j == M_T - 1:
            nodes.append(M)
        groups.append(nodes)
    return groups


def train(bundle: TrajectoryBundle, net_template, plan: TrainPlan,
          model=None, loss_callback=None):
    """Fit one network per subinterval; returns (PiecewiseField, loss history).

    net_template: dict {L, width, kappa, activation} or a builder accepting
    (d, seed).  Deterministic in plan.seed.
    """
    if plan.batch_size > bundle.N:
        raise ValueError(f"batch size {plan.batch_size} exceeds N={bundle.N}")
    groups = _interval_nodes(bundle.M, plan.M_T)
    times = bundle.times()
    T_total = bundle.M * bundle.h
    width_t = T_total / plan.M_T

    intervals = []
    history = []
    rng = np.random.Generator(np.random.Philox(plan.seed))
    it_global = 0
    for j, nodes in enumerate(groups):
        if callable(net_template):
            net = net_template(bundle.d, plan.seed + j)
        else:
            net = fn.init_he(bundle.d, net_template["L"], net_template["width"],
                             net_template["activation"], seed=plan.seed + j,
                             kappa=net_template.get("kappa", 0.5))
        theta = fn.get_flat_params(net)
        state = AdamState.fresh(theta.size)
        node_idx = np.asarray(nodes)
        X_all = bundle.states[node_idx, :, : bundle.d]   # (n_nodes, N, d)
        P_all = bundle.states[node_idx, :, bundle.d :]
        T_all = np.repeat(times[node_idx], plan.batch_size)
        for _ in range(plan.n_iter):
            batch = rng.choice(bundle.N, size=plan.batch_size, replace=False)
            X = X_all[:, batch, :].reshape(-1, bundle.d)
            P = P_all[:, batch, :].reshape(-1, bundle.d)
            value, grad = fn.loss_value_and_param_grad(
                net, X, T_all, P, model=model, loss_kind=plan.loss_kind)
            if not np.isfinite(value):
                raise TrainingDivergedError(
                    f"non-finite loss at iteration {it_global}", iteration=it_global)
            history.append(value)
            if loss_callback is not None:
                loss_callback(it_global, j, value)
            state, theta = adam_step(state, theta, grad, plan)
            fn.set_flat_params(net, theta)
            it_global += 1
        t_lo = bundle.t0 + j * width_t
        t_hi = bundle.t0 + (j + 1) * width_t
        intervals.append((t_lo, t_hi, net))
    return fn.PiecewiseField(intervals=intervals), np.asarray(history)
