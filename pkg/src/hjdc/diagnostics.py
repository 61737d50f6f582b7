"""Reported quantities: residuals, oracle errors, per-node curves, energy.

The residual of a candidate field psi is the gradient of the equation
itself,  Res(x,t) = |d/dt grad psi + hess(psi) dH/dp(x, grad psi)
+ dH/dx(x, grad psi)|,  which vanishes identically for an exact smooth
solution.
"""

from __future__ import annotations

import csv
import json

import numpy as np

__all__ = [
    "residual",
    "error_field",
    "loss_curves",
    "weighted_L1_residual",
    "energy_curve",
    "error_vs_n_study",
    "write_curves_csv",
    "write_grid_csv",
    "write_summary_json",
]


def residual(field, model, x, t):
    """Pointwise residual norm; field must expose grad_xt/second_derivatives."""
    x = np.asarray(x, dtype=float)
    squeeze = x.ndim == 1
    X = np.atleast_2d(x)
    g, _ = field.grad_xt(X, t)
    dt_grad, hess = field.second_derivatives(X, t)
    dHdp = model.grad_p(X, g)
    dHdx = model.grad_x(X, g)
    vec = dt_grad + np.einsum("bij,bj->bi", hess, dHdp) + dHdx
    out = np.sqrt(np.sum(vec * vec, axis=-1))
    return float(out[0]) if squeeze else out


def error_field(field, oracle_grad, x, t):
    """|grad psi - grad u| against an oracle gradient oracle_grad(x, t)."""
    x = np.asarray(x, dtype=float)
    squeeze = x.ndim == 1
    X = np.atleast_2d(x)
    g, _ = field.grad_xt(X, t)
    e = g - np.atleast_2d(np.asarray(oracle_grad(X, t), dtype=float))
    out = np.sqrt(np.sum(e * e, axis=-1))
    return float(out[0]) if squeeze else out


def loss_curves(field, bundle):
    """Per-node (eps_i, delta_i, mse_i) of the gradient-vs-momentum error.

    e_i^(k) = grad psi(x_i^(k), t_i) - p_i^(k); eps_i = mean |e|,
    delta_i = mean |e_{i+1} - e_i| / h (undefined at the last node -> NaN),
    mse_i = mean |e|^2.
    """
    times = bundle.times()
    M, N, d = bundle.M, bundle.N, bundle.d
    e = np.empty((M + 1, N, d))
    for i in range(M + 1):
        g, _ = field.grad_xt(bundle.positions(i), times[i])
        e[i] = g - bundle.momenta(i)
    norms = np.sqrt(np.sum(e * e, axis=-1))
    eps = norms.mean(axis=1)
    mse = (norms**2).mean(axis=1)
    diff = np.sqrt(np.sum((e[1:] - e[:-1]) ** 2, axis=-1)).mean(axis=1) / bundle.h
    delta = np.concatenate([diff, [np.nan]])
    return eps, delta, mse


def weighted_L1_residual(field, model, bundle, i):
    """Particle average of the residual at time node i."""
    t = bundle.t0 + i * bundle.h
    return float(np.mean(residual(field, model, bundle.positions(i), t)))


def energy_curve(model, bundle, field=None):
    """Mean Hamiltonian per node; momenta from the bundle or from the field."""
    times = bundle.times()
    out = np.empty(bundle.M + 1)
    for i in range(bundle.M + 1):
        x = bundle.positions(i)
        if field is None:
            p = bundle.momenta(i)
        else:
            p, _ = field.grad_xt(x, times[i])
        out[i] = np.mean(model.eval(x, p))
    return out


def error_vs_n_study(run_one, n_list, seeds, eval_fn):
    """Train once per (N, seed) and report the error median and quartiles.

    run_one(N, seed) -> field; eval_fn(field) -> scalar error.  Returns rows
    {"N", "errors", "median", "q25", "q75"} per N.
    """
    rows = []
    for N in n_list:
        errs = np.array([eval_fn(run_one(N, seed)) for seed in seeds])
        rows.append({"N": int(N), "errors": errs,
                     "median": float(np.median(errs)),
                     "q25": float(np.percentile(errs, 25)),
                     "q75": float(np.percentile(errs, 75))})
    return rows


# --- CSV / JSON writers -----------------------------------------------------
# dialect: comma separator, '.' decimal, header row, LF endings, 17 sig digits

def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return str(v)


def _write_rows(path, header, rows):
    with open(path, "w", encoding="utf-8", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def write_curves_csv(path, times, eps, delta, mse, l1res=None, energy=None):
    header = ["t", "eps", "delta", "mse"]
    cols = [times, eps, delta, mse]
    if l1res is not None:
        header.append("l1res")
        cols.append(l1res)
    if energy is not None:
        header.append("energy")
        cols.append(energy)
    _write_rows(path, header, zip(*cols))


def write_grid_csv(path, header, rows):
    _write_rows(path, header, rows)


def write_summary_json(path, summary: dict):
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        json.dump(summary, f, indent=2, sort_keys=True)
        f.write("\n")
