"""Scalar field psi(x,t) as a residual network with exact derivatives.

Architecture on the concatenated input u = (x, t):

    y_1 = sigma(A_1 u + b_1)
    y_k = sigma(y_{k-1} + kappa (A_k y_{k-1} + b_k)),  2 <= k <= L-1
    psi = A_L y_{L-1}                                  (no final bias)

First derivatives w.r.t. the input are propagated in closed form alongside
the forward pass (a tangent matrix per sample), and the parameter gradient
of the momentum-regression loss is accumulated by a matching reverse pass,
so both are exact to machine precision.  Second derivatives are central
finite differences of the exact first-derivative field.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from . import sampling

__all__ = [
    "FieldNetwork",
    "PiecewiseField",
    "ACTIVATIONS",
    "init_he",
    "eval_net",
    "grad_x",
    "grad_xt",
    "loss_value_and_param_grad",
    "second_derivatives",
    "param_count",
    "get_flat_params",
    "set_flat_params",
    "field_to_dict",
    "field_from_dict",
    "save_field",
    "load_field",
]

ACTIVATIONS = ("tanh", "sin", "relu", "softplus")


def _act(name):
    if name == "tanh":
        def f(z):
            y = np.tanh(z)
            d1 = 1.0 - y * y
            return y, d1, -2.0 * y * d1
        return f
    if name == "sin":
        return lambda z: (np.sin(z), np.cos(z), -np.sin(z))
    if name == "relu":
        def f(z):
            d1 = (z > 0).astype(float)
            return z * d1, d1, np.zeros_like(z)
        return f
    if name == "softplus":
        def f(z):
            s = 1.0 / (1.0 + np.exp(-z))
            return np.logaddexp(0.0, z), s, s * (1.0 - s)
        return f
    raise ValueError(f"unknown activation {name!r}; choose from {ACTIVATIONS}")


@dataclass
class FieldNetwork:
    """Parameters and topology of one psi network on R^{d+1}."""

    d: int
    L: int
    width: int
    kappa: float
    activation: str
    weights: list  # [A1, A2, ..., A_{L-1}, A_L]
    biases: list   # [b1, b2, ..., b_{L-1}]  (no final bias)

    def copy(self):
        return FieldNetwork(self.d, self.L, self.width, self.kappa, self.activation,
                            [A.copy() for A in self.weights],
                            [b.copy() for b in self.biases])


def param_count(d, L, width):
    return (L - 2) * width**2 + width * (d + 2) + (L - 1) * width


def init_he(d, L, width, activation, seed, kappa=0.5) -> FieldNetwork:
    """He-style init: weights ~ N(0, 2/fan_in), biases zero; seeded Philox."""
    if L < 3 or width < 1:
        raise ValueError("need L >= 3 and width >= 1")
    if activation not in ACTIVATIONS:
        raise ValueError(f"unknown activation {activation!r}")
    rng = np.random.Generator(np.random.Philox(seed))
    shapes = [(width, d + 1)] + [(width, width)] * (L - 2) + [(1, width)]
    weights = []
    for shape in shapes:
        fan_in = shape[1]
        z = sampling._standard_normal(rng, shape[0], shape[1])
        weights.append(np.sqrt(2.0 / fan_in) * z)
    biases = [np.zeros(width) for _ in range(L - 1)]
    return FieldNetwork(d=d, L=L, width=width, kappa=kappa, activation=activation,
                        weights=weights, biases=biases)


def _stack_input(net, x, t):
    x = np.atleast_2d(np.asarray(x, dtype=float))
    if x.shape[-1] != net.d:
        raise ValueError(f"input dimension {x.shape[-1]} != network dimension {net.d}")
    t = np.broadcast_to(np.asarray(t, dtype=float), x.shape[:-1])
    return np.concatenate([x, t[..., None]], axis=-1)


def _forward(net, u, want_tangent):
    """Forward pass; optionally propagate input-tangent matrices Y.

    Returns (psi, G, cache) where psi has shape (B,), G is (B, d+1) rows
    (d psi/dx_1 ... d psi/dx_d, d psi/dt) or None, and cache holds the
    per-layer intermediates needed by the reverse pass.  Tangent arrays
    are stored as (B, d+1, width) so contractions over the width axis are
    contiguous matrix products.
    """
    act = _act(net.activation)
    kappa = net.kappa
    A1 = net.weights[0]
    z = u @ A1.T + net.biases[0]
    y, d1, d2 = act(z)
    cache = {"u": u, "z": [z], "y": [y], "d1": [d1], "d2": [d2], "W": [None], "Y": []}
    Y = None
    if want_tangent:
        Y = d1[:, None, :] * A1.T  # (B, d+1, width)
        cache["Y"].append(Y)
    for k in range(1, net.L - 1):
        Ak, bk = net.weights[k], net.biases[k]
        z = y + kappa * (y @ Ak.T + bk)
        y_new, d1, d2 = act(z)
        cache["z"].append(z)
        cache["d1"].append(d1)
        cache["d2"].append(d2)
        if want_tangent:
            W = Y + kappa * (Y @ Ak.T)
            Y = d1[:, None, :] * W
            cache["W"].append(W)
            cache["Y"].append(Y)
        cache["y"].append(y_new)
        y = y_new
    AL = net.weights[-1]
    psi = y @ AL[0]
    G = None
    if want_tangent:
        G = Y @ AL[0]
    return psi, G, cache


def eval_net(net: FieldNetwork, x, t):
    """psi(x, t); x may be (d,) or (B, d), t scalar or (B,)."""
    squeeze = np.asarray(x).ndim == 1
    psi, _, _ = _forward(net, _stack_input(net, x, t), want_tangent=False)
    return float(psi[0]) if squeeze else psi


def grad_xt(net: FieldNetwork, x, t):
    """Exact (grad_x psi, dpsi/dt)."""
    squeeze = np.asarray(x).ndim == 1
    _, G, _ = _forward(net, _stack_input(net, x, t), want_tangent=True)
    if squeeze:
        return G[0, : net.d], float(G[0, net.d])
    return G[:, : net.d], G[:, net.d]


def grad_x(net: FieldNetwork, x, t):
    return grad_xt(net, x, t)[0]


def _reverse_param_grad(net, cache, W_seed):
    """Gradient of S = sum_n w_n . grad_x psi(u_n) w.r.t. all parameters.

    W_seed: (B, d) seed vectors w_n.  Returns (weight grads, bias grads).
    """
    kappa = net.kappa
    B = W_seed.shape[0]
    w_full = np.zeros((B, net.d + 1))
    w_full[:, : net.d] = W_seed

    AL = net.weights[-1]
    Y_last = cache["Y"][-1]  # (B, d+1, width)
    Yw = np.sum(Y_last * w_full[:, :, None], axis=1)  # (B, width)
    gA = [None] * (net.L - 1) + [Yw.sum(axis=0)[None, :]]
    gb = [None] * (net.L - 1)

    ybar = np.zeros_like(cache["y"][-1])
    Ybar = w_full[:, :, None] * AL[0]  # (B, d+1, width)

    for k in range(net.L - 2, 0, -1):
        Ak = net.weights[k]
        d1, d2 = cache["d1"][k], cache["d2"][k]
        Wk, Yk_prev = cache["W"][k], cache["Y"][k - 1]
        yk_prev = cache["y"][k - 1]
        zbar = d1 * ybar + d2 * np.sum(Ybar * Wk, axis=1)
        Wbar = d1[:, None, :] * Ybar
        m = Wbar.shape[-1]
        gA[k] = kappa * (zbar.T @ yk_prev
                         + Wbar.reshape(-1, m).T @ Yk_prev.reshape(-1, m))
        gb[k] = kappa * zbar.sum(axis=0)
        ybar = zbar + kappa * (zbar @ Ak)
        Ybar = Wbar + kappa * (Wbar @ Ak)

    A1 = net.weights[0]
    d1, d2 = cache["d1"][0], cache["d2"][0]
    u = cache["u"]
    zbar = d1 * ybar + d2 * np.sum(Ybar * A1.T, axis=1)
    gA[0] = zbar.T @ u + np.sum(d1[:, None, :] * Ybar, axis=0).T
    gb[0] = zbar.sum(axis=0)
    return gA, gb


def loss_value_and_param_grad(net: FieldNetwork, X, T, P, model=None,
                              loss_kind="Quadratic"):
    """Loss over a batch and its exact parameter gradient (flat vector).

    Quadratic: mean_n |grad_x psi(x_n,t_n) - p_n|^2.
    Bregman:   mean_n D_{H,x_n}(grad_x psi : p_n)  (needs model).
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    P = np.atleast_2d(np.asarray(P, dtype=float))
    if X.shape[0] == 0:
        raise ValueError("empty batch")
    u = _stack_input(net, X, T)
    _, G, cache = _forward(net, u, want_tangent=True)
    g = G[:, : net.d]
    B = X.shape[0]
    if loss_kind == "Quadratic":
        e = g - P
        value = float(np.mean(np.sum(e * e, axis=-1)))
        seed = (2.0 / B) * e
    elif loss_kind == "Bregman":
        if model is None:
            raise ValueError("Bregman loss requires a Hamiltonian model")
        from .hamiltonians import bregman_divergence
        value = float(np.mean(bregman_divergence(model, X, g, P)))
        seed = (model.grad_p(X, g) - model.grad_p(X, P)) / B
    else:
        raise ValueError(f"unknown loss kind {loss_kind!r}")
    gA, gb = _reverse_param_grad(net, cache, seed)
    return value, _flatten(net, gA, gb)


def second_derivatives(net: FieldNetwork, x, t):
    """(d/dt grad_x psi, hessian of psi in x) by central FD of the exact grad.

    The returned Hessian is explicitly symmetrized.  relu is rejected.
    """
    if net.activation == "relu":
        raise ValueError("second derivatives undefined for relu activation")
    x = np.asarray(x, dtype=float)
    squeeze = x.ndim == 1
    X = np.atleast_2d(x)
    B, d = X.shape
    tv = np.broadcast_to(np.asarray(t, dtype=float), (B,))

    ht = 1e-4 * np.maximum(1.0, np.abs(tv))
    gp, _ = grad_xt(net, X, tv + ht)
    gm, _ = grad_xt(net, X, tv - ht)
    dt_grad = (gp - gm) / (2.0 * ht[:, None])

    hess = np.empty((B, d, d))
    for j in range(d):
        hj = 1e-4 * np.maximum(1.0, np.abs(X[:, j]))
        Xp = X.copy()
        Xp[:, j] += hj
        Xm = X.copy()
        Xm[:, j] -= hj
        gp, _ = grad_xt(net, Xp, tv)
        gm, _ = grad_xt(net, Xm, tv)
        hess[:, :, j] = (gp - gm) / (2.0 * hj[:, None])
    hess = 0.5 * (hess + np.swapaxes(hess, 1, 2))
    if squeeze:
        return dt_grad[0], hess[0]
    return dt_grad, hess


# --- flat parameter vector ------------------------------------------------

def _flatten(net, weights, biases):
    parts = []
    for k in range(net.L - 1):
        parts.append(np.ravel(weights[k]))
        parts.append(np.ravel(biases[k]))
    parts.append(np.ravel(weights[-1]))
    return np.concatenate(parts)


def get_flat_params(net: FieldNetwork):
    return _flatten(net, net.weights, net.biases)


def set_flat_params(net: FieldNetwork, theta):
    theta = np.asarray(theta, dtype=float)
    pos = 0
    for k in range(net.L - 1):
        A = net.weights[k]
        A[...] = theta[pos : pos + A.size].reshape(A.shape)
        pos += A.size
        b = net.biases[k]
        b[...] = theta[pos : pos + b.size]
        pos += b.size
    A = net.weights[-1]
    A[...] = theta[pos : pos + A.size].reshape(A.shape)
    pos += A.size
    if pos != theta.size:
        raise ValueError(f"parameter vector has {theta.size} entries, expected {pos}")


# --- piecewise-in-time field ----------------------------------------------

@dataclass
class PiecewiseField:
    """Left-closed tiling of [t0, T] with one network per subinterval."""

    intervals: list  # of (t_lo, t_hi, FieldNetwork), increasing, gap-free

    @property
    def d(self):
        return self.intervals[0][2].d

    def net_for(self, t) -> FieldNetwork:
        """Dispatch by time; interior boundaries go right, t = T goes last."""
        t = float(t)
        lo0 = self.intervals[0][0]
        hi_last = self.intervals[-1][1]
        if not (lo0 <= t <= hi_last):
            raise ValueError(f"t={t} outside the field's time range [{lo0}, {hi_last}]")
        for t_lo, t_hi, net in self.intervals[:-1]:
            if t_lo <= t < t_hi:
                return net
        return self.intervals[-1][2]

    def eval(self, x, t):
        return eval_net(self.net_for(t), x, t)

    def grad_x(self, x, t):
        return grad_x(self.net_for(t), x, t)

    def grad_xt(self, x, t):
        return grad_xt(self.net_for(t), x, t)

    def second_derivatives(self, x, t):
        return second_derivatives(self.net_for(t), x, t)


# --- serialization ---------------------------------------------------------

def field_to_dict(field: PiecewiseField) -> dict:
    first = field.intervals[0][2]
    intervals = []
    for t_lo, t_hi, net in field.intervals:
        params = {}
        for k in range(net.L - 1):
            params[f"A{k + 1}"] = net.weights[k].tolist()
            params[f"b{k + 1}"] = net.biases[k].tolist()
        params[f"A{net.L}"] = net.weights[-1].tolist()
        intervals.append({"t_lo": t_lo, "t_hi": t_hi, "params": params})
    return {"schema": "hjdc-net-1", "d": first.d, "L": first.L,
            "width": first.width, "kappa": first.kappa,
            "activation": first.activation, "intervals": intervals}


def field_from_dict(data: dict) -> PiecewiseField:
    if data.get("schema") != "hjdc-net-1":
        raise ValueError("not an hjdc-net-1 document")
    d, L = int(data["d"]), int(data["L"])
    width, kappa = int(data["width"]), float(data["kappa"])
    activation = str(data["activation"])
    intervals = []
    for item in data["intervals"]:
        params = item["params"]
        weights = [np.asarray(params[f"A{k + 1}"], dtype=float) for k in range(L - 1)]
        weights.append(np.asarray(params[f"A{L}"], dtype=float))
        biases = [np.asarray(params[f"b{k + 1}"], dtype=float) for k in range(L - 1)]
        net = FieldNetwork(d=d, L=L, width=width, kappa=kappa,
                           activation=activation, weights=weights, biases=biases)
        intervals.append((float(item["t_lo"]), float(item["t_hi"]), net))
    return PiecewiseField(intervals=intervals)


def save_field(path, field: PiecewiseField):
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        json.dump(field_to_dict(field), f)
        f.write("\n")


def load_field(path) -> PiecewiseField:
    with open(path, "r", encoding="utf-8") as f:
        return field_from_dict(json.load(f))
