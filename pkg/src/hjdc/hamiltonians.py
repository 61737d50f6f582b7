"""Hamiltonian models, initial conditions and the Bregman divergence.

All model callables are vectorized: positions/momenta may be passed as
single vectors of shape (d,) or as batches of shape (..., d).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

__all__ = [
    "Separable",
    "LinearSymplectic",
    "General",
    "HamiltonianModel",
    "InitialCondition",
    "SingularStateError",
    "make_builtin_model",
    "bregman_divergence",
    "pendulum_matrices",
    "BUILTIN_MODEL_NAMES",
]


class SingularStateError(ValueError):
    """Raised when a model is evaluated at a singular state (e.g. Kepler x=0)."""


@dataclass(frozen=True)
class Separable:
    """Structure tag for H(x,p) = kinetic(p) + potential(x)."""

    kinetic: Callable
    potential: Callable
    grad_kinetic: Callable
    grad_potential: Callable


@dataclass(frozen=True)
class LinearSymplectic:
    """Structure tag for quadratic H whose flow is z' = matrix @ z on (x,p)."""

    matrix: np.ndarray


@dataclass(frozen=True)
class General:
    """Structure tag for Hamiltonians with no exploitable structure."""


@dataclass(frozen=True)
class HamiltonianModel:
    """A Hamiltonian H(x,p) with exact analytic partial derivatives.

    Immutable after construction; safe to evaluate concurrently.
    Convexity in p is a caller contract for General-structure models.
    """

    id: str
    dim: int
    eval: Callable
    grad_x: Callable
    grad_p: Callable
    structure: Separable | LinearSymplectic | General = field(default_factory=General)


@dataclass(frozen=True)
class InitialCondition:
    """Initial value g and its gradient; sets p0 = grad_g(x0)."""

    g: Callable
    grad_g: Callable


def bregman_divergence(model: HamiltonianModel, x, q1, q2):
    """Bregman divergence of H(x, .): H(x,q1) - H(x,q2) - dH/dp(x,q2).(q1-q2).

    For H = 0.5|p|^2 + V(x) this reduces to 0.5|q1-q2|^2 exactly.
    Requires H convex in p on the evaluation region (caller contract).
    """
    q1 = np.asarray(q1, dtype=float)
    q2 = np.asarray(q2, dtype=float)
    return (
        model.eval(x, q1)
        - model.eval(x, q2)
        - np.sum(model.grad_p(x, q2) * (q1 - q2), axis=-1)
    )


def pendulum_matrices(M=1.0, m=0.1, l=1.0, g_grav=9.8):
    """State matrices of the linearized cart-pendulum: x' = A x + B u.

    State ordering (cart position, cart velocity, stick angle, angular rate).
    """
    A = np.array(
        [
            [0.0, 1.0, 0.0, 0.0],
            [0.0, 0.0, m * g_grav / M, 0.0],
            [0.0, 0.0, 0.0, 1.0],
            [0.0, 0.0, (M + m) * g_grav / (M * l), 0.0],
        ]
    )
    B = np.array([[0.0], [1.0 / M], [0.0], [1.0 / (M * l)]])
    return A, B


def _check_dim(params):
    d = int(params.get("dim", 2))
    if d <= 0:
        raise ValueError(f"dimension must be positive, got {d}")
    return d


def _harmonic(params):
    d = _check_dim(params)

    def kinetic(p):
        return 0.5 * np.sum(np.asarray(p, dtype=float) ** 2, axis=-1)

    def potential(x):
        return 0.5 * np.sum(np.asarray(x, dtype=float) ** 2, axis=-1)

    model = HamiltonianModel(
        id=f"harmonic_d{d}",
        dim=d,
        eval=lambda x, p: kinetic(p) + potential(x),
        grad_x=lambda x, p: np.asarray(x, dtype=float) + 0.0 * np.asarray(p),
        grad_p=lambda x, p: np.asarray(p, dtype=float) + 0.0 * np.asarray(x),
        structure=Separable(kinetic, potential, lambda p: np.asarray(p, float),
                            lambda x: np.asarray(x, float)),
    )
    ic = InitialCondition(g=potential, grad_g=lambda x: np.asarray(x, dtype=float))
    return model, ic


def _degenerate_kinetic(params):
    # H = 0.5 (eta.p)^2 + tau eta.p with eta = 1/sqrt(d); g = sign*cos(freq eta.x)
    d = _check_dim(params)
    tau = float(params.get("tau", 3.0))
    freq = float(params.get("g_freq", np.sqrt(3.0)))
    sign = float(params.get("g_sign", 1.0))
    eta = np.full(d, 1.0 / np.sqrt(d))

    def kinetic(p):
        s = np.asarray(p, dtype=float) @ eta
        return 0.5 * s**2 + tau * s

    def grad_kinetic(p):
        s = np.asarray(p, dtype=float) @ eta
        return (s + tau)[..., None] * eta

    def zero_pot(x):
        return np.zeros(np.asarray(x).shape[:-1])

    def g(x):
        return sign * np.cos(freq * (np.asarray(x, dtype=float) @ eta))

    def grad_g(x):
        s = np.asarray(x, dtype=float) @ eta
        return (-sign * freq * np.sin(freq * s))[..., None] * eta

    model = HamiltonianModel(
        id=f"degenerate_kinetic_d{d}",
        dim=d,
        eval=lambda x, p: kinetic(p) + zero_pot(x),
        grad_x=lambda x, p: np.zeros(np.broadcast(np.asarray(x), np.asarray(p)).shape),
        grad_p=lambda x, p: grad_kinetic(p) + 0.0 * np.asarray(x),
        structure=Separable(kinetic, zero_pot, grad_kinetic,
                            lambda x: np.zeros_like(np.asarray(x, float))),
    )
    return model, InitialCondition(g=g, grad_g=grad_g)


def _sinusoidal_potential(params):
    d = _check_dim(params)
    i1 = int(params.get("i1", 9))
    i2 = int(params.get("i2", 19))
    if not (0 <= i1 < d and 0 <= i2 < d and i1 != i2):
        raise ValueError(f"active coordinates ({i1}, {i2}) invalid for dim {d}")

    def kinetic(p):
        return 0.5 * np.sum(np.asarray(p, dtype=float) ** 2, axis=-1)

    def potential(x):
        x = np.asarray(x, dtype=float)
        return np.cos(2 * x[..., i1] + 0.4) + np.cos(2 * x[..., i2] + 0.4)

    def grad_potential(x):
        x = np.asarray(x, dtype=float)
        out = np.zeros_like(x)
        out[..., i1] = -2 * np.sin(2 * x[..., i1] + 0.4)
        out[..., i2] = -2 * np.sin(2 * x[..., i2] + 0.4)
        return out

    def g(x):
        x = np.asarray(x, dtype=float)
        return np.sin(x[..., i1] + 0.15) + np.sin(x[..., i2] + 0.15)

    def grad_g(x):
        x = np.asarray(x, dtype=float)
        out = np.zeros_like(x)
        out[..., i1] = np.cos(x[..., i1] + 0.15)
        out[..., i2] = np.cos(x[..., i2] + 0.15)
        return out

    model = HamiltonianModel(
        id=f"sinusoidal_potential_d{d}",
        dim=d,
        eval=lambda x, p: kinetic(p) + potential(x),
        grad_x=lambda x, p: grad_potential(x) + 0.0 * np.asarray(p),
        grad_p=lambda x, p: np.asarray(p, dtype=float) + 0.0 * np.asarray(x),
        structure=Separable(kinetic, potential, lambda p: np.asarray(p, float),
                            grad_potential),
    )
    return model, InitialCondition(g=g, grad_g=grad_g)


def _nonseparable_quartic(params):
    d = _check_dim(params)

    def H(x, p):
        x = np.asarray(x, dtype=float)
        p = np.asarray(p, dtype=float)
        return 0.5 * (np.sum(x**2, axis=-1) + 1.0) * (np.sum(p**2, axis=-1) + 1.0)

    def grad_x(x, p):
        x = np.asarray(x, dtype=float)
        p = np.asarray(p, dtype=float)
        return x * (np.sum(p**2, axis=-1) + 1.0)[..., None]

    def grad_p(x, p):
        x = np.asarray(x, dtype=float)
        p = np.asarray(p, dtype=float)
        return p * (np.sum(x**2, axis=-1) + 1.0)[..., None]

    model = HamiltonianModel(
        id=f"nonseparable_quartic_d{d}",
        dim=d,
        eval=H,
        grad_x=grad_x,
        grad_p=grad_p,
        structure=General(),
    )
    zero = lambda x: np.zeros(np.asarray(x).shape[:-1])
    return model, InitialCondition(g=zero, grad_g=lambda x: np.zeros_like(np.asarray(x, float)))


def _kepler(params):
    d = int(params.get("dim", 2))
    if d != 2:
        raise ValueError("kepler model is two-dimensional")
    v = np.asarray(params.get("v", (0.5, 0.0)), dtype=float)

    def _radius(x):
        x = np.asarray(x, dtype=float)
        r = np.sqrt(np.sum(x**2, axis=-1))
        if np.any(r < 1e-8):
            raise SingularStateError("kepler state within 1e-8 of the origin")
        return r

    def kinetic(p):
        return 0.5 * np.sum(np.asarray(p, dtype=float) ** 2, axis=-1)

    def potential(x):
        return -1.0 / _radius(x)

    def grad_potential(x):
        x = np.asarray(x, dtype=float)
        r = _radius(x)
        return x / r[..., None] ** 3

    model = HamiltonianModel(
        id="kepler",
        dim=2,
        eval=lambda x, p: kinetic(p) + potential(x),
        grad_x=lambda x, p: grad_potential(x) + 0.0 * np.asarray(p),
        grad_p=lambda x, p: np.asarray(p, dtype=float) + 0.0 * np.asarray(x),
        structure=Separable(kinetic, potential, lambda p: np.asarray(p, float),
                            grad_potential),
    )
    ic = InitialCondition(
        g=lambda x: np.asarray(x, dtype=float) @ v,
        grad_g=lambda x: np.broadcast_to(v, np.asarray(x).shape).copy(),
    )
    return model, ic


def _lqc_pendulum(params):
    A, B = pendulum_matrices(
        M=float(params.get("M", 1.0)),
        m=float(params.get("m", 0.1)),
        l=float(params.get("l", 1.0)),
        g_grav=float(params.get("g_grav", 9.8)),
    )
    d = A.shape[0]
    P1 = np.diag(np.asarray(params.get("P1_diag", (1.0, 0.0, 1.0, 0.0)), dtype=float))
    Q = P1
    R_inv = 1.0 / float(params.get("R", 1.0))
    BRB = B @ (R_inv * B.T)  # B R^{-1} B^T

    def H(x, p):
        x = np.asarray(x, dtype=float)
        p = np.asarray(p, dtype=float)
        s = p @ B[:, 0]
        return (
            0.5 * R_inv * s**2
            - np.sum(p * (x @ A.T), axis=-1)
            - 0.5 * np.sum(x * (x @ Q.T), axis=-1)
        )

    def grad_x(x, p):
        x = np.asarray(x, dtype=float)
        p = np.asarray(p, dtype=float)
        return -p @ A - x @ Q.T

    def grad_p(x, p):
        x = np.asarray(x, dtype=float)
        p = np.asarray(p, dtype=float)
        return p @ BRB.T - x @ A.T

    flow_matrix = np.block([[-A, BRB], [Q, A.T]])
    model = HamiltonianModel(
        id="lqc_pendulum",
        dim=d,
        eval=H,
        grad_x=grad_x,
        grad_p=grad_p,
        structure=LinearSymplectic(flow_matrix),
    )
    ic = InitialCondition(
        g=lambda x: 0.5 * np.sum(np.asarray(x, float) * (np.asarray(x, float) @ P1.T), axis=-1),
        grad_g=lambda x: np.asarray(x, dtype=float) @ P1.T,
    )
    return model, ic


_BUILDERS = {
    "harmonic": _harmonic,
    "degenerate_kinetic": _degenerate_kinetic,
    "sinusoidal_potential": _sinusoidal_potential,
    "nonseparable_quartic": _nonseparable_quartic,
    "kepler": _kepler,
    "lqc_pendulum": _lqc_pendulum,
}

BUILTIN_MODEL_NAMES = tuple(sorted(_BUILDERS))


def make_builtin_model(name: str, params: dict | None = None):
    """Construct a builtin Hamiltonian model and its initial condition.

    Returns (HamiltonianModel, InitialCondition). Raises ValueError on an
    unknown name or invalid parameters.
    """
    if name not in _BUILDERS:
        raise ValueError(f"unknown model {name!r}; choose from {BUILTIN_MODEL_NAMES}")
    return _BUILDERS[name](dict(params or {}))
