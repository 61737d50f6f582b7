"""One-step maps and trajectory generation for x' = dH/dp, p' = -dH/dx.

All steps are vectorized over a leading batch axis: x, p of shape (..., d).
Includes the bit-exact binary trajectory container ("HJT1" format).
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
from scipy.linalg import expm

from .hamiltonians import HamiltonianModel, InitialCondition, LinearSymplectic, Separable
from . import sampling

__all__ = [
    "TrajectoryBundle",
    "IntegrationError",
    "stormer_verlet_step",
    "tao_step",
    "linear_flow_step",
    "euler_step",
    "rk4_step",
    "generate_trajectories",
    "write_hjt1",
    "read_hjt1",
    "INTEGRATOR_IDS",
]

INTEGRATOR_IDS = ("stormer_verlet", "tao", "linear_exact", "euler", "rk4")


class IntegrationError(ArithmeticError):
    """Non-finite state detected during integration; carries (node, particle)."""

    def __init__(self, message, node=None, particle=None):
        super().__init__(message)
        self.node = node
        self.particle = particle


@dataclass(frozen=True)
class TrajectoryBundle:
    """(M+1, N, 2d) float64 particle states at uniform time nodes t0 + i*h."""

    d: int
    N: int
    M: int
    h: float
    t0: float
    states: np.ndarray
    model_id: str
    integrator_id: str
    seed: int

    def times(self):
        return self.t0 + self.h * np.arange(self.M + 1)

    def positions(self, i):
        return self.states[i, :, : self.d]

    def momenta(self, i):
        return self.states[i, :, self.d :]


def stormer_verlet_step(model: HamiltonianModel, x, p, h):
    """Symmetric kick-drift-kick step; requires a separable model."""
    if not isinstance(model.structure, Separable):
        raise ValueError("stormer_verlet_step requires a separable Hamiltonian")
    s = model.structure
    x = np.asarray(x, dtype=float)
    p = np.asarray(p, dtype=float)
    p_half = p - 0.5 * h * s.grad_potential(x)
    x_new = x + h * s.grad_kinetic(p_half)
    p_new = p_half - 0.5 * h * s.grad_potential(x_new)
    return x_new, p_new


def tao_step(model: HamiltonianModel, x, p, h, omega=10.0):
    """Explicit second-order step for general H via a bound extended copy.

    Extended state (q,p,x,y) starts with q=x_in, y=p_in; the symmetric
    composition A(h/2) B(h/2) C(h) B(h/2) A(h/2) is applied and the (q,p)
    pair returned.  C rotates the defect (q-x, p-y) by angle 2*omega*h.
    """
    x_in = np.asarray(x, dtype=float)
    p_in = np.asarray(p, dtype=float)
    q, pp, xx, y = x_in.copy(), p_in.copy(), x_in.copy(), p_in.copy()

    def phi_a(delta):
        nonlocal pp, xx
        pp = pp - delta * model.grad_x(q, y)
        xx = xx + delta * model.grad_p(q, y)

    def phi_b(delta):
        nonlocal q, y
        q = q + delta * model.grad_p(xx, pp)
        y = y - delta * model.grad_x(xx, pp)

    def phi_c(delta):
        nonlocal q, pp, xx, y
        c, s = np.cos(2 * omega * delta), np.sin(2 * omega * delta)
        u, v = q - xx, pp - y
        u_new = c * u + s * v
        v_new = -s * u + c * v
        sq, sp = q + xx, pp + y
        q, xx = 0.5 * (sq + u_new), 0.5 * (sq - u_new)
        pp, y = 0.5 * (sp + v_new), 0.5 * (sp - v_new)

    phi_a(h / 2)
    phi_b(h / 2)
    phi_c(h)
    phi_b(h / 2)
    phi_a(h / 2)
    return q, pp


def tao_step_extended(model, q, p, x, y, h, omega=10.0):
    """One Tao step on an explicit extended state; used for symplecticity checks."""
    q = np.asarray(q, dtype=float).copy()
    p = np.asarray(p, dtype=float).copy()
    x = np.asarray(x, dtype=float).copy()
    y = np.asarray(y, dtype=float).copy()

    for stage, delta in (("a", h / 2), ("b", h / 2), ("c", h), ("b", h / 2), ("a", h / 2)):
        if stage == "a":
            p = p - delta * model.grad_x(q, y)
            x = x + delta * model.grad_p(q, y)
        elif stage == "b":
            q = q + delta * model.grad_p(x, p)
            y = y - delta * model.grad_x(x, p)
        else:
            c, s = np.cos(2 * omega * delta), np.sin(2 * omega * delta)
            u, v = q - x, p - y
            u_new = c * u + s * v
            v_new = -s * u + c * v
            sq, sp = q + x, p + y
            q, x = 0.5 * (sq + u_new), 0.5 * (sq - u_new)
            p, y = 0.5 * (sp + v_new), 0.5 * (sp - v_new)
    return q, p, x, y


def linear_flow_step(A_sys, z, h):
    """exp(h*A_sys) @ z by scaling-and-squaring Pade (scipy expm)."""
    A_sys = np.asarray(A_sys, dtype=float)
    if A_sys.ndim != 2 or A_sys.shape[0] != A_sys.shape[1]:
        raise ValueError("A_sys must be square")
    z = np.asarray(z, dtype=float)
    return z @ expm(h * A_sys).T


def _vector_field(model, x, p):
    return model.grad_p(x, p), -model.grad_x(x, p)


def euler_step(model, x, p, h):
    x = np.asarray(x, dtype=float)
    p = np.asarray(p, dtype=float)
    fx, fp = _vector_field(model, x, p)
    return x + h * fx, p + h * fp


def rk4_step(model, x, p, h):
    x = np.asarray(x, dtype=float)
    p = np.asarray(p, dtype=float)
    k1x, k1p = _vector_field(model, x, p)
    k2x, k2p = _vector_field(model, x + 0.5 * h * k1x, p + 0.5 * h * k1p)
    k3x, k3p = _vector_field(model, x + 0.5 * h * k2x, p + 0.5 * h * k2p)
    k4x, k4p = _vector_field(model, x + h * k3x, p + h * k3p)
    return (
        x + (h / 6) * (k1x + 2 * k2x + 2 * k3x + k4x),
        p + (h / 6) * (k1p + 2 * k2p + 2 * k3p + k4p),
    )


def _make_stepper(model, integrator_id, omega):
    if integrator_id == "stormer_verlet":
        return lambda x, p, h: stormer_verlet_step(model, x, p, h)
    if integrator_id == "tao":
        return lambda x, p, h: tao_step(model, x, p, h, omega)
    if integrator_id == "euler":
        return lambda x, p, h: euler_step(model, x, p, h)
    if integrator_id == "rk4":
        return lambda x, p, h: rk4_step(model, x, p, h)
    if integrator_id == "linear_exact":
        if not isinstance(model.structure, LinearSymplectic):
            raise ValueError("linear_exact requires a LinearSymplectic model")
        A_sys = model.structure.matrix
        d = model.dim

        def step(x, p, h):
            z = np.concatenate([x, p], axis=-1)
            z = linear_flow_step(A_sys, z, h)
            return z[..., :d], z[..., d:]

        return step
    raise ValueError(f"unknown integrator {integrator_id!r}; choose from {INTEGRATOR_IDS}")


def generate_trajectories(model, ic: InitialCondition, sampler_spec, integrator_id,
                          N, M, T, seed, omega=10.0, t0=0.0, x0_override=None):
    """Sample x0 ~ rho_0, set p0 = grad_g(x0), integrate M uniform steps to T.

    Deterministic in seed.  Aborts with IntegrationError naming the first
    offending (time node, particle) if a non-finite state appears.
    """
    if N < 1 or M < 1:
        raise ValueError("N and M must be >= 1")
    if T <= 0:
        raise ValueError("T must be positive")
    h = T / M
    d = model.dim
    if x0_override is not None:
        x0 = np.asarray(x0_override, dtype=float).reshape(N, d)
    else:
        x0 = sampling.draw(sampler_spec, N, seed)
        if x0.shape[1] != d:
            raise ValueError(f"sampler dimension {x0.shape[1]} != model dimension {d}")
    p0 = np.asarray(ic.grad_g(x0), dtype=float)

    step = _make_stepper(model, integrator_id, omega)
    states = np.empty((M + 1, N, 2 * d))
    states[0, :, :d] = x0
    states[0, :, d:] = p0
    x, p = x0, p0
    for i in range(M):
        x, p = step(x, p, h)
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(p))):
            bad = ~(np.all(np.isfinite(x), axis=-1) & np.all(np.isfinite(p), axis=-1))
            k = int(np.argmax(bad))
            raise IntegrationError(
                f"non-finite state at time node {i + 1}, particle {k}",
                node=i + 1, particle=k)
        states[i + 1, :, :d] = x
        states[i + 1, :, d:] = p

    return TrajectoryBundle(d=d, N=N, M=M, h=h, t0=t0, states=states,
                            model_id=model.id, integrator_id=integrator_id,
                            seed=int(seed))


_MAGIC = b"HJTRAJB1"


def write_hjt1(path, bundle: TrajectoryBundle):
    """Write a bundle in the HJT1 binary format (bitwise round-trip)."""
    header = json.dumps(
        {"d": bundle.d, "N": bundle.N, "M": bundle.M, "h": bundle.h,
         "t0": bundle.t0, "model_id": bundle.model_id,
         "integrator_id": bundle.integrator_id, "seed": bundle.seed},
        separators=(",", ":")).encode("utf-8")
    payload = np.ascontiguousarray(bundle.states, dtype="<f8")
    with open(path, "wb") as f:
        f.write(_MAGIC)
        f.write(np.uint32(len(header)).astype("<u4").tobytes())
        f.write(header)
        f.write(payload.tobytes())


def read_hjt1(path) -> TrajectoryBundle:
    with open(path, "rb") as f:
        raw = f.read()
    if raw[:8] != _MAGIC:
        raise ValueError("not an HJT1 trajectory file")
    hlen = int(np.frombuffer(raw[8:12], dtype="<u4")[0])
    meta = json.loads(raw[12 : 12 + hlen].decode("utf-8"))
    d, N, M = int(meta["d"]), int(meta["N"]), int(meta["M"])
    expected = (M + 1) * N * 2 * d
    body = np.frombuffer(raw[12 + hlen :], dtype="<f8")
    if body.size != expected:
        raise ValueError(f"trajectory payload has {body.size} values, expected {expected}")
    states = body.reshape(M + 1, N, 2 * d).copy()
    return TrajectoryBundle(d=d, N=N, M=M, h=float(meta["h"]), t0=float(meta["t0"]),
                            states=states, model_id=str(meta["model_id"]),
                            integrator_id=str(meta["integrator_id"]),
                            seed=int(meta["seed"]))
