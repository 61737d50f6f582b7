"""Closed-form and semi-analytic reference solutions used as oracles.

Covers the harmonic cotangent solution, multi-branch inversion of the 1D
characteristic map phi_t with the weighted-momentum weak solution past the
caustic, and the optimal linear-quadratic control reference.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .integrators import linear_flow_step

__all__ = [
    "BranchSet",
    "harmonic_exact_grad",
    "invert_phi",
    "weighted_momentum",
    "momentum_histogram_mc",
    "lqc_optimal_reference",
    "caustic_endpoint",
]

_DEGENERATE_TOL = 1e-10


@dataclass(frozen=True)
class BranchSet:
    """All roots xi of phi_t(xi) = z in the search window, sorted."""

    z: float
    t: float
    roots: np.ndarray
    jacobians: np.ndarray  # |phi_t'(xi)| per root

    @property
    def degenerate(self):
        return self.jacobians < _DEGENERATE_TOL


def harmonic_exact_grad(x, t):
    """Gradient cot(t + pi/4) * x of the harmonic solution; pole at t=3pi/4."""
    phase = t + np.pi / 4
    s = np.sin(phase)
    if abs(s) < 1e-12:
        raise ValueError(f"solution pole at t={t}")
    return (np.cos(phase) / s) * np.asarray(x, dtype=float)


def _phi_funcs(t, variant):
    if variant == "CosInitial":
        # characteristics of g = cos: phi_t(xi) = xi - t sin(xi)
        phi = lambda xi: xi - t * np.sin(xi)
        dphi = lambda xi: 1.0 - t * np.cos(xi)
    elif variant == "SinusoidalKinetic":
        r3 = np.sqrt(3.0)
        phi = lambda xi: xi + t * (3.0 - r3 * np.sin(r3 * xi))
        dphi = lambda xi: 1.0 - 3.0 * t * np.cos(r3 * xi)
    else:
        raise ValueError(f"unknown variant {variant!r}")
    return phi, dphi


def invert_phi(t, z, variant="CosInitial") -> BranchSet:
    """All real preimages of z under phi_t, by bracketing + bisection.

    The grid (4096 points over |xi| <= pi + t*pi) resolves every sign
    change of phi_t - z for t <= 3; bisection runs 60 iterations.
    """
    phi, dphi = _phi_funcs(t, variant)
    lo, hi = -np.pi - t * np.pi, np.pi + t * np.pi
    grid = np.linspace(lo, hi, 4096)
    f = phi(grid) - z
    roots = []
    exact = np.where(f == 0.0)[0]
    roots.extend(grid[exact])
    sign_change = np.where((f[:-1] * f[1:]) < 0)[0]
    for i in sign_change:
        a, b = grid[i], grid[i + 1]
        fa = f[i]
        for _ in range(60):
            mid = 0.5 * (a + b)
            fm = phi(mid) - z
            if fa * fm <= 0:
                b = mid
            else:
                a, fa = mid, fm
        roots.append(0.5 * (a + b))
    roots = np.array(sorted(roots))
    return BranchSet(z=float(z), t=float(t), roots=roots,
                     jacobians=np.abs(dphi(roots)))


def caustic_endpoint(t):
    """(z*, momentum) at the degenerate fold point for the CosInitial map, t>1."""
    z_star = np.sqrt(t * t - 1.0) - np.arccos(1.0 / t)
    return z_star, np.sqrt(t * t - 1.0) / t


def weighted_momentum(t, z, variant="CosInitial"):
    """Conditional-mean momentum of the particle ensemble at position z.

    Branch-weighted average of -sin(xi) with weights 1/(2 pi |phi_t'(xi)|)
    (initial positions uniform on [-pi, pi]).  At the fold endpoints where
    the Jacobian vanishes, the closed-form value +-sqrt(t^2-1)/t is used.
    """
    if variant != "CosInitial":
        raise ValueError("weighted momentum implemented for the CosInitial map only")
    if t > 1.0:
        z_star, p_star = caustic_endpoint(t)
        if abs(abs(z) - z_star) < 1e-9:
            return np.sign(z) * p_star
    branches = invert_phi(t, z, variant)
    keep = np.abs(branches.roots) <= np.pi + 1e-12
    roots = branches.roots[keep]
    jac = branches.jacobians[keep]
    if roots.size == 0:
        return 0.0
    if np.any(jac < _DEGENERATE_TOL):
        # exactly on a fold: closed-form endpoint value
        z_star, p_star = caustic_endpoint(t)
        return np.sign(z) * p_star
    w = 1.0 / (2.0 * np.pi * jac)
    return float(np.sum(-np.sin(roots) * w) / np.sum(w))


def momentum_histogram_mc(t, n_particles=10**6, bin_width=0.02, seed=0):
    """Monte-Carlo oracle: bin-averaged momentum of evolved uniform particles.

    Returns (bin centers, mean momentum per bin); empty bins hold NaN.
    """
    rng = np.random.Generator(np.random.Philox(seed))
    xi = rng.uniform(-np.pi, np.pi, size=n_particles)
    z = xi - t * np.sin(xi)
    p = -np.sin(xi)
    lo = -np.pi - t
    n_bins = int(np.ceil((2 * np.pi + 2 * t) / bin_width))
    idx = np.clip(((z - lo) / bin_width).astype(int), 0, n_bins - 1)
    sums = np.bincount(idx, weights=p, minlength=n_bins)
    counts = np.bincount(idx, minlength=n_bins)
    with np.errstate(invalid="ignore"):
        means = np.where(counts > 0, sums / np.maximum(counts, 1), np.nan)
    centers = lo + bin_width * (np.arange(n_bins) + 0.5)
    return centers, means


def lqc_optimal_reference(A, B, Q, R, P1, q0_batch, T, steps):
    """Optimal-control state/momentum reference by forward linear flow.

    The Pontryagin system, read backwards in time, is the forward linear
    Hamiltonian flow with generator [[-A, B R^{-1} B^T], [Q, A^T]] started
    at p0 = P1 q0.  Returns states of shape (steps+1, n, 2d).
    """
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    d = A.shape[0]
    R_inv = np.linalg.inv(np.atleast_2d(np.asarray(R, dtype=float)))
    A_sys = np.block([[-A, B @ R_inv @ B.T], [np.asarray(Q, float), A.T]])
    q0 = np.atleast_2d(np.asarray(q0_batch, dtype=float))
    p0 = q0 @ np.asarray(P1, float).T
    h = T / steps
    z = np.concatenate([q0, p0], axis=-1)
    out = np.empty((steps + 1, q0.shape[0], 2 * d))
    out[0] = z
    for i in range(steps):
        z = linear_flow_step(A_sys, z, h)
        out[i + 1] = z
    return out
