"""Seeded samplers for the initial densities rho_0.

Randomness comes from numpy's Philox counter-based generator so that a
given (spec, n, seed) triple produces bitwise-identical draws on every
platform.  Gaussians are produced by Box-Muller on float64 uniforms.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "Gaussian",
    "UniformBox",
    "GaussianMixture",
    "PiecewiseUniformHalves",
    "Delta",
    "Product",
    "SamplerSpec",
    "draw",
    "spec_from_dict",
    "spec_to_dict",
]


@dataclass(frozen=True)
class Gaussian:
    mean: tuple
    cov_scale: tuple  # per-coordinate standard deviations (diagonal covariance)


@dataclass(frozen=True)
class UniformBox:
    lo: tuple
    hi: tuple


@dataclass(frozen=True)
class GaussianMixture:
    components: tuple  # of (weight, mean, cov_scale)


@dataclass(frozen=True)
class PiecewiseUniformHalves:
    """Uniform on a box with different total mass on each side of a split.

    The box is split by normal.(x - center-free offset): samples x with
    normal.x < 0 get total weight lam1, the rest lam2.
    """

    lo: tuple
    hi: tuple
    normal: tuple
    lam1: float
    lam2: float


@dataclass(frozen=True)
class Delta:
    point: tuple


@dataclass(frozen=True)
class Product:
    """Independent blocks of coordinates, each with its own sampler spec."""

    blocks: tuple  # of SamplerSpec


SamplerSpec = (Gaussian | UniformBox | GaussianMixture | PiecewiseUniformHalves
               | Delta | Product)


def _validate(spec):
    if isinstance(spec, (UniformBox, PiecewiseUniformHalves)):
        lo = np.asarray(spec.lo, dtype=float)
        hi = np.asarray(spec.hi, dtype=float)
        if lo.shape != hi.shape or not np.all(lo < hi):
            raise ValueError("box requires lo < hi componentwise")
    if isinstance(spec, GaussianMixture):
        w = np.array([c[0] for c in spec.components], dtype=float)
        if abs(w.sum() - 1.0) > 1e-12:
            raise ValueError(f"mixture weights sum to {w.sum()!r}, not 1")
        if np.any(w < 0):
            raise ValueError("mixture weights must be nonnegative")
    if isinstance(spec, PiecewiseUniformHalves):
        if abs(spec.lam1 + spec.lam2 - 1.0) > 1e-12:
            raise ValueError("half weights must sum to 1")
    if isinstance(spec, Product):
        for b in spec.blocks:
            _validate(b)


def _uniform01(rng, shape):
    # float64 uniforms in (0,1]; the shift avoids log(0) in Box-Muller
    u = rng.random(size=shape, dtype=np.float64)
    return 1.0 - u


def _standard_normal(rng, n, d):
    """Box-Muller pairs from float64 uniforms."""
    m = (n * d + 1) // 2
    u1 = _uniform01(rng, m)
    u2 = _uniform01(rng, m)
    r = np.sqrt(-2.0 * np.log(u1))
    z = np.concatenate([r * np.cos(2 * np.pi * u2), r * np.sin(2 * np.pi * u2)])
    return z[: n * d].reshape(n, d)


def draw(spec: SamplerSpec, n: int, seed: int) -> np.ndarray:
    """Draw n points from spec; deterministic (bitwise) in (spec, n, seed)."""
    if n < 1:
        raise ValueError("n must be >= 1")
    _validate(spec)
    rng = np.random.Generator(np.random.Philox(seed))

    if isinstance(spec, Delta):
        point = np.asarray(spec.point, dtype=float)
        return np.tile(point, (n, 1))

    if isinstance(spec, Gaussian):
        mean = np.asarray(spec.mean, dtype=float)
        d = mean.size
        scale = np.broadcast_to(np.asarray(spec.cov_scale, dtype=float), (d,))
        return mean + np.sqrt(scale) * _standard_normal(rng, n, d)

    if isinstance(spec, UniformBox):
        lo = np.asarray(spec.lo, dtype=float)
        hi = np.asarray(spec.hi, dtype=float)
        return lo + (hi - lo) * _uniform01(rng, (n, lo.size))

    if isinstance(spec, GaussianMixture):
        w = np.array([c[0] for c in spec.components], dtype=float)
        means = [np.asarray(c[1], dtype=float) for c in spec.components]
        d = means[0].size
        scales = [np.broadcast_to(np.asarray(c[2], dtype=float), (d,))
                  for c in spec.components]
        comp = np.searchsorted(np.cumsum(w), rng.random(n, dtype=np.float64))
        comp = np.minimum(comp, len(w) - 1)
        z = _standard_normal(rng, n, d)
        out = np.empty((n, d))
        for j in range(len(w)):
            mask = comp == j
            out[mask] = means[j] + np.sqrt(scales[j]) * z[mask]
        return out

    if isinstance(spec, Product):
        # each block gets its own derived stream so block layout is stable
        parts = [draw(b, n, seed + 1 + j) for j, b in enumerate(spec.blocks)]
        return np.concatenate(parts, axis=1)

    if isinstance(spec, PiecewiseUniformHalves):
        lo = np.asarray(spec.lo, dtype=float)
        hi = np.asarray(spec.hi, dtype=float)
        normal = np.asarray(spec.normal, dtype=float)
        d = lo.size
        # pick the half per sample, then rejection-sample uniformly within it
        side = rng.random(n, dtype=np.float64) >= spec.lam1  # False -> negative half
        out = np.empty((n, d))
        pending = np.arange(n)
        while pending.size:
            cand = lo + (hi - lo) * _uniform01(rng, (pending.size, d))
            neg = cand @ normal < 0.0
            ok = neg != side[pending]
            out[pending[ok]] = cand[ok]
            pending = pending[~ok]
        return out

    raise ValueError(f"invalid sampler spec {spec!r}")


def spec_to_dict(spec: SamplerSpec) -> dict:
    _validate(spec)
    if isinstance(spec, Gaussian):
        return {"kind": "Gaussian", "mean": list(spec.mean),
                "cov_scale": list(np.atleast_1d(np.asarray(spec.cov_scale, float)))}
    if isinstance(spec, UniformBox):
        return {"kind": "UniformBox", "lo": list(spec.lo), "hi": list(spec.hi)}
    if isinstance(spec, GaussianMixture):
        return {"kind": "GaussianMixture",
                "components": [{"weight": c[0], "mean": list(c[1]),
                                "cov_scale": list(np.atleast_1d(np.asarray(c[2], float)))}
                               for c in spec.components]}
    if isinstance(spec, PiecewiseUniformHalves):
        return {"kind": "PiecewiseUniformHalves", "lo": list(spec.lo),
                "hi": list(spec.hi), "normal": list(spec.normal),
                "lam1": spec.lam1, "lam2": spec.lam2}
    if isinstance(spec, Delta):
        return {"kind": "Delta", "point": list(spec.point)}
    if isinstance(spec, Product):
        return {"kind": "Product", "blocks": [spec_to_dict(b) for b in spec.blocks]}
    raise ValueError(f"invalid sampler spec {spec!r}")


def spec_from_dict(data: dict) -> SamplerSpec:
    kind = data.get("kind")
    try:
        if kind == "Gaussian":
            spec = Gaussian(tuple(data["mean"]), tuple(np.atleast_1d(data["cov_scale"])))
        elif kind == "UniformBox":
            spec = UniformBox(tuple(data["lo"]), tuple(data["hi"]))
        elif kind == "GaussianMixture":
            spec = GaussianMixture(tuple(
                (float(c["weight"]), tuple(c["mean"]), tuple(np.atleast_1d(c["cov_scale"])))
                for c in data["components"]))
        elif kind == "PiecewiseUniformHalves":
            spec = PiecewiseUniformHalves(tuple(data["lo"]), tuple(data["hi"]),
                                          tuple(data["normal"]),
                                          float(data["lam1"]), float(data["lam2"]))
        elif kind == "Delta":
            spec = Delta(tuple(data["point"]))
        elif kind == "Product":
            spec = Product(tuple(spec_from_dict(b) for b in data["blocks"]))
        else:
            raise ValueError(f"unknown sampler kind {kind!r}")
    except KeyError as exc:
        raise ValueError(f"sampler spec missing field {exc}") from exc
    _validate(spec)
    return spec
