"""Experiment configuration: JSON schema "hjdc-config-1", validation, presets."""

from __future__ import annotations

import json
from importlib import resources

from . import sampling
from .field_net import ACTIVATIONS
from .hamiltonians import BUILTIN_MODEL_NAMES, make_builtin_model
from .integrators import INTEGRATOR_IDS

__all__ = ["ConfigError", "load_config", "validate_config", "dump_config",
           "preset_names", "load_preset", "build_model"]

SCHEMA = "hjdc-config-1"

# models with a closed-form / semi-analytic reference gradient
ORACLES = ("harmonic", "caustic", "lqc", "none")


class ConfigError(ValueError):
    """Invalid experiment configuration; message names the offending field."""


def _require(block, path, key, types):
    if key not in block:
        raise ConfigError(f"missing field {path}.{key}")
    value = block[key]
    if not isinstance(value, types):
        raise ConfigError(f"field {path}.{key} has invalid type {type(value).__name__}")
    return value


def validate_config(cfg: dict) -> dict:
    if not isinstance(cfg, dict):
        raise ConfigError("config root must be a JSON object")
    if cfg.get("schema") != SCHEMA:
        raise ConfigError(f'field schema must be "{SCHEMA}"')

    ham = _require(cfg, "", "hamiltonian", dict)
    name = _require(ham, "hamiltonian", "name", str)
    if name not in BUILTIN_MODEL_NAMES:
        raise ConfigError(f"hamiltonian.name {name!r} unknown")
    if not isinstance(ham.get("params", {}), dict):
        raise ConfigError("field hamiltonian.params must be an object")

    rho0 = _require(cfg, "", "rho0", dict)
    try:
        sampling.spec_from_dict(rho0)
    except ValueError as exc:
        raise ConfigError(f"field rho0 invalid: {exc}") from exc

    traj = _require(cfg, "", "trajectory", dict)
    N = _require(traj, "trajectory", "N", int)
    M = _require(traj, "trajectory", "M", int)
    if N < 1 or M < 1:
        raise ConfigError("trajectory.N and trajectory.M must be >= 1")
    T = _require(traj, "trajectory", "T", (int, float))
    if T <= 0:
        raise ConfigError("trajectory.T must be positive")
    integ = _require(traj, "trajectory", "integrator", str)
    if integ not in INTEGRATOR_IDS:
        raise ConfigError(f"trajectory.integrator {integ!r} unknown")
    _require(traj, "trajectory", "seed", int)

    net = _require(cfg, "", "network", dict)
    L = _require(net, "network", "L", int)
    width = _require(net, "network", "width", int)
    if L < 3 or width < 1:
        raise ConfigError("network.L must be >= 3 and network.width >= 1")
    act = _require(net, "network", "activation", str)
    if act not in ACTIVATIONS:
        raise ConfigError(f"network.activation {act!r} unknown")
    _require(net, "network", "kappa", (int, float))

    train = _require(cfg, "", "train", dict)
    lr = _require(train, "train", "lr", (int, float))
    if lr <= 0:
        raise ConfigError("train.lr must be positive")
    n_iter = _require(train, "train", "n_iter", int)
    if n_iter < 0:
        raise ConfigError("train.n_iter must be >= 0")
    batch = _require(train, "train", "batch", int)
    if not (1 <= batch <= N):
        raise ConfigError("train.batch must satisfy 1 <= batch <= trajectory.N")
    M_T = _require(train, "train", "M_T", int)
    if M_T < 1 or M % M_T != 0:
        raise ConfigError(f"train.M_T={M_T} must divide trajectory.M={M}")
    loss_kind = _require(train, "train", "loss_kind", str)
    if loss_kind not in ("Quadratic", "Bregman"):
        raise ConfigError(f"train.loss_kind {loss_kind!r} unknown")
    _require(train, "train", "seed", int)

    ev = cfg.get("eval", {})
    if not isinstance(ev, dict):
        raise ConfigError("field eval must be an object")
    oracle = ev.get("oracle", "none")
    if oracle not in ORACLES:
        raise ConfigError(f"eval.oracle {oracle!r} unknown")
    if oracle == "harmonic" and name != "harmonic":
        raise ConfigError("eval.oracle 'harmonic' requires the harmonic model")
    if oracle == "caustic" and name != "degenerate_kinetic":
        raise ConfigError("eval.oracle 'caustic' requires the degenerate_kinetic model")
    if oracle == "lqc" and name != "lqc_pendulum":
        raise ConfigError("eval.oracle 'lqc' requires the lqc_pendulum model")
    return cfg


def load_config(path) -> dict:
    with open(path, "r", encoding="utf-8") as f:
        text = f.read()
    try:
        cfg = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"malformed JSON at byte offset {exc.pos}: {exc.msg}") from exc
    return validate_config(cfg)


def dump_config(cfg: dict, path=None):
    text = json.dumps(cfg, indent=2, sort_keys=True) + "\n"
    if path is None:
        return text
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(text)
    return text


def build_model(cfg: dict):
    """(HamiltonianModel, InitialCondition, SamplerSpec) from a valid config."""
    model, ic = make_builtin_model(cfg["hamiltonian"]["name"],
                                   cfg["hamiltonian"].get("params", {}))
    spec = sampling.spec_from_dict(cfg["rho0"])
    return model, ic, spec


def preset_names():
    root = resources.files("hjdc").joinpath("presets")
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".json"))


def load_preset(name: str) -> dict:
    path = resources.files("hjdc").joinpath("presets", f"{name}.json")
    if not path.is_file():
        raise ConfigError(f"unknown preset {name!r}; available: {preset_names()}")
    return validate_config(json.loads(path.read_text(encoding="utf-8")))
