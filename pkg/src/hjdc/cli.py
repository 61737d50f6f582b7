"""Command-line front end: generate / train / eval / control / report.

Exit codes: 0 success, 2 configuration error, 3 I/O error, 4 numeric failure.
All commands take --threads (default from HJDC_THREADS); it only caps helper
parallelism and never changes any numerical output.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import diagnostics as dg
from . import field_net as fn
from . import reference_solutions as refs
from . import sampling
from .config import ConfigError, build_model, load_config, load_preset, preset_names
from .hamiltonians import pendulum_matrices
from .integrators import (IntegrationError, generate_trajectories, read_hjt1,
                          write_hjt1)
from .training import TrainPlan, TrainingDivergedError, train

EXIT_CONFIG, EXIT_IO, EXIT_NUMERIC = 2, 3, 4


def _load_cfg(path_or_preset):
    if os.path.exists(path_or_preset):
        return load_config(path_or_preset)
    return load_preset(path_or_preset)


def _emit(obj):
    print(json.dumps(obj, sort_keys=True))


def cmd_generate(args):
    cfg = _load_cfg(args.config)
    model, ic, spec = build_model(cfg)
    traj = cfg["trajectory"]
    seed = args.seed if args.seed is not None else traj["seed"]
    bundle = generate_trajectories(
        model, ic, spec, traj["integrator"], traj["N"], traj["M"], traj["T"],
        seed, omega=traj.get("omega", 10.0))
    try:
        write_hjt1(args.out, bundle)
    except OSError as exc:
        print(f"error: cannot write {args.out}: {exc}", file=sys.stderr)
        return EXIT_IO
    _emit({"N": bundle.N, "M": bundle.M, "h": bundle.h, "model_id": bundle.model_id})
    return 0


def _net_template(cfg):
    net = cfg["network"]
    return {"L": net["L"], "width": net["width"], "kappa": net["kappa"],
            "activation": net["activation"]}


def cmd_train(args):
    cfg = _load_cfg(args.config)
    model, _, _ = build_model(cfg)
    try:
        bundle = read_hjt1(args.traj)
    except (OSError, ValueError) as exc:
        print(f"error: cannot read trajectory {args.traj}: {exc}", file=sys.stderr)
        return EXIT_IO
    if bundle.d != model.dim:
        raise ConfigError(f"trajectory dimension {bundle.d} != model dimension {model.dim}")
    tr = cfg["train"]
    plan = TrainPlan(lr=tr["lr"], n_iter=tr["n_iter"], batch_size=tr["batch"],
                     M_T=tr["M_T"], loss_kind=tr["loss_kind"], seed=tr["seed"])
    field, history = train(bundle, _net_template(cfg), plan, model=model)
    fn.save_field(args.out, field)
    loss_path = args.loss_out or args.out + ".loss.csv"
    dg.write_grid_csv(loss_path, ["iter", "loss"], list(enumerate(history)))
    _emit({"n_iter": len(history),
           "final_loss": float(history[-1]) if len(history) else None,
           "model": args.out, "loss_csv": loss_path})
    return 0


def _harmonic_oracle(x, t):
    return refs.harmonic_exact_grad(x, t)


def cmd_eval(args):
    cfg = _load_cfg(args.config)
    model, _, _ = build_model(cfg)
    try:
        bundle = read_hjt1(args.traj)
        field = fn.load_field(args.model)
    except (OSError, ValueError) as exc:
        print(f"error: cannot read inputs: {exc}", file=sys.stderr)
        return EXIT_IO
    os.makedirs(args.outdir, exist_ok=True)
    times = bundle.times()
    eps, delta, mse = dg.loss_curves(field, bundle)
    l1res = np.array([dg.weighted_L1_residual(field, model, bundle, i)
                      for i in range(bundle.M + 1)])
    energy = dg.energy_curve(model, bundle)
    dg.write_curves_csv(os.path.join(args.outdir, "curves.csv"),
                        times, eps, delta, mse, l1res=l1res, energy=energy)

    ev = cfg.get("eval", {})
    summary = {"final_mse": float(mse[-1]), "mean_eps": float(np.mean(eps)),
               "config_model": model.id, "seed": bundle.seed}

    grids = ev.get("grids", {})
    if grids:
        lo, hi = grids.get("lo", -6.0), grids.get("hi", 6.0)
        n_pts = int(grids.get("n", 50))
        t_list = grids.get("times", [float(times[-1])])
        plane = grids.get("plane", [0, 1])
        frozen = bundle.positions(0).mean(axis=0)
        g1 = np.linspace(lo, hi, n_pts)
        xs, ys = np.meshgrid(g1, g1, indexing="ij")
        rows_res, rows_err = [], []
        for t in t_list:
            X = np.tile(frozen, (n_pts * n_pts, 1))
            X[:, plane[0]] = xs.ravel()
            X[:, plane[1]] = ys.ravel()
            res = dg.residual(field, model, X, t)
            rows_res += [(a, b, t, r) for a, b, r in zip(xs.ravel(), ys.ravel(), res)]
            if ev.get("oracle") == "harmonic":
                if abs(t - 3 * np.pi / 4) < 1e-9:
                    rows_err += [(np.nan, np.nan, t, "pole")]
                    continue
                err = dg.error_field(field, _harmonic_oracle, X, t)
                rows_err += [(a, b, t, e) for a, b, e in zip(xs.ravel(), ys.ravel(), err)]
        dg.write_grid_csv(os.path.join(args.outdir, "residual_grid.csv"),
                          ["x1", "x2", "t", "res"], rows_res)
        if rows_err:
            dg.write_grid_csv(os.path.join(args.outdir, "error_grid.csv"),
                              ["x1", "x2", "t", "err"], rows_err)

    dg.write_summary_json(os.path.join(args.outdir, "summary.json"), summary)
    _emit(summary)
    return 0


def cmd_control(args):
    cfg = _load_cfg(args.config)
    if cfg["hamiltonian"]["name"] != "lqc_pendulum":
        raise ConfigError("control command requires the lqc_pendulum model")
    model, _, spec = build_model(cfg)
    try:
        field = fn.load_field(args.model)
    except (OSError, ValueError) as exc:
        print(f"error: cannot read model {args.model}: {exc}", file=sys.stderr)
        return EXIT_IO
    os.makedirs(args.outdir, exist_ok=True)
    params = cfg["hamiltonian"].get("params", {})
    A, B = pendulum_matrices(M=params.get("M", 1.0), m=params.get("m", 0.1),
                             l=params.get("l", 1.0), g_grav=params.get("g_grav", 9.8))
    Q = np.diag(params.get("P1_diag", (1.0, 0.0, 1.0, 0.0)))
    R = float(params.get("R", 1.0))
    T = float(cfg["trajectory"]["T"])
    steps = int(cfg["trajectory"]["M"])
    n_roll = int(args.n_rollouts)
    q0 = sampling.draw(spec, n_roll, cfg["trajectory"]["seed"] + 99991)

    BRB = B @ B.T / R
    ref = refs.lqc_optimal_reference(A, B, Q, R, Q, q0, T, steps)
    # physical-time optimal trajectories are the time-reversed characteristics
    optimal = ref[::-1, :, : q0.shape[1]]

    def learned_rhs(x, tau):
        # closed loop under the learned controller u = -R^-1 B^T grad psi
        g = field.grad_x(x, T - tau)
        return x @ A.T - g @ BRB.T

    h = T / steps
    x = optimal[0].copy()
    learned = np.empty((steps + 1, n_roll, x.shape[1]))
    learned[0] = x
    for i in range(steps):
        tau = i * h
        k1 = learned_rhs(x, tau)
        k2 = learned_rhs(x + 0.5 * h * k1, tau + 0.5 * h)
        k3 = learned_rhs(x + 0.5 * h * k2, tau + 0.5 * h)
        k4 = learned_rhs(x + h * k3, tau + h)
        x = x + (h / 6) * (k1 + 2 * k2 + 2 * k3 + k4)
        learned[i + 1] = x
    dev = learned - optimal
    mean_sq_dev = float(np.mean(np.sum(dev * dev, axis=-1)))

    times = h * np.arange(steps + 1)
    d = x.shape[1]
    header = ["t", "rollout"] + [f"x{j}_learned" for j in range(d)] + \
             [f"x{j}_optimal" for j in range(d)]
    rows = []
    for i in range(steps + 1):
        for k in range(n_roll):
            rows.append([times[i], k, *learned[i, k], *optimal[i, k]])
    dg.write_grid_csv(os.path.join(args.outdir, "control_trajectories.csv"),
                      header, rows)
    summary = {"mean_sq_state_deviation": mean_sq_dev, "n_rollouts": n_roll, "T": T}
    dg.write_summary_json(os.path.join(args.outdir, "control_summary.json"), summary)
    _emit(summary)
    return 0


def cmd_report(args):
    merged = {}
    for root, _, files in os.walk(args.outdir):
        for name in sorted(files):
            if name.endswith("summary.json"):
                path = os.path.join(root, name)
                with open(path, "r", encoding="utf-8") as f:
                    merged[os.path.relpath(path, args.outdir)] = json.load(f)
    if not merged:
        print(f"error: no summary files under {args.outdir}", file=sys.stderr)
        return EXIT_IO
    checks = {}
    for key, summary in merged.items():
        thresholds = summary.get("thresholds", {})
        for field_name, bound in thresholds.items():
            value = summary.get(field_name)
            checks[f"{key}:{field_name}"] = bool(value is not None and value < bound)
    report = {"summaries": merged, "checks": checks,
              "all_pass": all(checks.values()) if checks else None}
    out = os.path.join(args.outdir, "report.json")
    dg.write_summary_json(out, report)
    _emit({"report": out, "n_summaries": len(merged), "all_pass": report["all_pass"]})
    return 0


def _build_parser():
    p = argparse.ArgumentParser(
        prog="hjdc",
        description="Particle-coupled solver for Hamilton-Jacobi equations")
    p.add_argument("--threads", type=int,
                   default=int(os.environ.get("HJDC_THREADS", "1")),
                   help="worker cap for helper parallelism (never changes results)")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="sample rho0 and integrate trajectories")
    g.add_argument("--config", required=True, help="config path or preset name")
    g.add_argument("--out", required=True)
    g.add_argument("--seed", type=int, default=None)
    g.set_defaults(func=cmd_generate)

    t = sub.add_parser("train", help="fit the gradient field to a trajectory file")
    t.add_argument("--config", required=True)
    t.add_argument("--traj", required=True)
    t.add_argument("--out", required=True)
    t.add_argument("--loss-out", default=None)
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="diagnostics for a trained field")
    e.add_argument("--config", required=True)
    e.add_argument("--model", required=True)
    e.add_argument("--traj", required=True)
    e.add_argument("--outdir", required=True)
    e.set_defaults(func=cmd_eval)

    c = sub.add_parser("control", help="roll out the learned LQC control")
    c.add_argument("--config", required=True)
    c.add_argument("--model", required=True)
    c.add_argument("--outdir", required=True)
    c.add_argument("--n-rollouts", type=int, default=40)
    c.set_defaults(func=cmd_control)

    r = sub.add_parser("report", help="collate summaries under an output directory")
    r.add_argument("--outdir", required=True)
    r.set_defaults(func=cmd_report)

    lp = sub.add_parser("presets", help="list bundled experiment presets")
    lp.set_defaults(func=lambda a: (_emit(preset_names()), 0)[1])
    return p


def main(argv=None):
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except TrainingDivergedError as exc:
        print(f"numeric error: {exc} (iteration {exc.iteration})", file=sys.stderr)
        return EXIT_NUMERIC
    except IntegrationError as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
