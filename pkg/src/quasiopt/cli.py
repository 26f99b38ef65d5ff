"""Command-line entry point.

Subcommands: gen-data, train, eval, cv, sweep, oracle-check. Every output
file gets a sibling ``<output>.manifest.json`` recording the resolved
configuration, sha256 hashes of input files, the package version and wall
clock, written atomically.

Exit codes: 0 success, 1 runtime failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import os
import sys
import tempfile
import time
from pathlib import Path

from . import __version__
from .data import load_dataset, save_dataset
from .envs import EnvSpec, generate_dataset
from .evaluate import (DEFAULT_MU_GRID, SWEEP_COLUMNS, cross_validate_mu,
                       evaluate_policy, sensitivity_sweep)
from .grid import oracle_check
from .model import (BasisSpec, ModelConfig, load_model, radial_grid_basis,
                    save_model)
from .train import TrainConfig, train_full

__all__ = ["main"]


def _sha256(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def _atomic_write_json(payload: dict, path: Path) -> None:
    fd, tmp = tempfile.mkstemp(dir=path.parent or Path("."), suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _write_manifest(args: argparse.Namespace, inputs: list[str],
                    outputs: list[str], started: float) -> None:
    config = {k: v for k, v in vars(args).items()
              if k not in ("func", "config")}
    manifest = {
        "config": config,
        "input_hashes": {p: _sha256(p) for p in inputs},
        "version": __version__,
        "wall_clock_s": time.perf_counter() - started,
        "outputs": outputs,
    }
    for out in outputs:
        _atomic_write_json(manifest, Path(str(out) + ".manifest.json"))


def _write_csv(path: str, header: list[str], rows: list[list]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


# --- subcommands ------------------------------------------------------------

def _cmd_gen_data(args) -> int:
    started = time.perf_counter()
    spec = EnvSpec(env_id=args.env, gamma=args.gamma)
    ds = generate_dataset(spec, n=args.n, T=args.T, seed=args.seed)
    save_dataset(ds, args.out)
    _write_manifest(args, [], [args.out], started)
    return 0


def _model_config(args, d_s: int) -> ModelConfig:
    if args.basis == "radial":
        basis = radial_grid_basis(d_s, scale=args.radial_scale,
                                  width=args.radial_width)
    else:
        basis = BasisSpec(kind=args.basis, d_s=d_s)
    return ModelConfig(mu=args.mu, gamma=args.gamma, basis=basis, cap=args.cap)


def _train_config(args) -> TrainConfig:
    return TrainConfig(alpha0=args.alpha0, decay=args.decay,
                       batch_size=args.batch, eps=args.eps,
                       max_iters=args.max_iters, n_inits=args.n_inits,
                       seed=args.seed)


def _cmd_train(args) -> int:
    started = time.perf_counter()
    ds = load_dataset(args.data)
    cfg = _model_config(args, ds.d_s)
    params, report, _ = train_full(ds, cfg, _train_config(args),
                                   bandwidth=args.bandwidth)
    save_model(params, cfg, args.out)
    report_path = str(Path(args.out).with_suffix("")) + "_report.csv"
    _write_csv(report_path, ["iteration", "loss", "grad_norm", "movement"],
               [[j + 1, report.losses[j], report.grad_norms[j],
                 report.movements[j]] for j in range(report.n_iters)])
    _write_manifest(args, [args.data], [args.out, report_path], started)
    if not report.converged:
        print(f"warning: stopped at max_iters={args.max_iters} without "
              f"meeting the movement criterion", file=sys.stderr)
    return 0


def _cmd_eval(args) -> int:
    started = time.perf_counter()
    params, cfg = load_model(args.model)
    spec = EnvSpec(env_id=args.env, gamma=cfg.gamma)
    rep = evaluate_policy(spec, params, cfg, n_rollouts=args.rollouts,
                          horizon=args.horizon, seed=args.seed)
    rows = [[i, r] for i, r in enumerate(rep.returns)]
    rows.append(["mean", rep.mean])
    rows.append(["sd", rep.sd])
    for q, v in rep.quantiles.items():
        rows.append([f"q{q}", v])
    _write_csv(args.out, ["rollout", "discounted_return"], rows)
    _write_manifest(args, [args.model], [args.out], started)
    return 0


def _cmd_cv(args) -> int:
    started = time.perf_counter()
    ds = load_dataset(args.data)
    base = _model_config(args, ds.d_s)
    rep = cross_validate_mu(ds, args.mu_grid, base, _train_config(args),
                            bandwidth=args.bandwidth)
    rows = [[mu, c, int(mu == rep.selected_mu)]
            for mu, c in zip(rep.mu_grid, rep.criteria)]
    _write_csv(args.out, ["mu", "criterion", "selected"], rows)
    _write_manifest(args, [args.data], [args.out], started)
    print(f"selected mu = {rep.selected_mu}")
    return 0


def _cmd_sweep(args) -> int:
    started = time.perf_counter()
    ds = load_dataset(args.data)
    spec = EnvSpec(env_id=args.env, gamma=args.gamma)
    base = _model_config(args, ds.d_s)
    rows = sensitivity_sweep(spec, ds, args.mu_grid, base, _train_config(args),
                             n_seeds=args.seeds, n_rollouts=args.rollouts,
                             horizon=args.horizon)
    _write_csv(args.out, list(SWEEP_COLUMNS),
               [[r[c] for c in SWEEP_COLUMNS] for r in rows])
    _write_manifest(args, [args.data], [args.out], started)
    return 0


def _cmd_oracle_check(args) -> int:
    started = time.perf_counter()
    rows = oracle_check(seed=args.seed, n_states=args.n_states,
                        n_actions=args.K, mu_values=tuple(args.mu_grid),
                        cap=args.cap, gamma=args.gamma)
    table = [[r["name"], r["worst"], "pass" if r["pass"] else "fail"]
             for r in rows]
    if args.out:
        _write_csv(args.out, ["name", "worst_violation", "status"], table)
        _write_manifest(args, [], [args.out], started)
    for name, worst, status in table:
        print(f"{name}: {status} (worst {worst:.3e})")
    return 0 if all(r["pass"] for r in rows) else 1


# --- argument plumbing ------------------------------------------------------

def _mu_list(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad mu grid: {text!r}") from None


def _add_model_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--mu", type=float, default=0.1)
    p.add_argument("--cap", type=float, default=5.0)
    p.add_argument("--gamma", type=float, default=0.9)
    p.add_argument("--basis", choices=["polynomial_degree_2", "radial"],
                   default="polynomial_degree_2")
    p.add_argument("--radial-scale", type=float, default=0.5)
    p.add_argument("--radial-width", type=float, default=1.0)


def _add_train_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--alpha0", type=float, default=0.002)
    p.add_argument("--decay", type=float, default=1e-4)
    p.add_argument("--batch", type=int, default=5)
    p.add_argument("--eps", type=float, default=1e-5)
    p.add_argument("--max-iters", type=int, default=20000)
    p.add_argument("--n-inits", type=int, default=200)
    p.add_argument("--bandwidth", type=float, default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="quasiopt",
        description="Offline RL with bounded-support quadratic-value policies")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate behavior-policy data")
    p.add_argument("--config", default=None)
    p.add_argument("--env", choices=["I", "II", "III", "IV"], required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--T", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--gamma", type=float, default=0.9)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_gen_data)

    p = sub.add_parser("train", help="train a policy on a dataset")
    p.add_argument("--config", default=None)
    p.add_argument("--data", required=True)
    _add_model_args(p)
    _add_train_args(p)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("eval", help="evaluate a trained model by simulation")
    p.add_argument("--config", default=None)
    p.add_argument("--env", choices=["I", "II", "III", "IV"], required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--rollouts", type=int, default=100)
    p.add_argument("--horizon", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("cv", help="cross-validate the screening weight mu")
    p.add_argument("--config", default=None)
    p.add_argument("--data", required=True)
    p.add_argument("--mu-grid", type=_mu_list, default=list(DEFAULT_MU_GRID))
    _add_model_args(p)
    _add_train_args(p)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_cv)

    p = sub.add_parser("sweep", help="mu sensitivity sweep")
    p.add_argument("--config", default=None)
    p.add_argument("--env", choices=["I", "II", "III", "IV"], required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--mu-grid", type=_mu_list, default=list(DEFAULT_MU_GRID))
    p.add_argument("--seeds", type=int, default=10)
    p.add_argument("--rollouts", type=int, default=100)
    p.add_argument("--horizon", type=int, default=100)
    _add_model_args(p)
    _add_train_args(p)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_sweep)

    p = sub.add_parser("oracle-check",
                       help="run the discretized-MDP invariant battery")
    p.add_argument("--config", default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--n-states", type=int, default=4)
    p.add_argument("--K", type=int, default=21)
    p.add_argument("--mu-grid", type=_mu_list, default=[0.05, 0.1, 0.5])
    p.add_argument("--cap", type=float, default=5.0)
    p.add_argument("--gamma", type=float, default=0.9)
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_oracle_check)
    return parser


def _apply_config_file(parser: argparse.ArgumentParser, argv: list[str]):
    """Load ``key = value`` lines from --config as defaults; CLI flags win.

    Unknown keys are rejected (exit 2).
    """
    if "--config" not in argv:
        return argv
    # Peek at the config path without consuming other args.
    idx = argv.index("--config")
    if idx + 1 >= len(argv):
        parser.error("--config requires a path")
    path = argv[idx + 1]
    try:
        text = Path(path).read_text()
    except OSError as exc:
        parser.error(f"cannot read config file: {exc}")
    overrides = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            parser.error(f"{path}:{lineno}: expected 'key = value'")
        key, val = (part.strip() for part in line.split("=", 1))
        overrides[key.replace("-", "_")] = val
    # Validate keys against the chosen subcommand's options.
    sub_actions = next(a for a in parser._actions
                       if isinstance(a, argparse._SubParsersAction))
    command = next((a for a in argv if a in sub_actions.choices), None)
    if command is None:
        parser.error("--config requires a subcommand")
    subparser = sub_actions.choices[command]
    known = {a.dest: a for a in subparser._actions}
    extra_argv = []
    for key, val in overrides.items():
        if key not in known or key in ("func", "config"):
            parser.error(f"unknown config key {key!r} for {command}")
        flag = "--" + key.replace("_", "-")
        if flag in argv:
            continue  # explicit flag wins
        extra_argv.extend([flag, val])
    return argv + extra_argv


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    argv = _apply_config_file(parser, argv)
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, RuntimeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
