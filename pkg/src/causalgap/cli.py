"""Command-line entry point: scenario selection, config overrides, seeded
parallel execution, and output management."""

from __future__ import annotations

import argparse
import sys
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from . import __version__, experiments
from .experiments import ScenarioSpec


def _parse_bool(text: str) -> bool:
    v = text.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _parse_levels(text: str) -> tuple:
    return tuple(float(p) for p in str(text).split(",") if p.strip())


CONFIG_TYPES = {
    "n_dim": int,
    "m_dim": int,
    "k_components": int,
    "seeds": int,
    "episodes": int,
    "iterations": int,
    "steps": int,
    "samples_per_episode": int,
    "n_train": int,
    "heldout": int,
    "eps": float,
    "adapt_steps": int,
    "adapt_lr": float,
    "gamma_lr": float,
    "mech_noise": float,
    "zero_intervention": _parse_bool,
    "lam": float,
    "lr_encoder": float,
    "lr_predictor": float,
    "batch_size": int,
    "redraw_every": int,
    "hidden": int,
    "inner_steps": int,
    "inner_lr": float,
    "rep_gamma_lr": float,
    "noise_levels": _parse_levels,
    "data_path": str,
    "model": str,
    "net_epochs": int,
    "net_hidden": int,
    "net_lr": float,
    "net_batch": int,
    "instances": int,
    "dim": int,
    "base_seed": int,
    "workers": int,
    "out_dir": str,
    "plots": _parse_bool,
    "variant": str,
}


@dataclass
class CliConfig:
    """Resolved invocation: flag overrides beat config-file values."""

    subcommand: str
    config_path: str | None
    values: dict


def load_config(path) -> dict:
    """Parse flat ``key = value`` text; unknown keys and bad types fail fast."""
    values = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected 'key = value'")
            key, _, text = line.partition("=")
            key = key.strip()
            text = text.strip()
            if key not in CONFIG_TYPES:
                raise ValueError(f"{path}:{lineno}: unknown key {key!r}")
            try:
                values[key] = CONFIG_TYPES[key](text)
            except ValueError:
                raise ValueError(
                    f"{path}:{lineno}: bad value for {key!r}: {text!r}"
                ) from None
    return values


def _add_common(parser):
    parser.add_argument("--config", help="flat key=value config file")
    parser.add_argument("--out", dest="out_dir", help="output directory")
    parser.add_argument("--seed", dest="base_seed", type=int, help="base seed")
    parser.add_argument("--workers", type=int, help="worker processes for seed fan-out")
    parser.add_argument("--plots", action="store_const", const=True, help="emit SVG line plots")
    parser.add_argument("--seeds", type=int, help="number of seeded runs")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="causalgap",
        description="Infer causal direction and learn causal representations from generalization gaps.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p = sub.add_parser("direction", help="discrete or continuous direction prediction")
    _add_common(p)
    p.add_argument("--variant", choices=("discrete", "continuous"), help="default discrete")
    p.add_argument("--n", dest="n_dim", type=int, help="cause dimension")
    p.add_argument("--m", dest="m_dim", type=int, help="effect dimension")
    p.add_argument("--episodes", type=int)
    p.add_argument("--samples-per-episode", dest="samples_per_episode", type=int)
    p.add_argument("--n-train", dest="n_train", type=int)
    p.add_argument("--adapt-steps", dest="adapt_steps", type=int)
    p.add_argument("--adapt-lr", dest="adapt_lr", type=float)
    p.add_argument("--gamma-lr", dest="gamma_lr", type=float)

    p = sub.add_parser("replearn", help="rotation-encoder representation learning")
    _add_common(p)
    p.add_argument("--iterations", type=int)
    p.add_argument("--lam", type=float, help="gap-penalty weight")
    p.add_argument("--lr-encoder", dest="lr_encoder", type=float)
    p.add_argument("--lr-predictor", dest="lr_predictor", type=float)
    p.add_argument("--batch-size", dest="batch_size", type=int)
    p.add_argument("--redraw-every", dest="redraw_every", type=int)
    p.add_argument("--inner-steps", dest="inner_steps", type=int)

    p = sub.add_parser("robustness", help="mixture-marginal adaptation study")
    _add_common(p)
    p.add_argument("--n", dest="n_dim", type=int)
    p.add_argument("--m", dest="m_dim", type=int)
    p.add_argument("--k", dest="k_components", type=int)
    p.add_argument("--steps", type=int, help="adaptation budget in batches of 100")
    p.add_argument("--adapt-lr", dest="adapt_lr", type=float)

    p = sub.add_parser("realdata", help="cause-effect pair file with a noise sweep")
    _add_common(p)
    p.add_argument("--file", dest="data_path", help="two-column pair data file")
    p.add_argument("--noise", dest="noise_levels", type=_parse_levels, help="comma-separated noise levels")
    p.add_argument("--model", choices=("linear", "net", "both"))
    p.add_argument("--net-epochs", dest="net_epochs", type=int)

    p = sub.add_parser("edge", help="population-level score scatter")
    _add_common(p)
    p.add_argument("--instances", type=int)
    p.add_argument("--dim", type=int)

    p = sub.add_parser("all", help="run every scenario at desk scale")
    _add_common(p)

    return parser


_SPEC_FIELDS = {f.name for f in fields(ScenarioSpec)}


def resolve(args: argparse.Namespace) -> tuple:
    """Merge defaults, config file, and flags into a scenario spec."""
    file_values = load_config(args.config) if args.config else {}
    flag_values = {
        k: v for k, v in vars(args).items() if k not in ("config", "subcommand") and v is not None
    }
    merged = {**file_values, **flag_values}
    variant = merged.pop("variant", "discrete")
    model = merged.pop("model", None)
    if model is not None:
        merged["model"] = model

    scenario = {
        "direction": "direction_discrete" if variant == "discrete" else "direction_continuous",
        "replearn": "replearn",
        "robustness": "robustness",
        "realdata": "realdata",
        "edge": "edge",
        "all": "direction_discrete",  # spec carrier; run_all swaps scenarios
    }[args.subcommand]
    spec_kwargs = {k: v for k, v in merged.items() if k in _SPEC_FIELDS}
    unknown = set(merged) - _SPEC_FIELDS
    if unknown:
        raise ValueError(f"unknown configuration keys: {sorted(unknown)}")
    if args.subcommand == "all" and "out_dir" not in spec_kwargs:
        spec_kwargs["out_dir"] = "causalgap-out"
    spec_kwargs.setdefault("out_dir", "causalgap-out")
    spec = ScenarioSpec(scenario=scenario, **spec_kwargs)
    return spec, CliConfig(args.subcommand, args.config, merged)


def write_manifest(spec: ScenarioSpec, cli: CliConfig) -> None:
    out = Path(spec.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    lines = [f"artifact_version = {__version__}", f"subcommand = {cli.subcommand}"]
    for f in sorted(_SPEC_FIELDS):
        value = getattr(spec, f)
        if isinstance(value, tuple):
            value = ",".join(str(v) for v in value)
        lines.append(f"{f} = {value}")
    (out / "manifest.txt").write_text("\n".join(lines) + "\n")


def _dispatch(subcommand: str, spec: ScenarioSpec) -> None:
    if subcommand == "direction":
        if spec.scenario == "direction_discrete":
            result = experiments.run_discrete(spec)
            for method, res in result.results.items():
                t = res.episodes_to_perfect()
                reach = f"perfect from episode {t}" if t else "never perfect"
                print(f"{method}: final accuracy {res.accuracy[-1]:.3f} ({reach})")
        else:
            result = experiments.run_continuous(spec)
            for method, acc in result.accuracy.items():
                print(f"{method}: final accuracy {acc[-1]:.3f}")
    elif subcommand == "replearn":
        result = experiments.run_replearn(spec)
        for method in result.trajectories:
            entries = result.stable_entries(method)
            done = sum(e is not None for e in entries)
            print(f"{method}: {done}/{spec.seeds} seeds settled near the target angle")
    elif subcommand == "robustness":
        result = experiments.run_robustness(spec)
        med_ab = float(np.median(result.improve_ab[:, -1]))
        med_ba = float(np.median(result.improve_ba[:, -1]))
        med_sg = float(np.median(result.gap_running[:, -1]))
        print(f"final median improvement: correct {med_ab:.4f}, reverse {med_ba:.4f}; gap score {med_sg:.4f}")
    elif subcommand == "realdata":
        if spec.model == "both":
            levels = {m: tuple(spec.noise_levels) for m in ("linear", "net")}
            result = experiments.run_realdata(spec, model_levels=levels)
        else:
            result = experiments.run_realdata(spec)
        for (model, sigma), rate in sorted(result.success.items()):
            print(f"{model} @ noise {sigma:g}: success {rate:.3f}")
    elif subcommand == "edge":
        result = experiments.run_edge_analysis(spec)
        neg = int((result.rows[:, 1] < 0).sum())
        print(f"{spec.instances} instances, {neg} with a negative gap score")
    elif subcommand == "all":
        experiments.run_all(spec)
        print(f"all scenarios written under {spec.out_dir}")


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        spec, cli = resolve(args)
        write_manifest(spec, cli)
        _dispatch(args.subcommand, spec)
    except (FileNotFoundError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


def entrypoint() -> None:
    raise SystemExit(main())
