"""Command-line front end.

Exit codes: 0 success, 1 configuration/usage problems, 2 numeric or
runtime failures. Every command that writes files also writes a
``manifest.json`` beside them — the resolved configuration, tool
version, seed, and RNG scheme — and contains no timestamps, so a run
is reproducible from its manifest alone.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .covmodel import (CorrelationSpec, CovarianceModel, generate_correlation,
                       load_matrix_csv, regularize, save_matrix_csv, spectrum)
from .design import design_budgeted, design_unconstrained, min_feasible_budget
from .environment import make_instance
from .errors import CcdesignError, ConfigError, NumericError
from .harness import (PRESETS, ExperimentConfig, get_preset, run_experiment,
                      samples_to_threshold, write_raw_csv)
from .inference import parse_stop_rule
from .ingest import IngestConfig, ingest_csv, replay_from_bundle, write_bundle
from .policies import PolicyKind, policy_stream_index, run_trial
from .seeding import RNG_SCHEME, TAG_TRIAL, rng_from


class _Parser(argparse.ArgumentParser):
    """argparse exits 2 on usage errors; the contract reserves 2 for
    numeric failures, so remap usage problems to 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"ccdesign: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _write_manifest(out_dir: Path, command: str, seed: int, config: dict) -> None:
    manifest = {
        "schema": 1,
        "tool": "ccdesign",
        "version": __version__,
        "command": command,
        "seed": seed,
        "rng_scheme": RNG_SCHEME,
        "config": config,
    }
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True, default=str)
        fh.write("\n")


def _corr_spec_from(args) -> CorrelationSpec:
    kwargs = dict(pattern=args.pattern, k=args.k, rho=args.rho)
    for name in ("block_size", "edge_prob", "graph_seed", "length_scale", "kron_k1"):
        val = getattr(args, name, None)
        if val is not None:
            kwargs[name] = val
    return CorrelationSpec(**kwargs)


def _cov_from(args) -> CovarianceModel:
    matrix = getattr(args, "matrix", None)
    if matrix:
        return CovarianceModel.from_matrix(load_matrix_csv(matrix))
    if getattr(args, "pattern", None) is None:
        raise ConfigError("need either --pattern or --matrix")
    return generate_correlation(_corr_spec_from(args))


def _add_pattern_args(p: argparse.ArgumentParser, *, required: bool) -> None:
    p.add_argument("--pattern", required=required,
                   help="correlation pattern (toeplitz, equicorrelation, block, "
                        "circulant, graph, exponential, rbf, kronecker, identity)")
    p.add_argument("--k", type=int, required=required, help="number of streams")
    p.add_argument("--rho", type=float, default=0.0, help="correlation level")
    p.add_argument("--block-size", type=int, dest="block_size")
    p.add_argument("--edge-prob", type=float, dest="edge_prob")
    p.add_argument("--graph-seed", type=int, dest="graph_seed")
    p.add_argument("--length-scale", type=float, dest="length_scale")
    p.add_argument("--kron-k1", type=int, dest="kron_k1")


def _parse_policies(text: str) -> tuple[PolicyKind, ...]:
    return tuple(PolicyKind.from_name(name.strip())
                 for name in text.split(",") if name.strip())


# ---------------------------------------------------------------------------
# subcommands


def _cmd_gen_cov(args) -> int:
    spec = _corr_spec_from(args)
    model = generate_correlation(spec)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_matrix_csv(model.sigma, out / "sigma.csv")
    report = spectrum(model)
    with open(out / "spectrum.json", "w") as fh:
        fh.write(report.to_json() + "\n")
    _write_manifest(out, "gen-cov", args.seed, dataclasses.asdict(spec))
    print(f"wrote {out / 'sigma.csv'} (k={model.k}, "
          f"shannon_er={report.shannon_er:.4g}, jitter={model.jitter_applied:g})")
    return 0


def _cmd_spectrum(args) -> int:
    model = _cov_from(args)
    if args.regularize is not None:
        model = regularize(model, args.regularize)
    report = spectrum(model)
    print(report.to_json())
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "spectrum.json", "w") as fh:
            fh.write(report.to_json() + "\n")
        config = {"matrix": args.matrix} if args.matrix else dataclasses.asdict(_corr_spec_from(args))
        config["regularize"] = args.regularize
        _write_manifest(out, "spectrum", args.seed, config)
    return 0


def _cmd_design(args) -> int:
    model = _cov_from(args)
    k = model.k
    i, j = args.pair
    if not (0 <= i < k and 0 <= j < k and i != j):
        raise ConfigError(f"pair must be two distinct indices in [0, {k})")
    delta_vec = np.zeros(k)
    delta_vec[i] = args.delta
    delta_vec[j] = -args.delta
    if args.unconstrained:
        action = design_unconstrained(model, delta_vec)
    else:
        action = design_budgeted(model, delta_vec, args.budget)
    payload = {
        "c": [float(v) for v in action.c],
        "objective": action.objective,
        "l1_norm": action.l1_norm,
        "budget_active": action.budget_active,
        "eq_residual": action.eq_residual,
        "kkt_residual": action.kkt_residual,
        "min_feasible_budget": min_feasible_budget(delta_vec),
        "pair": [i, j],
    }
    print(json.dumps(payload, indent=2, sort_keys=True))
    return 0


def _config_from_args(args) -> ExperimentConfig:
    """defaults < preset < config file < flags, as documented."""
    base: dict = {}
    if args.preset:
        base = dataclasses.asdict(get_preset(args.preset))
        base["policies"] = tuple(PolicyKind.from_name(p) if isinstance(p, str) else p
                                 for p in get_preset(args.preset).policies)
    if args.config:
        try:
            file_cfg = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config file {args.config}: {exc}") from exc
        if not isinstance(file_cfg, dict):
            raise ConfigError("config file must hold a JSON object")
        if "policies" in file_cfg:
            file_cfg["policies"] = _parse_policies(",".join(file_cfg["policies"])
                                                   if isinstance(file_cfg["policies"], list)
                                                   else file_cfg["policies"])
        if "sweep_grid" in file_cfg:
            file_cfg["sweep_grid"] = tuple(file_cfg["sweep_grid"])
        unknown = set(file_cfg) - {f.name for f in dataclasses.fields(ExperimentConfig)}
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        base.update(file_cfg)

    overrides = {
        "k": args.k, "n": args.n, "delta": args.delta, "rho": args.rho,
        "budget": args.budget, "seeds": args.seeds, "horizon": args.horizon,
        "f1_threshold": args.f1_threshold, "stop": args.stop,
        "sustain": args.sustain, "sweep_param": args.sweep_param,
    }
    if args.pattern is not None:
        overrides["pattern"] = None if args.pattern == "identity" else args.pattern
    if args.policies is not None:
        overrides["policies"] = _parse_policies(args.policies)
    if args.sweep_grid is not None:
        overrides["sweep_grid"] = tuple(float(v) for v in args.sweep_grid.split(","))
    base.update({k: v for k, v in overrides.items() if v is not None})

    if not base.get("preset"):
        base["preset"] = args.preset or ""
    base.setdefault("experiment_id", base["preset"] or "run")
    try:
        return ExperimentConfig(**base)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def _cmd_simulate(args, *, require_sweep: bool = False) -> int:
    config = _config_from_args(args)
    if config.stop:
        parse_stop_rule(config.stop)  # fail fast on typos
    if require_sweep and config.sweep_param is None:
        raise ConfigError("sweep requires --sweep-param (or a sweeping preset)")
    jobs = args.jobs if args.jobs else (os.cpu_count() or 1)
    result = run_experiment(config, master_seed=args.seed, out_dir=args.out,
                            jobs=jobs, trajectories=args.out is not None)
    if args.out:
        out = Path(args.out)
        cfg_dict = result.summary["config"]
        _write_manifest(out, "sweep" if require_sweep else "simulate",
                        args.seed, cfg_dict)
        print(f"wrote {result.raw_path} and {result.summary_path}")
        if args.svg:
            written = _render_reports(out, out)
            for path in written:
                print(f"wrote {path}")
    else:
        grid = result.summary["grid"]
        print(json.dumps({"schema": result.summary["schema"],
                          "grid": grid}, indent=2, sort_keys=True))
    return 0


def _cmd_ingest(args) -> int:
    timestamp = ((args.date_col, args.time_col)
                 if args.date_col and args.time_col else args.timestamp_col)
    config = IngestConfig(timestamp_col=timestamp, label_col=args.label_col,
                          window_seconds=args.window_seconds,
                          training_rows=args.training_rows, ridge=args.ridge)
    dataset = ingest_csv(args.csv, config)
    out = write_bundle(dataset, args.out)
    manifest_cfg = {"csv": str(args.csv), "timestamp_col": timestamp,
                    "label_col": args.label_col,
                    "window_seconds": args.window_seconds,
                    "training_rows": args.training_rows, "ridge": args.ridge}
    _write_manifest(out, "ingest", args.seed, manifest_cfg)
    print(f"bundle at {out}: {dataset.meta['n_kept_columns']} channels, "
          f"{dataset.meta['n_windows']} windows "
          f"({dataset.meta['n_anomalous_windows']} anomalous), "
          f"ridge={dataset.ridge_used:g}")
    return 0


def _cmd_replay(args) -> int:
    anomalous = (tuple(int(v) for v in args.anomalous.split(","))
                 if args.anomalous else None)
    instance = replay_from_bundle(args.bundle, budget=args.budget, n=args.n,
                                  anomalous=anomalous, delta=args.delta)
    policies = _parse_policies(args.policies)
    horizon = args.horizon or instance.horizon()
    rule = parse_stop_rule(args.stop) if args.stop else parse_stop_rule(f"fixed:{horizon}")
    rows = []
    for kind in policies:
        rng = rng_from(args.seed, TAG_TRIAL, 0, policy_stream_index(kind))
        record = run_trial(instance, kind, rule, rng, horizon=horizon)
        delay = samples_to_threshold(record, args.f1_threshold)
        rows.append({
            "experiment_id": "replay", "preset": "replay", "policy": kind.value,
            "seed": args.seed, "grid_value": "",
            "tau": "" if record.tau is None else str(record.tau),
            "samples_to_f1": "" if delay is None else str(delay),
            "censored": "false" if delay is not None else "true",
            "final_f1": repr(float(record.final_f1)),
        })
        print(f"{kind.value}: s_hat={record.s_hat} final_f1={record.final_f1:.3f} "
              f"delay={delay} tau={record.tau}"
              + (f" FAILURE={record.failure}" if record.failure else ""))
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        write_raw_csv(out / "replay.csv", rows)
        _write_manifest(out, "replay", args.seed, {
            "bundle": str(args.bundle), "budget": args.budget, "n": args.n,
            "anomalous": args.anomalous, "delta": args.delta,
            "policies": [k.value for k in policies], "stop": args.stop,
            "horizon": horizon, "f1_threshold": args.f1_threshold,
            "s_star": list(instance.s_star),
        })
        print(f"wrote {out / 'replay.csv'}")
    return 0


# ---------------------------------------------------------------------------
# report rendering


def _render_reports(run_dir: Path, out_dir: Path) -> list[Path]:
    import matplotlib
    matplotlib.use("Agg")
    matplotlib.rcParams["svg.hashsalt"] = "ccdesign"
    import matplotlib.pyplot as plt

    summary_path = run_dir / "summary.json"
    if not summary_path.exists():
        raise ConfigError(f"no summary.json in {run_dir}")
    summary = json.loads(summary_path.read_text())
    grid = summary.get("grid", [])
    if not grid:
        raise ConfigError("summary has no grid entries to plot")
    out_dir.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []

    def _save(fig, name: str) -> None:
        path = out_dir / name
        fig.savefig(path, format="svg", metadata={"Date": None})
        plt.close(fig)
        written.append(path)

    point = grid[0]
    have_traj = any("trajectory" in st for st in point["policies"].values())
    if have_traj:
        fig, ax = plt.subplots(figsize=(7, 4.5))
        for name, st in sorted(point["policies"].items()):
            traj = st.get("trajectory")
            if not traj:
                continue
            t = np.arange(1, len(traj["mean"]) + 1)
            ax.plot(t, traj["mean"], label=name, linewidth=1.4)
            ax.fill_between(t, traj["lo"], traj["hi"], alpha=0.2, linewidth=0)
        ax.set_xlabel("samples")
        ax.set_ylabel("mean F1")
        ax.set_ylim(-0.02, 1.02)
        ax.legend(loc="lower right", fontsize=8)
        ax.set_title("identification quality vs samples")
        _save(fig, "f1_vs_samples.svg")

    if summary.get("sweep_param") and len(grid) > 1:
        fig, ax = plt.subplots(figsize=(7, 4.5))
        xs = [pt["grid_value"] for pt in grid]
        policies = sorted(grid[0]["policies"])
        confidence = summary["sweep_param"] == "confidence"
        for name in policies:
            ys, los, his = [], [], []
            for pt in grid:
                st = pt["policies"][name]
                val = st.get("tau_mean") if confidence else st.get("delay_median")
                ci = st.get("tau_ci") if confidence else st.get("delay_ci")
                ys.append(np.nan if val is None else val)
                los.append(np.nan if not ci else val - ci[0])
                his.append(np.nan if not ci else ci[1] - val)
            ax.errorbar(xs, ys, yerr=[los, his], label=name, marker="o",
                        capsize=3, linewidth=1.4)
        if confidence:
            ax.set_xscale("log")
            ax.set_xlabel("stopping confidence delta")
            ax.set_ylabel("mean stopping time")
        else:
            ax.set_xlabel(summary["sweep_param"])
            ax.set_ylabel("median samples to threshold")
        ax.legend(fontsize=8)
        ax.set_title(f"delay vs {summary['sweep_param']}")
        _save(fig, "delay_vs_grid.svg")

    er_points = [(pt["spectrum"]["shannon_er"],
                  st.get("final_f1_mean"), name)
                 for pt in grid if "spectrum" in pt
                 for name, st in pt["policies"].items()
                 if st.get("final_f1_mean") is not None]
    if er_points:
        fig, ax = plt.subplots(figsize=(6, 4.5))
        for name in sorted({n for _, _, n in er_points}):
            xs = [er for er, _, n in er_points if n == name]
            ys = [f1 for _, f1, n in er_points if n == name]
            ax.scatter(xs, ys, label=name, s=36)
        ax.set_xlabel("effective rank (Shannon)")
        ax.set_ylabel("mean final F1")
        ax.set_title("spectral diversity vs identification quality")
        ax.legend(fontsize=8)
        _save(fig, "er_vs_f1.svg")

    if not written:
        raise ConfigError("nothing plottable in this summary")
    return written


def _cmd_report(args) -> int:
    run_dir = Path(args.run)
    out_dir = Path(args.out) if args.out else run_dir
    written = _render_reports(run_dir, out_dir)
    for path in written:
        print(f"wrote {path}")
    return 0


# ---------------------------------------------------------------------------
# parser assembly


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="ccdesign",
                     description="correlation-aware measurement design "
                                 "and adaptive top-n stream identification")
    parser.add_argument("--version", action="version",
                        version=f"ccdesign {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-cov", help="generate a correlation matrix")
    _add_pattern_args(p, required=True)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_gen_cov)

    p = sub.add_parser("spectrum", help="effective-rank diagnostics")
    _add_pattern_args(p, required=False)
    p.add_argument("--matrix", help="matrix CSV instead of a pattern")
    p.add_argument("--regularize", type=float,
                   help="add alpha*I before the diagnostics")
    p.add_argument("--out", help="also write spectrum.json here")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_spectrum)

    p = sub.add_parser("design", help="solve one pairwise measurement design")
    _add_pattern_args(p, required=False)
    p.add_argument("--matrix", help="matrix CSV instead of a pattern")
    p.add_argument("--pair", type=int, nargs=2, required=True,
                   metavar=("I", "J"), help="champion and challenger indices")
    p.add_argument("--delta", type=float, default=3.0, help="shift magnitude")
    p.add_argument("--budget", type=float, default=5.0, help="L1 budget")
    p.add_argument("--unconstrained", action="store_true",
                   help="ignore the budget (closed form)")
    p.set_defaults(func=_cmd_design)

    for name, help_text, sweep in (("simulate", "run an experiment", False),
                                   ("sweep", "run a parameter sweep", True)):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--preset", help=f"one of: {', '.join(sorted(PRESETS))}")
        p.add_argument("--config", help="JSON config file (overrides preset)")
        p.add_argument("--k", type=int)
        p.add_argument("--n", type=int)
        p.add_argument("--delta", type=float)
        p.add_argument("--pattern", help="correlation pattern or 'identity'")
        p.add_argument("--rho", type=float)
        p.add_argument("--budget", type=float)
        p.add_argument("--policies", help="comma-separated policy names")
        p.add_argument("--seeds", type=int)
        p.add_argument("--horizon", type=int)
        p.add_argument("--stop", help='stop rule, e.g. "glr:0.1"')
        p.add_argument("--f1-threshold", type=float, dest="f1_threshold")
        p.add_argument("--sustain", type=int)
        p.add_argument("--sweep-param", dest="sweep_param",
                       choices=("rho", "budget", "delta", "n", "confidence"))
        p.add_argument("--sweep-grid", dest="sweep_grid",
                       help="comma-separated grid values")
        p.add_argument("--out", help="output directory")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--jobs", type=int, default=0,
                       help="worker processes (default: all cores)")
        p.add_argument("--svg", action="store_true",
                       help="render SVG charts next to the outputs")
        p.set_defaults(func=lambda a, s=sweep: _cmd_simulate(a, require_sweep=s))

    p = sub.add_parser("ingest", help="preprocess a sensor CSV into a bundle")
    p.add_argument("--csv", required=True)
    p.add_argument("--timestamp-col", dest="timestamp_col", default="timestamp")
    p.add_argument("--date-col", dest="date_col")
    p.add_argument("--time-col", dest="time_col")
    p.add_argument("--label-col", dest="label_col")
    p.add_argument("--window-seconds", dest="window_seconds", type=int, default=60)
    p.add_argument("--training-rows", dest="training_rows", type=int)
    p.add_argument("--ridge", type=float, default=1e-6)
    p.add_argument("--out", required=True, help="bundle directory")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_ingest)

    p = sub.add_parser("replay", help="run policies over an ingested bundle")
    p.add_argument("--bundle", required=True)
    p.add_argument("--budget", type=float, required=True)
    p.add_argument("--n", type=int, default=1)
    p.add_argument("--anomalous", help="comma-separated channel indices")
    p.add_argument("--delta", type=float)
    p.add_argument("--policies", default="EccAht,EccAhtDiagonal")
    p.add_argument("--stop", help='stop rule (default: run the whole recording)')
    p.add_argument("--horizon", type=int)
    p.add_argument("--f1-threshold", dest="f1_threshold", type=float, default=0.95)
    p.add_argument("--out", help="output directory")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_replay)

    p = sub.add_parser("report", help="render SVG charts from a run directory")
    p.add_argument("--run", required=True, help="directory with summary.json")
    p.add_argument("--out", help="chart directory (default: the run directory)")
    p.set_defaults(func=_cmd_report)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except SystemExit:
        raise
    except ConfigError as exc:
        print(f"ccdesign: error: {exc}", file=sys.stderr)
        return 1
    except (NumericError, CcdesignError) as exc:
        print(f"ccdesign: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
