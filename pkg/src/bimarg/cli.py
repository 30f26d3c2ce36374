"""Command-line interface: reproducible fits, simulation, offline diagnosis.

Runs are driven by an INI config with sections per concern (model, sampler,
prior, output, simulate); every key can be overridden on the command line
with ``--set SECTION.KEY=VALUE``.  Exit codes: 0 success, 2 input/validation
error, 3 sampler/runtime error.
"""

from __future__ import annotations

import argparse
import configparser
import sys
from pathlib import Path

import numpy as np

from . import io
from .diagnostics import reorder, summarize
from .exceptions import (
    NonConvergenceError,
    NonpositiveProbabilityError,
    SingularJacobianError,
    StageExhaustedError,
)
from .jacobian import jacobian_matrix, select_xi
from .model import PriorSpec, initial_probparams, context_for
from .parameterization import build_marginal_scheme, invert_lambda, lambda_from_P
from .samplers import ChainConfig, merge_traces, run_chains
from .model import simulate_table, ContingencyTable

__all__ = ["main"]

DEFAULTS = {
    "model": {"graph": "", "counts": "", "latent_levels": "3"},
    "sampler": {
        "algorithm": "paa",
        "iterations": "11000",
        "burn_in": "1000",
        "seed": "0",
        "chains": "1",
        "threads": "1",
        "rw_scale": "0.1",
        "paa_stage1_iterations": "",
        "paa_reorder": "permute",
    },
    "prior": {"kind": "dellaportas_forster", "sigma2": "10.0", "alpha": "1.0"},
    "output": {"directory": "out", "dump_scheme": "false", "dump_jacobian": "false"},
    "simulate": {"truth_lambda": "", "truth_probs": "", "n_total": "500",
                 "replicates": "1", "prefix": "sim"},
}

RUNTIME_ERRORS = (
    NonConvergenceError,
    NonpositiveProbabilityError,
    SingularJacobianError,
    StageExhaustedError,
)


class ConfigError(ValueError):
    pass


def _load_config(path, overrides):
    parser = configparser.ConfigParser()
    parser.read_dict(DEFAULTS)
    if path:
        if not Path(path).exists():
            raise ConfigError(f"config file not found: {path}")
        parser.read(path)
    for item in overrides or []:
        key, _, value = item.partition("=")
        section, _, option = key.partition(".")
        if not value or not option:
            raise ConfigError(f"override must look like section.key=value, got {item!r}")
        if section not in parser:
            raise ConfigError(f"unknown config section {section!r}")
        parser[section][option] = value
    for section in parser.sections():
        if section not in DEFAULTS:
            raise ConfigError(f"unknown config section {section!r}")
        for key in parser[section]:
            if key not in DEFAULTS[section]:
                raise ConfigError(f"unknown config key {section}.{key}")
    return parser


def _chain_config(parser) -> ChainConfig:
    s, p = parser["sampler"], parser["prior"]
    try:
        prior = PriorSpec(
            kind=p.get("kind"),
            sigma2=p.getfloat("sigma2"),
            pseudo_prior_alpha=p.getfloat("alpha"),
        )
        stage1 = s.get("paa_stage1_iterations").strip()
        return ChainConfig(
            algorithm=s.get("algorithm"),
            iterations=s.getint("iterations"),
            burn_in=s.getint("burn_in"),
            seed=s.getint("seed"),
            prior=prior,
            latent_levels=parser["model"].getint("latent_levels"),
            rw_scales=tuple(float(v) for v in s.get("rw_scale").split())
            if " " in s.get("rw_scale").strip()
            else s.getfloat("rw_scale"),
            paa_stage1_iterations=int(stage1) if stage1 else None,
            paa_reorder=s.get("paa_reorder"),
        )
    except ValueError as exc:
        raise ConfigError(str(exc))


def _read_model(parser):
    graph_path = parser["model"].get("graph")
    if not graph_path:
        raise ConfigError("model.graph is required")
    if not Path(graph_path).exists():
        raise ConfigError(f"model.graph file not found: {graph_path}")
    graph = io.read_graph(graph_path)
    return graph


def _read_table(parser, graph):
    counts_path = parser["model"].get("counts")
    if not counts_path:
        raise ConfigError("model.counts is required")
    if not Path(counts_path).exists():
        raise ConfigError(f"model.counts file not found: {counts_path}")
    return io.read_counts(counts_path, graph)


def _echo_config(parser) -> dict:
    out = {}
    for section in parser.sections():
        for key, value in parser[section].items():
            out[f"config.{section}.{key}"] = value
    return out


def _dump_scheme(scheme, outdir: Path):
    labels = [str(l) for l in scheme.labels]
    io.write_matrix(outdir / "scheme_M.csv", scheme.M)
    io.write_matrix(outdir / "scheme_C.csv", scheme.C, row_labels=labels)
    io.write_matrix(outdir / "scheme_K.csv", scheme.K,
                    row_labels=[str(scheme.labels[i]) for i in scheme.zero_rows])
    lines = ["marginals = " + "; ".join("".join(m) for m in scheme.marginals)]
    for i, lab in enumerate(scheme.labels):
        kind = "zero" if i in set(scheme.zero_rows.tolist()) else (
            "intercept" if i == scheme.intercept_row else "free")
        lines.append(f"{lab} [{kind}]")
    (outdir / "scheme_allocation.txt").write_text("\n".join(lines) + "\n")


def cmd_fit(args) -> int:
    parser = _load_config(args.config, args.set)
    graph = _read_model(parser)
    table = _read_table(parser, graph)
    cfg = _chain_config(parser)
    chains = parser["sampler"].getint("chains")
    threads = parser["sampler"].getint("threads")
    if chains < 1:
        raise ConfigError("sampler.chains must be >= 1")
    outdir = Path(parser["output"].get("directory"))
    outdir.mkdir(parents=True, exist_ok=True)

    traces = run_chains(cfg, table, graph, chains=chains, threads=threads)
    for i, trace in enumerate(traces):
        io.write_trace(outdir / f"trace_chain{i:02d}.csv", trace)
    merged = merge_traces(traces)
    rows = summarize(merged)
    io.write_summary(outdir / "summary.csv", rows)

    meta = _echo_config(parser)
    meta.update(merged.meta)
    meta["wall_seconds"] = f"{merged.wall_seconds:.17g}"
    meta["iterations_per_sec"] = f"{merged.iterations_per_sec:.1f}"
    io.write_metadata(outdir / "metadata.txt", meta)

    scheme = build_marginal_scheme(graph)
    if parser["output"].getboolean("dump_scheme"):
        _dump_scheme(scheme, outdir)
    if parser["output"].getboolean("dump_jacobian"):
        rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(cfg.seed)))
        dag = graph.augmented_dag(cfg.latent_levels)
        pp = initial_probparams(table.counts, dag, cfg.prior.pseudo_prior_alpha, rng)
        xi = select_xi(pp, scheme, ctx=context_for(dag))
        report = jacobian_matrix(pp, scheme, dag, xi=xi)
        io.write_matrix(outdir / "jacobian_delta.csv", report.delta)
        io.write_matrix(outdir / "jacobian_matrix.csv", report.jac)
    return 0


def cmd_simulate(args) -> int:
    parser = _load_config(args.config, args.set)
    graph = _read_model(parser)
    sim = parser["simulate"]
    scheme = build_marginal_scheme(graph)
    truth_lambda = sim.get("truth_lambda").split()
    truth_probs = sim.get("truth_probs").split()
    if truth_lambda and truth_probs:
        raise ConfigError("give simulate.truth_lambda or simulate.truth_probs, not both")
    if truth_lambda:
        lam = np.asarray([float(v) for v in truth_lambda])
        if lam.shape != (scheme.n_param,):
            raise ConfigError(
                f"simulate.truth_lambda needs {scheme.n_param} values "
                "(free interactions excluding the intercept, scheme order)"
            )
        p = invert_lambda(scheme, lam)
    elif truth_probs:
        p = np.asarray([float(v) for v in truth_probs])
        if p.shape != (scheme.n_cells,) or np.any(p < 0):
            raise ConfigError(f"simulate.truth_probs needs {scheme.n_cells} nonnegative values")
        p = p / p.sum()
    else:
        raise ConfigError("simulate.truth_lambda (or truth_probs) is required")
    n_total = sim.getint("n_total")
    replicates = sim.getint("replicates")
    if n_total < 1 or replicates < 1:
        raise ConfigError("simulate.n_total and simulate.replicates must be >= 1")
    outdir = Path(parser["output"].get("directory"))
    outdir.mkdir(parents=True, exist_ok=True)
    seed = parser["sampler"].getint("seed")
    prefix = sim.get("prefix")
    for r in range(replicates):
        rng = np.random.Generator(
            np.random.Philox(np.random.SeedSequence(entropy=seed, spawn_key=(r,)))
        )
        counts = simulate_table(p, n_total, rng)
        io.write_counts(outdir / f"{prefix}{r:03d}.csv", ContingencyTable(graph.vertices, counts))
    meta = _echo_config(parser)
    meta["generator_probs"] = " ".join(f"{v:.17g}" for v in p)
    if truth_lambda:
        meta["implied_intercept"] = f"{lambda_from_P(scheme, p).free[0]:.10g}"
    io.write_metadata(outdir / "simulate_metadata.txt", meta)
    return 0


def cmd_diagnose(args) -> int:
    trace = io.read_trace(args.trace)
    wall = float("nan")
    meta_path = Path(args.metadata) if args.metadata else Path(args.trace).parent / "metadata.txt"
    if meta_path.exists():
        meta = io.read_metadata(meta_path)
        if "wall_seconds" in meta:
            wall = float(meta["wall_seconds"])
    if args.thin > 1:
        trace = reorder(trace, "thin", k=args.thin)
    rows = summarize(trace, wall_seconds=wall)
    out = Path(args.out) if args.out else Path(args.trace).with_name("summary.csv")
    io.write_summary(out, rows)
    return 0


def cmd_dump_scheme(args) -> int:
    graph = io.read_graph(args.graph)
    scheme = build_marginal_scheme(graph)
    outdir = Path(args.out_dir)
    outdir.mkdir(parents=True, exist_ok=True)
    _dump_scheme(scheme, outdir)
    return 0


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bimarg",
        description="Bayesian marginal log-linear models on bi-directed graphs",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    fit = sub.add_parser("fit", help="run MCMC and write trace/summary/metadata")
    fit.add_argument("config", help="INI config file")
    fit.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE",
                     help="override a config key", default=[])
    fit.set_defaults(func=cmd_fit)

    sim = sub.add_parser("simulate", help="generate count tables from a truth vector")
    sim.add_argument("config")
    sim.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE", default=[])
    sim.set_defaults(func=cmd_simulate)

    diag = sub.add_parser("diagnose", help="recompute a summary from a stored trace")
    diag.add_argument("trace", help="trace CSV written by fit")
    diag.add_argument("--metadata", help="metadata file for timing (default: sibling)")
    diag.add_argument("--thin", type=int, default=1, help="keep every K-th row")
    diag.add_argument("--out", help="summary output path")
    diag.set_defaults(func=cmd_diagnose)

    dump = sub.add_parser("dump-scheme", help="write the M/C/K matrices of a graph")
    dump.add_argument("graph", help="graph declaration file")
    dump.add_argument("--out-dir", default="scheme", help="output directory")
    dump.set_defaults(func=cmd_dump_scheme)
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return args.func(args)
    except RUNTIME_ERRORS as exc:
        print(f"sampler error: {exc}", file=sys.stderr)
        return 3
    except (ConfigError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
