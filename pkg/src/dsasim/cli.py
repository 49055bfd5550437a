"""Command-line entry point: ``python -m dsasim <command> ...``.

Exit codes: 0 success, 1 failed property or internal error, 2 configuration
error, 3 divergence (non-finite iterate).
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import time
from pathlib import Path

from . import __version__
from .analysis import decay_window, fit_linear_rate
from .config import ExperimentConfig, load_config
from .errors import ConfigError, DSAError, NonFinite, ParamOutOfRange
from .experiments import build_problem, build_weights, run_all, topology_sweep, write_sweep_csv
from .solvers import RunRecord
from .theory import theory_report
from .topology import graph_condition_number, write_edge_list
from .validation import format_table, run_suites

OUTPUT_ENV = "DSA_OUTPUT_DIR"
MANIFEST = "manifest.json"


def _output_dir(cfg):
    return Path(os.environ.get(OUTPUT_ENV) or cfg.output_dir)


def _sha256(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def load_any(path):
    """Config file or a manifest written by a previous ``run``."""
    if str(path).endswith(".json"):
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, ValueError) as exc:
            raise ConfigError(f"cannot read manifest {path}: {exc}") from None
        if "config" not in data:
            raise ConfigError(f"{path} has no 'config' entry")
        return ExperimentConfig.from_dict(data["config"])
    return load_config(path)


def cmd_run(args):
    cfg = load_any(args.config)
    if not cfg.algos:
        raise ConfigError("config lists no algorithms (algo.N.name / algo.N.alpha)")
    out = _output_dir(cfg)
    res = run_all(cfg, out)
    if res["dataset"] is not None:
        res["dataset"].to_csv(out / "dataset.csv")
    write_edge_list(res["graph"], out / "edges.txt")
    manifest = {
        "version": __version__,
        "config": cfg.to_dict(),
        "seeds": {"data": cfg.problem.seed, "graph": cfg.graph.seed, "index_stream": cfg.seed},
        "runs": [
            {"algorithm": r.algo.name, "alpha": r.algo.alpha, "path": r.path.name,
             "sha256": _sha256(r.path), "wall_seconds": r.seconds}
            for r in res["runs"]
        ],
    }
    (out / MANIFEST).write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")
    for r in res["runs"]:
        hit = r.record.first_below(1e-7)
        print(f"{r.algo.label}: final e={r.record.error[-1]:.3e}, e<=1e-7 at t={hit}, {r.seconds:.2f}s")
    print(f"wrote {len(res['runs'])} traces to {out}")
    return 0


def cmd_topology_sweep(args):
    cfg = load_config(args.config)
    out = _output_dir(cfg)
    rows = topology_sweep(cfg)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "topology_sweep.csv"
    write_sweep_csv(rows, path)
    for r in rows:
        hit = r["iterations_to_threshold"]
        print(f"seed {r['seed']} {r['topology']:<12s} {'not reached' if hit is None else hit}")
    print(f"wrote {path}")
    return 0


def cmd_validate(args):
    start = time.perf_counter()
    results = run_suites(args.level, corrupt_wtilde=args.corrupt_wtilde)
    print(format_table(results))
    failed = [r.name for r in results if not r.passed]
    print(f"{args.level} validation finished in {time.perf_counter() - start:.1f}s")
    if failed:
        print("FAILED: " + ", ".join(failed), file=sys.stderr)
        return 1
    return 0


def trace_rate(path, lower=1e-12):
    """Fitted per-iteration rate of ``error_e_t`` in a run CSV."""
    errors = RunRecord.read_csv(path)["error_e_t"]
    window = decay_window(errors, upper=errors[0], lower=lower)
    return fit_linear_rate(errors, window)


def cmd_theory_report(args):
    cfg = load_config(args.config)
    _, problem = build_problem(cfg.problem, cfg.graph.n_nodes)
    _, _, summary = build_weights(cfg.graph)
    rate = trace_rate(args.trace)[0] if args.trace else None
    report = theory_report(problem, summary, graph_condition_number(summary), rate)
    if args.json:
        print(json.dumps(report, indent=2))
    else:
        width = max(len(k) for k in report)
        for k, v in report.items():
            print(f"{k:<{width}s}  {v!r}" if not isinstance(v, float) else f"{k:<{width}s}  {v:.10g}")
    return 0


def build_parser():
    p = argparse.ArgumentParser(prog="dsasim", description="Decentralized stochastic averaging gradient simulator")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run the configured algorithms and write CSV traces")
    r.add_argument("config", help="config file or manifest.json of an earlier run")
    r.set_defaults(func=cmd_run)

    s = sub.add_parser("topology-sweep", help="iterations to threshold on each topology")
    s.add_argument("config")
    s.set_defaults(func=cmd_topology_sweep)

    v = sub.add_parser("validate", help="run the property suites")
    v.add_argument("--level", choices=("quick", "full"), default="quick")
    v.add_argument("--corrupt-wtilde", action="store_true", help="debug: inject an invalid W_tilde")
    v.set_defaults(func=cmd_validate)

    t = sub.add_parser("theory-report", help="convergence constants for a config")
    t.add_argument("config")
    t.add_argument("--trace", help="run CSV whose fitted rate is printed next to 1 - delta")
    t.add_argument("--json", action="store_true")
    t.set_defaults(func=cmd_theory_report)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except NonFinite as exc:
        print(f"diverged: {exc}", file=sys.stderr)
        return 3
    except ParamOutOfRange as exc:
        print(f"parameter out of range: {exc}", file=sys.stderr)
        return 1
    except DSAError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
