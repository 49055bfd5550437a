"""Build problems and weights from a config and execute runs and sweeps."""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass
from pathlib import Path

from .analysis import solve_reference, standard_hooks
from .config import parse_topology
from .problem import generate_logistic, generate_quadratic
from .solvers import TABLE_BASED, StepSchedule, run
from .theory import default_constants
from .topology import build_weight_pair, generate_graph

NOT_REACHED = "not_reached"


def build_problem(pc, n_nodes, seed=None):
    """Problem instance for ``pc``; ``seed`` overrides ``pc.seed``. Returns ``(dataset, problem)``."""
    seed = pc.seed if seed is None else seed
    if pc.family == "quadratic":
        q = pc.total_samples // n_nodes
        return None, generate_quadratic(n_nodes, q, pc.dim, seed=seed, scale=pc.scale)
    return generate_logistic(
        n_nodes, pc.total_samples, pc.dim, pc.lam,
        mean=pc.mean, std_plus=pc.std_plus, std_minus=pc.std_minus, seed=seed,
    )


def build_weights(gc, kind=None, p_c=None, seed=None):
    kind = gc.kind if kind is None else kind
    p_c = gc.p_c if p_c is None else p_c
    g = generate_graph(kind, gc.n_nodes, seed=gc.seed if seed is None else seed,
                       p_c=p_c if kind == "random" else None)
    wp, summary = build_weight_pair(g, gc.tau_factor)
    return g, wp, summary


def schedule_of(algo):
    return StepSchedule(algo.alpha, algo.schedule, algo.decay)


@dataclass
class RunOutput:
    algo: object
    record: object
    path: Path
    seconds: float


def run_all(cfg, out_dir):
    """Run every configured algorithm sequentially and write one CSV each."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    ds, problem = build_problem(cfg.problem, cfg.graph.n_nodes)
    graph, wp, summary = build_weights(cfg.graph)
    ref = solve_reference(problem)
    results = []
    for algo in cfg.algos:
        sched = schedule_of(algo)
        lyap_c = None
        if cfg.metrics.lyapunov and algo.name in TABLE_BASED and algo.name != "dec_saga":
            lyap_c = cfg.metrics.lyapunov_c
            if lyap_c is None:
                lyap_c = default_constants(problem.mu, problem.lip, summary.gamma, problem.q)[2]
        run_ref = ref.with_dual(wp, algo.alpha) if lyap_c is not None else ref
        hooks = standard_hooks(problem, run_ref, wp, p_t=cfg.metrics.p_t, lyapunov_c=lyap_c)
        start = time.perf_counter()
        rec = run(algo.name, problem, wp, sched, cfg.iterations, seed=cfg.seed, hooks=hooks,
                  track_dual=lyap_c is not None)
        seconds = time.perf_counter() - start
        path = out_dir / f"{algo.label}.csv"
        rec.to_csv(path)
        results.append(RunOutput(algo, rec, path, seconds))
    return {"dataset": ds, "problem": problem, "graph": graph, "weights": wp, "summary": summary,
            "reference": ref, "runs": results}


def topology_sweep(cfg, cap=None):
    """Iterations-to-threshold for each (topology, seed); ``None`` when not reached."""
    cap = cfg.iterations if cap is None else cap
    sw = cfg.sweep
    rows = []
    for seed in sw.seeds:
        _, problem = build_problem(cfg.problem, cfg.graph.n_nodes, seed=seed)
        ref = solve_reference(problem)
        for topo in sw.topologies:
            kind, p_c = parse_topology(topo)
            _, wp, _ = build_weights(cfg.graph, kind=kind, p_c=p_c, seed=seed)
            rec = run(sw.algorithm, problem, wp, StepSchedule(sw.alpha), cap, seed=seed,
                      hooks=standard_hooks(problem, ref))
            rows.append({"topology": topo, "seed": seed, "iterations_to_threshold": rec.first_below(sw.threshold),
                         "final_error": float(rec.error[-1])})
    return rows


def write_sweep_csv(rows, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["topology", "seed", "iterations_to_threshold", "final_error"])
        for r in rows:
            hit = r["iterations_to_threshold"]
            w.writerow([r["topology"], r["seed"], NOT_REACHED if hit is None else hit, repr(r["final_error"])])
