"""Property suites shared by the ``validate`` command and the test-suite.

Each suite returns a SuiteResult whose ``worst`` is the smallest slack seen
(negative means violated) so results can be printed as one table.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .analysis import solve_reference
from .problem import generate_logistic, generate_quadratic
from .solvers import StepSchedule, run
from .theory import check_lemma_bounds, compute_delta, enumerate_conditional_expectation, random_reachable_states
from .topology import GRAPH_KINDS, WeightPair, build_weight_pair, generate_graph, validate_assumption1

LEVELS = {
    "quick": {"sizes": (5, 20), "unbiased_states": 20, "saddle_steps": 200, "lemma_states": 10, "fd_points": 5},
    "full": {"sizes": (5, 20, 100), "unbiased_states": 100, "saddle_steps": 200, "lemma_states": 50, "fd_points": 10},
}


@dataclass
class SuiteResult:
    name: str
    worst: float
    tolerance: float
    passed: bool
    detail: list = field(default_factory=list)


def _corrupt(wp):
    # shifting W_tilde down by 0.3 I breaks both the ordering and the null space
    bad = wp.w_tilde - 0.3 * np.eye(wp.n_nodes)
    return WeightPair(wp.w, bad, wp.u, wp.u_pinv, None)


def assumption1_suite(sizes=(5, 20, 100), tol=1e-9, corrupt_wtilde=False, seed=0):
    """Validator on every graph kind and size; ``worst`` is minus the number of failing pairs."""
    detail = []
    for n in sizes:
        for kind in GRAPH_KINDS:
            g = generate_graph(kind, n, seed=seed, p_c=0.3 if kind == "random" else None)
            wp, _ = build_weight_pair(g)
            if corrupt_wtilde:
                wp = _corrupt(wp)
            report = validate_assumption1(wp, tol)
            if not report.passed:
                names = ", ".join(c.name for c in report.failures)
                detail.append(f"{kind} N={n}: {names}")
    return SuiteResult("assumption1", -float(len(detail)) if detail else 0.0, tol, not detail, detail)


def tiny_logistic(n_nodes=3, q=2, dim=2, seed=0):
    return generate_logistic(n_nodes, n_nodes * q, dim, lam=1e-2, seed=seed)[1]


def unbiasedness_suite(n_states=100, tol=1e-12, seed=0):
    """Enumerated mean of the averaging gradient against the local gradient."""
    problem = tiny_logistic(seed=seed)
    wp, _ = build_weight_pair(generate_graph("line", problem.n_nodes))
    worst_err = 0.0
    for state in random_reachable_states(problem, wp, 0.02, n_states, seed=seed):
        table = state.table

        def ghat(idx):
            return table.averaging_gradient(problem, idx, state.x, update=False)

        mean = enumerate_conditional_expectation(problem.q_counts, ghat)
        exact = problem.local_grads(state.x)
        worst_err = max(worst_err, float(np.abs(mean - exact).max()))
    return SuiteResult("unbiasedness", tol - worst_err, tol, worst_err <= tol,
                       [f"max |E[ghat] - grad f_n| = {worst_err:.3e}"])


def saddle_equivalence_suite(iterations=200, tol=1e-9, seed=0, alpha=0.02):
    """Recursion and primal-dual forms of DSA driven by the same index stream."""
    _, problem = generate_logistic(5, 50, 2, lam=1e-2, seed=seed)
    wp, _ = build_weight_pair(generate_graph("random", 5, seed=seed, p_c=0.5))
    a = run("dsa", problem, wp, StepSchedule(alpha), iterations, seed=seed, keep_trajectory=True)
    b = run("dsa_saddle", problem, wp, StepSchedule(alpha), iterations, seed=seed, keep_trajectory=True)
    dev = max(float(np.linalg.norm(x - y)) for x, y in zip(a.trajectory, b.trajectory))
    return SuiteResult("saddle_equivalence", tol - dev, tol, dev <= tol,
                       [f"max_t ||x_rec - x_saddle|| = {dev:.3e}"])


def lemma_suite(n_states=50, tol=1e-9, seed=0):
    """Per-step bounds on N=2, q=2 quadratics at default parameters."""
    problem = generate_quadratic(2, 2, 2, seed=seed)
    wp, spectral = build_weight_pair(generate_graph("line", 2))
    theory = compute_delta(problem.mu, problem.lip, spectral, problem.q, problem.q)
    ref = solve_reference(problem).with_dual(wp, theory.alpha)
    worst = {}
    for state in random_reachable_states(problem, wp, theory.alpha, n_states, seed=seed):
        for chk in check_lemma_bounds(state, problem, wp, ref, theory):
            worst[chk.name] = min(worst.get(chk.name, np.inf), chk.slack)
    delta_ok = 0 < theory.delta <= 0.5
    detail = [f"{name}: min slack {s:.3e}" for name, s in worst.items()]
    detail.append(f"delta = {theory.delta:.6g}")
    w = min(worst.values())
    return SuiteResult("lemma_bounds", float(w), tol, w >= -tol and delta_ok, detail)


def _fd_check(problem, n_points, rng, rel_tol):
    worst = 0.0
    for n in range(problem.n_nodes):
        for i in range(problem.q):
            for _ in range(n_points):
                x = rng.normal(0.0, 1.0, problem.dim)
                g = problem.grad(n, i, x)
                fd = np.empty(problem.dim)
                for k in range(problem.dim):
                    h = 1e-5 * max(1.0, abs(x[k]))
                    e = np.zeros(problem.dim)
                    e[k] = h
                    fd[k] = (problem.value(n, i, x + e) - problem.value(n, i, x - e)) / (2 * h)
                scale = max(float(np.linalg.norm(g)), 1.0)
                worst = max(worst, float(np.linalg.norm(fd - g)) / scale)
    return worst


def finite_difference_suite(n_points=10, rel_tol=1e-6, seed=0):
    rng = np.random.default_rng(seed)
    families = {
        "quadratic": generate_quadratic(3, 4, 3, seed=seed),
        "logistic": generate_logistic(3, 12, 3, lam=1e-2, seed=seed)[1],
    }
    errs = {name: _fd_check(p, n_points, rng, rel_tol) for name, p in families.items()}
    worst = max(errs.values())
    return SuiteResult("finite_differences", rel_tol - worst, rel_tol, worst <= rel_tol,
                       [f"{k}: max relative error {v:.3e}" for k, v in errs.items()])


def run_suites(level="quick", corrupt_wtilde=False):
    cfg = LEVELS[level]
    return [
        assumption1_suite(cfg["sizes"], corrupt_wtilde=corrupt_wtilde),
        unbiasedness_suite(cfg["unbiased_states"]),
        saddle_equivalence_suite(cfg["saddle_steps"]),
        lemma_suite(cfg["lemma_states"]),
        finite_difference_suite(cfg["fd_points"]),
    ]


def format_table(results):
    lines = [f"{'suite':<20s} {'status':<6s} {'worst slack':>12s} {'tolerance':>10s}"]
    for r in results:
        lines.append(f"{r.name:<20s} {'ok' if r.passed else 'FAIL':<6s} {r.worst:>12.3e} {r.tolerance:>10.1e}")
        lines.extend(f"    {d}" for d in r.detail)
    return "\n".join(lines)
