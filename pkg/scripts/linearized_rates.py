"""Spectral radius of the EXTRA iteration linearized at the optimum, per topology.

DSA's error settles to the same asymptotic rate as this deterministic
recursion, so the table shows which topologies are network-limited and
which are limited by the curvature of the objective. Eigenvalue-1 modes
(the conserved average of x^t - x^{t-1}) are excluded.

    python scripts/linearized_rates.py --seed 0 --alphas 0.005 0.04
"""

import argparse

import numpy as np
from scipy.special import expit

from dsasim.analysis import solve_reference
from dsasim.config import DEFAULT_TOPOLOGIES, parse_topology
from dsasim.problem import generate_logistic
from dsasim.topology import build_weight_pair, generate_graph


def block_hessian(problem, x):
    n, p = problem.n_nodes, problem.dim
    h = np.zeros((n * p, n * p))
    for k in range(n):
        s = problem.features[k]
        z = problem.labels[k] * (s @ x)
        w = expit(z) * expit(-z)
        h[k * p:(k + 1) * p, k * p:(k + 1) * p] = problem.reg * np.eye(p) + (s * w[:, None]).T @ s
    return h


def spectral_radius(wp, hess, alpha, p):
    eye = np.eye(hess.shape[0])
    z = np.kron(wp.w, np.eye(p))
    zt = np.kron(wp.w_tilde, np.eye(p))
    a = np.block([[eye + z - alpha * hess, -(zt - alpha * hess)], [eye, np.zeros_like(eye)]])
    ev = np.linalg.eigvals(a)
    return float(np.abs(ev[np.abs(ev - 1) > 1e-7]).max())


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--nodes", type=int, default=100)
    ap.add_argument("--samples", type=int, default=500)
    ap.add_argument("--lam", type=float, default=1e-4)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--alphas", type=float, nargs="+", default=[5e-3, 2e-2, 4e-2, 5e-2])
    args = ap.parse_args()

    _, problem = generate_logistic(args.nodes, args.samples, 2, args.lam, seed=args.seed)
    hess = block_hessian(problem, solve_reference(problem).x_star_single)
    print("topology     " + "  ".join(f"alpha={a:<8g}" for a in args.alphas))
    for topo in DEFAULT_TOPOLOGIES:
        kind, p_c = parse_topology(topo)
        wp, _ = build_weight_pair(generate_graph(kind, args.nodes, seed=args.seed, p_c=p_c))
        rhos = [spectral_radius(wp, hess, a, problem.dim) for a in args.alphas]
        print(f"{topo:<12s} " + "  ".join(f"{r:<14.6f}" for r in rhos))


if __name__ == "__main__":
    main()
