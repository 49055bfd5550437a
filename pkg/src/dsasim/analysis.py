"""Reference solutions and per-iterate diagnostics.

The error ``e^t``, the Bregman sequence ``p^t`` of the gradient table, the
Lyapunov function of the primal-dual form and a log-linear rate fit.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import DimensionMismatch, EmptyWindow, MissingDual, NoConvergence, NonPositiveError, ZeroStrongConvexity
from .problem import QuadraticProblem


@dataclass(frozen=True)
class ReferenceSolution:
    x_star_single: np.ndarray
    x_star_stacked: np.ndarray
    f_star: float
    grad_at_star: np.ndarray  # stacked local gradients at the optimum, (N, p)
    v_star: np.ndarray = None
    alpha: float = None

    def with_dual(self, wp, alpha):
        """Attach ``v* = -alpha U^+ grad f(x*)``, the minimum-norm dual optimum."""
        v_star = -alpha * (wp.u_pinv @ self.grad_at_star)
        return replace(self, v_star=v_star, alpha=alpha)


def _newton(problem, x, tol, max_iter):
    f = problem.global_value(x)
    for _ in range(max_iter):
        g = problem.global_gradient(x)
        gnorm = np.linalg.norm(g)
        if gnorm <= tol:
            break
        d = -np.linalg.solve(problem.global_hessian(x), g)
        # near the optimum f differences drown in roundoff, so the full step
        # is also accepted when it shrinks the gradient
        x_new = x + d
        f_new = problem.global_value(x_new)
        if f_new > f + 1e-4 * g @ d and np.linalg.norm(problem.global_gradient(x_new)) >= gnorm:
            s = 0.5
            while s > 1e-10:
                x_new = x + s * d
                f_new = problem.global_value(x_new)
                if f_new <= f + 1e-4 * s * g @ d:
                    break
                s *= 0.5
            else:
                break
        x, f = x_new, f_new
    return x


def _gradient_descent(problem, x, tol, max_iter):
    step = 1.0 / (problem.n_nodes * problem.lip)
    f = problem.global_value(x)
    for _ in range(max_iter):
        g = problem.global_gradient(x)
        gg = g @ g
        if np.sqrt(gg) <= tol:
            return x
        s = 2 * step
        while True:
            x_new = x - s * g
            f_new = problem.global_value(x_new)
            if f_new <= f - 0.5 * s * gg or s < 1e-20:
                break
            s *= 0.5
        x, f = x_new, f_new
    return x


def solve_reference(problem, tol=1e-12, max_iter=10**6, x0=None):
    """Centralized minimizer of ``sum_n f_n``.

    Closed form for the quadratic family, Newton with backtracking when a
    Hessian is available, gradient descent with backtracking otherwise.
    """
    if problem.mu <= 0:
        raise ZeroStrongConvexity("reference solution needs a strongly convex objective")
    if isinstance(problem, QuadraticProblem):
        x = problem.optimum()
    else:
        x = np.zeros(problem.dim) if x0 is None else np.asarray(x0, dtype=float)
        if problem.global_hessian(x) is not None:
            x = _newton(problem, x, tol, min(max_iter, 200))
        else:
            x = _gradient_descent(problem, x, tol, max_iter)
    gnorm = float(np.linalg.norm(problem.global_gradient(x)))
    if gnorm > tol:
        raise NoConvergence(f"reference gradient norm {gnorm:.3e} > tol {tol:.1e}")
    stacked = np.tile(x, (problem.n_nodes, 1))
    return ReferenceSolution(
        x_star_single=x,
        x_star_stacked=stacked,
        f_star=problem.global_value(x),
        grad_at_star=problem.local_grads(stacked),
    )


def error_metric(x, ref):
    """``e^t = sum_n ||x_n - x*||^2``."""
    x = np.asarray(x)
    if x.shape != ref.x_star_stacked.shape:
        raise DimensionMismatch(f"iterate shape {x.shape} != {ref.x_star_stacked.shape}")
    d = x - ref.x_star_single
    return float(np.einsum("np,np->", d, d))


def bregman_gap(problem, x, ref):
    """``f(x) - f(x*) - grad f(x*)^T (x - x*)`` for a stacked iterate."""
    d = np.asarray(x) - ref.x_star_stacked
    vals = problem.local_values(x) - problem.local_values(ref.x_star_stacked)
    return float(vals.sum() - np.einsum("np,np->", ref.grad_at_star, d))


def p_sequence(problem, table, ref):
    """Mean Bregman divergence of the table's stored points from the optimum, summed over nodes."""
    y = table.points
    xs = ref.x_star_single
    star = np.broadcast_to(xs, y.shape)
    f_y = problem.values_at(y)
    f_s = problem.values_at(star)
    g_s = problem.grads_at(star)
    terms = f_y - f_s - np.einsum("nqp,nqp->nq", g_s, y - star)
    return float((terms.sum(axis=1) / table.q).sum())


def z_tilde_norm_sq(wp, d):
    """``d^T (W_tilde kron I) d`` for a stacked ``(N, p)`` vector."""
    return float(np.einsum("np,np->", d, wp.w_tilde @ d))


def lyapunov(problem, x, v, table, ref, wp, c):
    """``||x - x*||^2_{Z_tilde} + ||v - v*||^2 + c p``."""
    if v is None:
        raise MissingDual("Lyapunov value needs the dual variable")
    if ref.v_star is None:
        raise MissingDual("reference solution has no dual optimum; call with_dual first")
    dx = np.asarray(x) - ref.x_star_stacked
    dv = np.asarray(v) - ref.v_star
    return z_tilde_norm_sq(wp, dx) + float(np.einsum("np,np->", dv, dv)) + c * p_sequence(problem, table, ref)


def standard_hooks(problem, ref, wp=None, p_t=False, lyapunov_c=None):
    """Metric hooks for :func:`dsasim.solvers.run` (error always, ``p^t`` / Lyapunov optional)."""
    hooks = {"error_e_t": lambda s: error_metric(s.x, ref)}
    if p_t:
        hooks["p_t"] = lambda s: p_sequence(problem, s.table, ref) if s.table is not None else float("nan")
    if lyapunov_c is not None:
        hooks["lyapunov"] = lambda s: lyapunov(problem, s.x, s.v, s.table, ref, wp, lyapunov_c)
    return hooks


def decay_window(errors, upper, lower):
    """Index range from the first ``e <= upper`` to the first ``e <= lower``."""
    e = np.asarray(errors)
    start = np.flatnonzero(e <= upper)
    stop = np.flatnonzero(e <= lower)
    if not start.size:
        raise EmptyWindow(f"sequence never drops below {upper}")
    stop_at = int(stop[0]) + 1 if stop.size else len(e)
    return int(start[0]), stop_at


def fit_linear_rate(errors, window=None):
    """Least-squares slope of ``log e^t`` against ``t``; returns ``(exp(slope), R^2)``.

    ``errors`` is an array or a RunRecord; ``window`` a ``(start, stop)``
    index pair.
    """
    e = np.asarray(errors.error if hasattr(errors, "metrics") else errors, dtype=float)
    t = np.arange(len(e))
    if window is not None:
        start, stop = window
        e, t = e[start:stop], t[start:stop]
    if len(e) < 2:
        raise EmptyWindow("need at least two points to fit a rate")
    if (e <= 0).any():
        raise NonPositiveError("errors must be positive to take logs")
    y = np.log(e)
    slope, intercept = np.polyfit(t, y, 1)
    resid = y - (slope * t + intercept)
    ss_tot = float(((y - y.mean()) ** 2).sum())
    # a flat sequence is fitted exactly; roundoff in log() must not turn that into R^2 = 0
    flat = ss_tot <= 1e-24 * max(1.0, float((y**2).sum()))
    r2 = 1.0 if flat else 1.0 - float((resid**2).sum()) / ss_tot
    return float(np.exp(slope)), r2
