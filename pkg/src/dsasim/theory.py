"""Convergence-theory constants and exact checks of the per-step bounds.

Conditional expectations over one round of index draws are computed by
enumerating every joint assignment ``(i_1, ..., i_N)``, which is exact and
only feasible on tiny instances.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import asdict, dataclass

import numpy as np

from .analysis import bregman_gap, lyapunov, p_sequence, z_tilde_norm_sq
from .errors import ParamOutOfRange, TooLarge
from .solvers import RecordedStream, StepSchedule, dsa_saddle_step, init_state

ENUMERATION_CAP = 4096


@dataclass(frozen=True)
class TheoryParams:
    mu: float
    lip: float
    gamma: float
    gamma_cap: float
    gamma_prime: float
    gamma_cap_prime: float
    lambda_max_penalty: float
    q_min: int
    q_max: int
    eta: float
    alpha: float
    c: float
    delta: float
    delta_terms: tuple

    def as_dict(self):
        return asdict(self)


def eta_lower_bound(mu, lip, q_min, q_max, half_l=False):
    """Lower end of the admissible ``eta`` interval.

    The loose form subtracts ``L``; a sharper derivation subtracts ``L/2``,
    selected by ``half_l``.
    """
    return lip**2 * q_max / (mu * q_min) + lip**2 / mu - (lip / 2 if half_l else lip)


def c_interval(mu, lip, q_min, q_max, eta, alpha):
    lo = 4 * alpha * lip * q_max / eta
    hi = 4 * alpha * mu * q_min / lip - 2 * alpha * q_min * (2 * lip - mu) / eta
    return lo, hi


def default_constants(mu, lip, gamma, q):
    """``eta = 2L^2/mu``, ``alpha = gamma mu / (8 L^2)`` and the matching ``c``."""
    eta = 2 * lip**2 / mu
    alpha = gamma * mu / (8 * lip**2)
    c = q * gamma * mu**2 / (4 * lip**3) * (1 + mu / (4 * lip))
    return eta, alpha, c


def delta_terms(mu, lip, spectral, q_min, q_max, eta, alpha, c):
    """The five candidates whose minimum is the contraction constant."""
    g, G = spectral.gamma, spectral.gamma_cap
    gp, Gp = spectral.gamma_prime, spectral.gamma_cap_prime
    pen = spectral.lambda_max_penalty
    t1 = (g - 2 * alpha * eta) * gp / (8 * G**2)
    t2 = gp / (4 * pen) if pen > 1e-12 else math.inf
    t3 = gp / (2 * Gp)
    t4 = gp * (c * eta - 4 * alpha * lip * q_max) / (eta * q_max * (c * gp + 16 * alpha**2 * lip))
    t5 = (4 * alpha * mu / lip - 2 * alpha * (2 * lip - mu) / eta - c / q_min) / (
        8 * alpha**2 * (2 * lip - mu) / gp + 2 * G / mu
    )
    return (t1, t2, t3, t4, t5)


def compute_delta(mu, lip, spectral, q_min, q_max, eta=None, alpha=None, c=None):
    """Validate ``(eta, alpha, c)`` against their intervals and evaluate ``delta``.

    Any parameter left as ``None`` takes its default value (which needs
    ``q_min == q_max``). Raises ParamOutOfRange naming the violated interval.
    """
    if None in (eta, alpha, c):
        ce, ca, cc = default_constants(mu, lip, spectral.gamma, q_max)
        eta = ce if eta is None else eta
        alpha = ca if alpha is None else alpha
        c = cc if c is None else c
    eta_lo = eta_lower_bound(mu, lip, q_min, q_max)
    if not eta > eta_lo:
        raise ParamOutOfRange("eta", eta, (eta_lo, math.inf))
    a_hi = spectral.gamma / (2 * eta)
    if not 0 < alpha < a_hi:
        raise ParamOutOfRange("alpha", alpha, (0.0, a_hi))
    c_lo, c_hi = c_interval(mu, lip, q_min, q_max, eta, alpha)
    if not c_lo < c < c_hi:
        raise ParamOutOfRange("c", c, (c_lo, c_hi))
    terms = delta_terms(mu, lip, spectral, q_min, q_max, eta, alpha, c)
    return TheoryParams(
        mu=mu, lip=lip,
        gamma=spectral.gamma, gamma_cap=spectral.gamma_cap,
        gamma_prime=spectral.gamma_prime, gamma_cap_prime=spectral.gamma_cap_prime,
        lambda_max_penalty=spectral.lambda_max_penalty,
        q_min=q_min, q_max=q_max, eta=eta, alpha=alpha, c=c,
        delta=min(terms), delta_terms=terms,
    )


def simplified_delta(kappa_f, kappa_g, q, gamma_ratio=1.0):
    """Closed-form ``delta`` for the default constants, ``gamma_ratio = gamma/gamma'``."""
    return min(simplified_regimes(kappa_f, kappa_g, q, gamma_ratio).values())


def simplified_regimes(kappa_f, kappa_g, q, gamma_ratio=1.0):
    return {
        "graph": 1.0 / (16 * kappa_g**2),
        "samples": 1.0 / (q * (1 + 4 * kappa_f * (1 + gamma_ratio))),
        "function": 1.0 / (4 * gamma_ratio * kappa_f + 32 * kappa_g * kappa_f**4),
    }


def enumerate_conditional_expectation(q_counts, quantity, cap=ENUMERATION_CAP):
    """Uniform average of ``quantity(idx)`` over every joint index assignment.

    ``idx`` is an integer array with one entry per node. Raises TooLarge
    when the number of assignments exceeds ``cap``.
    """
    q_counts = [int(q) for q in q_counts]
    total = math.prod(q_counts)
    if total > cap:
        raise TooLarge(f"{total} joint assignments exceed the enumeration cap {cap}")
    acc = None
    for combo in itertools.product(*(range(q) for q in q_counts)):
        val = quantity(np.array(combo, dtype=np.int64))
        acc = val if acc is None else acc + val
    return acc / total


def one_step(state, problem, wp, alpha, idx):
    """Successor of a saddle state under a given index vector; the input is untouched."""
    nxt = state.copy()
    nxt.stream = RecordedStream([idx])
    dsa_saddle_step(nxt, problem, wp, StepSchedule(alpha))
    return nxt


def _sq(a):
    return float(np.einsum("np,np->", a, a))


@dataclass(frozen=True)
class BoundCheck:
    name: str
    lhs: float
    rhs: float

    @property
    def slack(self):
        return self.rhs - self.lhs


def check_lemma_bounds(state, problem, wp, ref, theory):
    """Evaluate both sides of every per-step bound at a saddle state.

    ``ref`` must carry the dual optimum for ``theory.alpha``. Returns a list
    of BoundCheck (slack = rhs - lhs).
    """
    alpha, eta, c, delta = theory.alpha, theory.eta, theory.c, theory.delta
    mu, lip = theory.mu, theory.lip
    n = problem.n_nodes
    eye = np.eye(n)
    pen = eye + wp.w - 2 * wp.w_tilde
    xs, vs = ref.x_star_stacked, ref.v_star
    x, v = state.x, state.v

    def stats(idx):
        nxt = one_step(state, problem, wp, alpha, idx)
        xn, vn, ghat = nxt.x, nxt.v, nxt.g_prev
        dxn = xn - xs
        step_x = xn - x
        return np.array([
            _sq(ghat - ref.grad_at_star),
            float(np.einsum("np,np->", dxn, pen @ dxn)),
            z_tilde_norm_sq(wp, step_x) - 2 * alpha * eta * _sq(step_x),
            _sq(vn - v),
            z_tilde_norm_sq(wp, dxn) + _sq(vn - vs),
            p_sequence(problem, nxt.table, ref),
            _sq(pen @ dxn),
            _sq(wp.w_tilde @ step_x),
            lyapunov(problem, xn, vn, nxt.table, ref, wp, c),
        ])

    (e_gnoise, e_pen, e_step, e_dv, e_u, e_p, e_pen_sq, e_wt_sq, e_lyap) = (
        enumerate_conditional_expectation(problem.q_counts, stats)
    )
    p = p_sequence(problem, state.table, ref)
    gap = bregman_gap(problem, x, ref)
    u_norm = z_tilde_norm_sq(wp, x - xs) + _sq(v - vs)
    lyap = u_norm + c * p
    gp, Gp = theory.gamma_prime, theory.gamma_cap_prime

    return [
        BoundCheck("gradient_noise", e_gnoise, 4 * lip * p + 2 * (2 * lip - mu) * gap),
        BoundCheck(
            "primal_dual_decrement",
            e_u,
            u_norm - 2 * e_pen + 4 * alpha * lip / eta * p - e_step - e_dv
            - (4 * alpha * mu / lip - 2 * alpha * (2 * lip - mu) / eta) * gap,
        ),
        BoundCheck(
            "table_decrement",
            e_p,
            (1 - 1 / theory.q_max) * p + gap / theory.q_min,
        ),
        BoundCheck(
            "dual_gap",
            _sq(v - vs),
            8 / gp * e_pen_sq + 8 / gp * e_wt_sq + 16 * alpha**2 * lip / gp * p
            + 2 * Gp / gp * e_dv + 8 * alpha**2 * (2 * lip - mu) / gp * gap,
        ),
        BoundCheck("lyapunov_contraction", e_lyap, (1 - delta) * lyap),
    ]


def optimal_saddle_state(problem, wp, ref):
    """Saddle state sitting at ``(x*, v*)`` with every table point at the optimum."""
    state = init_state("dsa_saddle", problem, ref.x_star_stacked, wp=wp)
    state.v = ref.v_star.copy()
    return state


def random_reachable_states(problem, wp, alpha, n_states, seed=0, max_steps=30, scale=2.0):
    """Saddle states reached from random starts after a random number (>= 1) of steps."""
    rng = np.random.default_rng(seed)
    out = []
    for k in range(n_states):
        x0 = scale * rng.standard_normal((problem.n_nodes, problem.dim))
        state = init_state("dsa_saddle", problem, x0, seed=int(rng.integers(2**31)), wp=wp)
        for _ in range(int(rng.integers(1, max_steps + 1))):
            dsa_saddle_step(state, problem, wp, StepSchedule(alpha))
        out.append(state)
    return out


def theory_report(problem, spectral, kappa_g, trace_rate=None):
    """Constants, default parameters, ``delta`` and the regime split as a flat dict."""
    from .problem import function_condition_number

    q = problem.q
    kappa_f = function_condition_number(problem)
    params = compute_delta(problem.mu, problem.lip, spectral, q, q)
    ratio = spectral.gamma / spectral.gamma_prime
    regimes = simplified_regimes(kappa_f, kappa_g, q, ratio)
    report = {
        "mu": problem.mu,
        "L": problem.lip,
        "kappa_f": kappa_f,
        "kappa_g": kappa_g,
        "gamma": spectral.gamma,
        "Gamma": spectral.gamma_cap,
        "gamma_prime": spectral.gamma_prime,
        "Gamma_prime": spectral.gamma_cap_prime,
        "q": q,
        "eta": params.eta,
        "alpha": params.alpha,
        "c": params.c,
        "delta": params.delta,
        "delta_simplified": min(regimes.values()),
        "regime_graph": regimes["graph"],
        "regime_samples": regimes["samples"],
        "regime_function": regimes["function"],
        "dominant_regime": min(regimes, key=regimes.get),
        "eta_lower_loose": eta_lower_bound(problem.mu, problem.lip, q, q),
        "eta_lower_tight": eta_lower_bound(problem.mu, problem.lip, q, q, half_l=True),
        "one_minus_delta": 1 - params.delta,
    }
    if trace_rate is not None:
        report["empirical_rate"] = trace_rate
    return report
