import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dsasim.analysis import (
    bregman_gap,
    decay_window,
    error_metric,
    fit_linear_rate,
    lyapunov,
    p_sequence,
    solve_reference,
    standard_hooks,
    z_tilde_norm_sq,
)
from dsasim.errors import DimensionMismatch, EmptyWindow, MissingDual, NonPositiveError, ZeroStrongConvexity
from dsasim.problem import QuadraticProblem, generate_logistic, generate_quadratic
from dsasim.solvers import GradientTable, init_state, run
from dsasim.topology import build_weight_pair, generate_graph


@pytest.fixture(scope="module")
def five_logistic():
    _, p = generate_logistic(5, 40, 3, lam=1e-2, seed=2)
    wp, _ = build_weight_pair(generate_graph("random", 5, seed=2, p_c=0.5))
    return p, wp, solve_reference(p)


def test_reference_two_targets():
    ref = solve_reference(QuadraticProblem(np.array([[[0.0]], [[2.0]]])))
    np.testing.assert_allclose(ref.x_star_single, [1.0])
    assert ref.f_star == pytest.approx(1.0)


def test_quadratic_closed_form_matches_iterative():
    p = generate_quadratic(3, 2, 2, seed=4)
    closed = solve_reference(p).x_star_single

    class NoClosedForm(QuadraticProblem):
        def global_hessian(self, x):
            return None

    iterative = solve_reference(NoClosedForm(p.targets)).x_star_single
    np.testing.assert_allclose(closed, iterative, atol=1e-10)
    np.testing.assert_allclose(closed, p.targets.mean(axis=(0, 1)), atol=1e-15)


def test_logistic_reference_kkt(five_logistic):
    p, wp, ref = five_logistic
    assert np.linalg.norm(p.global_gradient(ref.x_star_single)) <= 1e-12
    assert np.linalg.norm(ref.grad_at_star.sum(axis=0)) <= 1e-9


def test_dual_optimum(five_logistic):
    p, wp, ref = five_logistic
    r = ref.with_dual(wp, 0.03)
    assert np.linalg.norm(0.03 * r.grad_at_star + wp.u @ r.v_star) <= 1e-8
    assert np.linalg.norm(r.v_star - wp.u @ (wp.u_pinv @ r.v_star)) <= 1e-10


def test_reference_needs_strong_convexity():
    _, p = generate_logistic(2, 4, 2, lam=0.0)
    with pytest.raises(ZeroStrongConvexity):
        solve_reference(p)


def test_error_metric_examples(five_logistic):
    p, _, ref = five_logistic
    assert error_metric(ref.x_star_stacked, ref) == 0.0
    x = ref.x_star_stacked.copy()
    x[3, 1] += 1.0
    assert error_metric(x, ref) == pytest.approx(1.0)
    y = np.random.default_rng(0).standard_normal(x.shape)
    naive = sum(float(np.sum((y[n] - ref.x_star_single) ** 2)) for n in range(p.n_nodes))
    assert error_metric(y, ref) == pytest.approx(naive, rel=1e-12)
    with pytest.raises(DimensionMismatch):
        error_metric(np.zeros((2, 3)), ref)


def test_p_sequence_zero_at_optimum(five_logistic):
    p, _, ref = five_logistic
    assert abs(p_sequence(p, GradientTable.initialize(p, ref.x_star_stacked), ref)) < 1e-12


def test_p_sequence_quadratic_identity():
    p = generate_quadratic(3, 4, 2, seed=1)
    ref = solve_reference(p)
    rng = np.random.default_rng(2)
    table = GradientTable.initialize(p, rng.standard_normal((3, 2)))
    table.points = rng.standard_normal(table.points.shape)
    expected = sum(0.5 * np.sum((table.points[n] - ref.x_star_single) ** 2) / p.q for n in range(3))
    assert p_sequence(p, table, ref) == pytest.approx(expected, rel=1e-12)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10**6), scale=st.floats(0.01, 20))
def test_p_sequence_nonnegative(five_logistic, seed, scale):
    p, _, ref = five_logistic
    table = GradientTable.initialize(p, ref.x_star_stacked)
    table.points = ref.x_star_single + scale * np.random.default_rng(seed).standard_normal(table.points.shape)
    assert p_sequence(p, table, ref) >= -1e-12


def test_lyapunov_zero_at_saddle(five_logistic):
    p, wp, ref = five_logistic
    r = ref.with_dual(wp, 0.03)
    table = GradientTable.initialize(p, r.x_star_stacked)
    assert abs(lyapunov(p, r.x_star_stacked, r.v_star, table, r, wp, 0.7)) < 1e-12


def test_lyapunov_lower_bound(five_logistic):
    p, wp, ref = five_logistic
    r = ref.with_dual(wp, 0.03)
    _, s = build_weight_pair(generate_graph("random", 5, seed=2, p_c=0.5))
    x = np.random.default_rng(4).standard_normal((5, 3))
    table = GradientTable.initialize(p, x)
    assert lyapunov(p, x, r.v_star, table, r, wp, 0.0) >= s.gamma * error_metric(x, r) - 1e-12


def test_lyapunov_dense_oracle(five_logistic):
    p, wp, ref = five_logistic
    r = ref.with_dual(wp, 0.03)
    rng = np.random.default_rng(5)
    x, v = rng.standard_normal((5, 3)), rng.standard_normal((5, 3))
    table = GradientTable.initialize(p, rng.standard_normal((5, 3)))
    u = np.concatenate([(x - r.x_star_stacked).ravel(), (v - r.v_star).ravel()])
    g = np.zeros((30, 30))
    g[:15, :15] = np.kron(wp.w_tilde, np.eye(3))
    g[15:, 15:] = np.eye(15)
    c = 0.4
    dense = u @ g @ u + c * p_sequence(p, table, r)
    assert lyapunov(p, x, v, table, r, wp, c) == pytest.approx(dense, rel=1e-12)


def test_lyapunov_needs_dual(five_logistic):
    p, wp, ref = five_logistic
    table = GradientTable.initialize(p, ref.x_star_stacked)
    with pytest.raises(MissingDual):
        lyapunov(p, ref.x_star_stacked, None, table, ref, wp, 1.0)
    with pytest.raises(MissingDual):
        lyapunov(p, ref.x_star_stacked, ref.x_star_stacked, table, ref, wp, 1.0)


def test_bregman_gap_nonnegative(five_logistic):
    p, _, ref = five_logistic
    x = np.random.default_rng(6).standard_normal((5, 3))
    assert bregman_gap(p, x, ref) >= 0
    assert abs(bregman_gap(p, ref.x_star_stacked, ref)) < 1e-12


def test_z_tilde_norm(five_logistic):
    _, wp, _ = five_logistic
    d = np.ones((5, 3))
    assert z_tilde_norm_sq(wp, d) == pytest.approx(15.0)


def test_fit_exact_geometric():
    rate, r2 = fit_linear_rate(0.9 ** np.arange(50))
    assert rate == pytest.approx(0.9, rel=1e-12) and r2 == pytest.approx(1.0)


def test_fit_constant_sequence():
    rate, r2 = fit_linear_rate(np.full(10, 3.0))
    assert rate == pytest.approx(1.0) and r2 == 1.0


def test_fit_errors():
    with pytest.raises(EmptyWindow):
        fit_linear_rate(np.array([1.0]))
    with pytest.raises(NonPositiveError):
        fit_linear_rate(np.array([1.0, 0.0, 0.5]))
    with pytest.raises(EmptyWindow):
        decay_window(np.array([5.0, 4.0]), upper=1.0, lower=1e-3)


def test_decay_window_bounds():
    e = 10.0 ** -np.arange(12.0)
    assert decay_window(e, upper=1e-1, lower=1e-5) == (1, 6)
    assert decay_window(e, upper=1e-1, lower=1e-30) == (1, 12)


def test_hooks_with_tracked_dual(five_logistic):
    p, wp, ref = five_logistic
    r = ref.with_dual(wp, 0.02)
    rec = run("dsa", p, wp, 0.02, 20, hooks=standard_hooks(p, r, wp, p_t=True, lyapunov_c=0.5), track_dual=True)
    assert set(rec.metrics) == {"error_e_t", "p_t", "lyapunov"}
    assert (rec.metrics["lyapunov"] >= 0).all() and (rec.metrics["p_t"] >= -1e-12).all()
    state = init_state("dgd", p)
    hooks = standard_hooks(p, ref, p_t=True)
    assert np.isnan(hooks["p_t"](state))
