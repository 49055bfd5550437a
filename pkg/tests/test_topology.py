import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dsasim.errors import AssumptionViolation, ConnectivityFailure, InvalidParam
from dsasim.topology import (
    GRAPH_KINDS,
    Graph,
    SpectralSummary,
    WeightPair,
    bfs_reachable,
    build_weight_pair,
    generate_graph,
    graph_condition_number,
    laplacian,
    read_edge_list,
    validate_assumption1,
    write_edge_list,
)


def test_complete_and_cycle_edges():
    assert generate_graph("complete", 3).edges == {(0, 1), (0, 2), (1, 2)}
    assert generate_graph("cycle", 4).edges == {(0, 1), (1, 2), (2, 3), (0, 3)}


def test_line_and_star_edge_counts():
    assert len(generate_graph("line", 7).edges) == 6
    star = generate_graph("star", 6)
    assert star.degrees[0] == 5 and (star.degrees[1:] == 1).all()


def test_random_graph_is_connected_by_bfs():
    g = generate_graph("random", 20, seed=7, p_c=0.3)
    assert bfs_reachable(g) == set(range(20))


def test_random_graph_is_deterministic():
    assert generate_graph("random", 30, seed=3, p_c=0.2).edges == generate_graph("random", 30, seed=3, p_c=0.2).edges


def test_invalid_graph_parameters():
    with pytest.raises(InvalidParam):
        generate_graph("line", 1)
    with pytest.raises(InvalidParam):
        generate_graph("random", 5, p_c=0.0)
    with pytest.raises(InvalidParam):
        generate_graph("hypercube", 5)


def test_disconnected_graph_rejected():
    with pytest.raises(ConnectivityFailure):
        Graph(4, frozenset({(0, 1), (2, 3)}))


def test_unreachable_connectivity_raises():
    with pytest.raises(ConnectivityFailure):
        generate_graph("random", 60, seed=0, p_c=1e-4)


def test_adjacency_symmetric_zero_diagonal():
    a = generate_graph("random", 15, seed=1, p_c=0.4).adjacency
    assert (a == a.T).all() and (np.diag(a) == 0).all()


def test_laplacian_examples():
    np.testing.assert_array_equal(laplacian(generate_graph("line", 2)), [[1, -1], [-1, 1]])
    np.testing.assert_array_equal(laplacian(generate_graph("complete", 3)), [[2, -1, -1], [-1, 2, -1], [-1, -1, 2]])


@pytest.mark.parametrize("kind", GRAPH_KINDS)
def test_laplacian_connected_spectrum(kind):
    lap = laplacian(generate_graph(kind, 9, seed=2, p_c=0.4 if kind == "random" else None))
    eig = np.linalg.eigvalsh(lap)
    np.testing.assert_allclose(lap.sum(axis=1), 0)
    assert abs(eig[0]) < 1e-12 and eig[1] > 1e-9


def test_two_node_weight_pair():
    wp, s = build_weight_pair(generate_graph("line", 2))
    np.testing.assert_allclose(wp.w, [[0.25, 0.75], [0.75, 0.25]], atol=1e-15)
    np.testing.assert_allclose(wp.w_tilde, [[5 / 8, 3 / 8], [3 / 8, 5 / 8]], atol=1e-15)
    assert s.lambda_max_laplacian == pytest.approx(2.0)
    assert s.gamma == pytest.approx(0.25)
    assert s.gamma_cap == pytest.approx(1.0)
    assert s.gamma_prime == pytest.approx(0.75)
    assert s.gamma_cap_prime == pytest.approx(0.75)
    assert graph_condition_number(s) == pytest.approx(4.0)


def test_two_node_square_root():
    wp, _ = build_weight_pair(generate_graph("line", 2))
    ones = np.array([1.0, 1.0]) / np.sqrt(2)
    alt = np.array([1.0, -1.0]) / np.sqrt(2)
    assert np.linalg.norm(wp.u @ ones) < 1e-12
    np.testing.assert_allclose(wp.u @ alt, np.sqrt(0.75) * alt, atol=1e-12)
    np.testing.assert_allclose(wp.u @ wp.u, wp.w_tilde - wp.w, atol=1e-12)


def test_condition_number_identical_eigenvalues():
    assert graph_condition_number(SpectralSummary(0.5, 0.5, 0.5, 0.5)) == 1.0


def test_complete_three_condition_number():
    _, s = build_weight_pair(generate_graph("complete", 3))
    # L has eigenvalues {0, 3, 3}; W = I - L/2 gives W_tilde spectrum {1, 1/4} and W_tilde - W = {0, 3/4}
    assert s.gamma == pytest.approx(0.25) and s.gamma_prime == pytest.approx(0.75)
    assert graph_condition_number(s) == pytest.approx(4.0)


def test_validator_rejects_identity():
    eye = np.eye(3)
    report = validate_assumption1(WeightPair(eye, eye, None, None, None))
    assert not report.passed
    assert "null(I-W) = span(1)" in {c.name for c in report.failures}


def test_validator_rejects_asymmetry():
    wp, _ = build_weight_pair(generate_graph("cycle", 5))
    w = np.array(wp.w)
    w[0, 1] += 1e-3
    report = validate_assumption1(WeightPair(w, wp.w_tilde, None, None, None), tol=1e-6)
    assert "symmetric W" in {c.name for c in report.failures}


def test_from_matrices_raises_on_bad_pair():
    wp, _ = build_weight_pair(generate_graph("cycle", 5))
    with pytest.raises(AssumptionViolation):
        WeightPair.from_matrices(wp.w, wp.w_tilde - 0.3 * np.eye(5))


def test_tau_factor_must_exceed_half():
    with pytest.raises(InvalidParam):
        build_weight_pair(generate_graph("cycle", 5), tau_factor=0.5)


def test_weights_respect_sparsity_and_row_sums():
    g = generate_graph("random", 12, seed=4, p_c=0.3)
    wp, _ = build_weight_pair(g)
    pattern = g.adjacency + np.eye(12)
    assert (wp.w[pattern == 0] == 0).all()
    np.testing.assert_allclose(wp.w.sum(axis=1), 1.0, atol=1e-12)
    np.testing.assert_allclose(wp.w @ (3.0 * np.ones(12)), 3.0, atol=1e-12)


@settings(max_examples=40, deadline=None)
@given(
    kind=st.sampled_from(GRAPH_KINDS),
    n=st.integers(2, 25),
    seed=st.integers(0, 10_000),
    tau=st.floats(0.51, 1.0),
)
def test_generated_pairs_satisfy_assumption(kind, n, seed, tau):
    g = generate_graph(kind, n, seed=seed, p_c=0.5 if kind == "random" else None)
    wp, s = build_weight_pair(g, tau_factor=tau)
    assert validate_assumption1(wp, 1e-9).passed
    assert np.linalg.norm(wp.u @ wp.u - (wp.w_tilde - wp.w)) <= 1e-10
    assert np.allclose(wp.u, wp.u.T) and np.linalg.eigvalsh(wp.u).min() > -1e-12
    assert np.linalg.norm(wp.u @ np.ones(n)) <= 1e-9
    v = np.random.default_rng(seed).standard_normal(n)
    v -= v.mean()
    np.testing.assert_allclose(wp.u_pinv @ (wp.u @ v), v, atol=1e-9)
    assert 0 < s.gamma <= s.gamma_cap and 0 < s.gamma_prime <= s.gamma_cap_prime
    assert graph_condition_number(s) >= 1


def test_edge_list_round_trip(tmp_path):
    g = generate_graph("random", 10, seed=5, p_c=0.4)
    write_edge_list(g, tmp_path / "g.txt")
    assert read_edge_list(tmp_path / "g.txt", 10).edges == g.edges


def test_weight_csv_export(tmp_path):
    wp, _ = build_weight_pair(generate_graph("star", 4))
    wp.to_csv(tmp_path)
    np.testing.assert_array_equal(np.loadtxt(tmp_path / "w.csv", delimiter=","), wp.w)
