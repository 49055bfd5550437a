"""Network graphs, Laplacian mixing matrices and their spectral summary.

Stacked iterates are stored as ``(N, p)`` arrays, so applying ``W`` to them
row-wise is the same as applying ``W kron I_p`` to the flattened vector.
None of the Kronecker products is ever formed.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from .errors import AssumptionViolation, ConnectivityFailure, InvalidParam

GRAPH_KINDS = ("random", "complete", "cycle", "line", "star")
MAX_RANDOM_ATTEMPTS = 100
# eigenvalues of W_tilde - W with magnitude <= CLAMP are treated as roundoff
# zeros; a positive 1e-17 would otherwise leave sqrt = 3e-9 in U 1
CLAMP = 1e-12
# eigenvalues below this count as zero when forming the pseudoinverse
NULL_TOL = 1e-10
DEFAULT_TAU_FACTOR = 2.0 / 3.0


def _normalize_edges(edges):
    out = set()
    for u, v in edges:
        u, v = int(u), int(v)
        if u == v:
            raise InvalidParam(f"self-loop at node {u}")
        out.add((min(u, v), max(u, v)))
    return frozenset(out)


def _is_connected(n_nodes, edges):
    if n_nodes == 1:
        return True
    if not edges:
        return False
    rows, cols = np.array(sorted(edges)).T
    adj = csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(n_nodes, n_nodes))
    n_comp, _ = connected_components(adj, directed=False)
    return n_comp == 1


@dataclass(frozen=True)
class Graph:
    """Undirected connected graph on nodes ``0..n_nodes-1``."""

    n_nodes: int
    edges: frozenset
    adjacency: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.n_nodes < 1:
            raise InvalidParam(f"n_nodes must be positive, got {self.n_nodes}")
        edges = _normalize_edges(self.edges)
        for u, v in edges:
            if v >= self.n_nodes:
                raise InvalidParam(f"edge ({u}, {v}) references a node >= {self.n_nodes}")
        if not _is_connected(self.n_nodes, edges):
            raise ConnectivityFailure(f"graph on {self.n_nodes} nodes is disconnected")
        adj = np.zeros((self.n_nodes, self.n_nodes))
        for u, v in edges:
            adj[u, v] = adj[v, u] = 1.0
        adj.setflags(write=False)
        object.__setattr__(self, "edges", edges)
        object.__setattr__(self, "adjacency", adj)

    @property
    def degrees(self):
        return self.adjacency.sum(axis=1)

    def neighbors(self, n):
        return np.flatnonzero(self.adjacency[n])


def generate_graph(kind, n_nodes, seed=0, p_c=None):
    """Build a connected graph of the given kind.

    Random graphs keep each of the ``N(N-1)/2`` possible edges independently
    with probability ``p_c``. A disconnected draw is discarded and redrawn
    from a generator seeded with ``(seed, attempt)``, at most 100 times.
    """
    if n_nodes < 2:
        raise InvalidParam(f"n_nodes must be >= 2, got {n_nodes}")
    if kind == "complete":
        edges = [(u, v) for u in range(n_nodes) for v in range(u + 1, n_nodes)]
    elif kind == "cycle":
        edges = [(u, (u + 1) % n_nodes) for u in range(n_nodes)]
    elif kind == "line":
        edges = [(u, u + 1) for u in range(n_nodes - 1)]
    elif kind == "star":
        edges = [(0, v) for v in range(1, n_nodes)]
    elif kind == "random":
        if p_c is None or not 0.0 < p_c <= 1.0:
            raise InvalidParam(f"random graphs need 0 < p_c <= 1, got {p_c}")
        iu, ju = np.triu_indices(n_nodes, k=1)
        for attempt in range(MAX_RANDOM_ATTEMPTS):
            rng = np.random.default_rng([seed, attempt])
            keep = rng.random(len(iu)) < p_c
            edges = frozenset(zip(iu[keep].tolist(), ju[keep].tolist()))
            if _is_connected(n_nodes, edges):
                return Graph(n_nodes, edges)
        raise ConnectivityFailure(
            f"no connected draw in {MAX_RANDOM_ATTEMPTS} attempts (N={n_nodes}, p_c={p_c})"
        )
    else:
        raise InvalidParam(f"unknown graph kind {kind!r}; expected one of {GRAPH_KINDS}")
    return Graph(n_nodes, frozenset(edges))


def laplacian(g):
    """Combinatorial Laplacian ``D - A``."""
    return np.diag(g.degrees) - g.adjacency


def bfs_reachable(g, start=0):
    seen = {start}
    queue = deque([start])
    while queue:
        u = queue.popleft()
        for v in g.neighbors(u):
            v = int(v)
            if v not in seen:
                seen.add(v)
                queue.append(v)
    return seen


@dataclass(frozen=True)
class ConditionResult:
    name: str
    passed: bool
    residual: float


@dataclass(frozen=True)
class ValidationReport:
    conditions: tuple

    @property
    def passed(self):
        return all(c.passed for c in self.conditions)

    @property
    def failures(self):
        return [c for c in self.conditions if not c.passed]

    def __str__(self):
        lines = []
        for c in self.conditions:
            mark = "ok  " if c.passed else "FAIL"
            lines.append(f"{mark} {c.name:<28s} residual={c.residual:.3e}")
        return "\n".join(lines)


def _second_smallest_magnitude(a):
    mags = np.sort(np.abs(np.linalg.eigvals(a)))
    return float(mags[1]) if len(mags) > 1 else float("inf")


def _min_eig(a):
    return float(np.linalg.eigvalsh((a + a.T) / 2).min())


def validate_assumption1(wp, tol=1e-9):
    """Check symmetry, null-space and spectral-ordering conditions on ``(W, W_tilde)``.

    Null spaces are tested spectrally: the all-ones vector must be annihilated
    and the second-smallest eigenvalue magnitude must exceed ``tol``. Never
    raises; failures are reported per condition.
    """
    w = np.asarray(wp.w, dtype=float)
    wt = np.asarray(wp.w_tilde, dtype=float)
    if w.shape != wt.shape or w.ndim != 2 or w.shape[0] != w.shape[1]:
        return ValidationReport((ConditionResult("shape", False, float("inf")),))
    n = w.shape[0]
    eye = np.eye(n)
    ones = np.ones(n)
    checks = []

    def add(name, residual, ok):
        checks.append(ConditionResult(name, bool(ok), float(residual)))

    r = float(np.abs(w - w.T).max())
    add("symmetric W", r, r <= tol)
    r = float(np.abs(wt - wt.T).max())
    add("symmetric W_tilde", r, r <= tol)

    r = float(np.linalg.norm((eye - wt) @ ones))
    add("(I-W_tilde) 1 = 0", r, r <= tol)
    r = float(np.linalg.norm((eye - w) @ ones))
    add("(I-W) 1 = 0", r, r <= tol)
    r = _second_smallest_magnitude(eye - w)
    add("null(I-W) = span(1)", r, r > tol)
    r = float(np.linalg.norm((wt - w) @ ones))
    add("(W_tilde-W) 1 = 0", r, r <= tol)
    r = _second_smallest_magnitude(wt - w)
    add("null(W_tilde-W) = span(1)", r, r > tol)

    r = _min_eig(wt - w)
    add("W <= W_tilde", r, r >= -tol)
    r = _min_eig((eye + w) / 2 - wt)
    add("W_tilde <= (I+W)/2", r, r >= -tol)
    r = _min_eig(wt)
    add("W_tilde > 0", r, r > tol)
    return ValidationReport(tuple(checks))


def _psd_sqrt_and_pinv(a):
    vals, vecs = np.linalg.eigh((a + a.T) / 2)
    if vals.min() < -CLAMP:
        raise AssumptionViolation(f"W_tilde - W has eigenvalue {vals.min():.3e} < 0")
    vals = np.where(vals <= CLAMP, 0.0, vals)
    root = np.sqrt(vals)
    u = (vecs * root) @ vecs.T
    inv = np.where(root > np.sqrt(NULL_TOL), 1.0 / np.where(root > 0, root, 1.0), 0.0)
    u_pinv = (vecs * inv) @ vecs.T
    return (u + u.T) / 2, (u_pinv + u_pinv.T) / 2


@dataclass(frozen=True)
class SpectralSummary:
    gamma: float
    gamma_cap: float
    gamma_prime: float
    gamma_cap_prime: float
    lambda_max_laplacian: float = float("nan")
    # largest eigenvalue of I + W - 2 W_tilde (zero when W_tilde = (I+W)/2)
    lambda_max_penalty: float = 0.0


@dataclass(frozen=True)
class WeightPair:
    w: np.ndarray
    w_tilde: np.ndarray
    u: np.ndarray
    u_pinv: np.ndarray
    report: ValidationReport = field(repr=False, compare=False)

    @property
    def n_nodes(self):
        return self.w.shape[0]

    @classmethod
    def from_matrices(cls, w, w_tilde, tol=1e-9, validate=True):
        """Wrap explicit mixing matrices, computing ``U = (W_tilde - W)^(1/2)``.

        Raises AssumptionViolation when ``validate`` is set and any condition
        fails.
        """
        w = np.array(w, dtype=float)
        wt = np.array(w_tilde, dtype=float)
        probe = WeightPair(w, wt, None, None, None)
        report = validate_assumption1(probe, tol)
        if validate and not report.passed:
            names = ", ".join(c.name for c in report.failures)
            raise AssumptionViolation(f"weight pair fails: {names}")
        u, u_pinv = _psd_sqrt_and_pinv(wt - w)
        for m in (w, wt, u, u_pinv):
            m.setflags(write=False)
        return cls(w, wt, u, u_pinv, report)

    def summary(self, lambda_max_laplacian=float("nan")):
        return spectral_summary(self, lambda_max_laplacian)

    def to_csv(self, directory):
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        for name in ("w", "w_tilde", "u"):
            np.savetxt(directory / f"{name}.csv", getattr(self, name), delimiter=",", fmt="%.17g")


def spectral_summary(wp, lambda_max_laplacian=float("nan")):
    wt_eigs = np.linalg.eigvalsh(wp.w_tilde)
    d_eigs = np.linalg.eigvalsh(wp.w_tilde - wp.w)
    nonzero = d_eigs[d_eigs > NULL_TOL]
    pen = np.linalg.eigvalsh(np.eye(wp.n_nodes) + wp.w - 2 * wp.w_tilde)
    return SpectralSummary(
        gamma=float(wt_eigs.min()),
        gamma_cap=float(wt_eigs.max()),
        gamma_prime=float(nonzero.min()) if nonzero.size else 0.0,
        gamma_cap_prime=float(d_eigs.max()),
        lambda_max_laplacian=float(lambda_max_laplacian),
        lambda_max_penalty=max(float(pen.max()), 0.0),
    )


def build_weight_pair(g, tau_factor=DEFAULT_TAU_FACTOR):
    """``W = I - L/tau`` with ``tau = tau_factor * lambda_max(L)`` and ``W_tilde = (I+W)/2``.

    Returns the validated pair together with its spectral summary.
    """
    if tau_factor <= 0.5:
        raise InvalidParam(f"tau_factor must exceed 1/2, got {tau_factor}")
    lap = laplacian(g)
    lam_max = float(np.linalg.eigvalsh(lap).max())
    tau = tau_factor * lam_max
    eye = np.eye(g.n_nodes)
    w = eye - lap / tau
    w_tilde = (eye + w) / 2
    wp = WeightPair.from_matrices(w, w_tilde, tol=1e-9)
    return wp, spectral_summary(wp, lam_max)


def graph_condition_number(s):
    """``max(Gamma, Gamma') / min(gamma, gamma')``."""
    return max(s.gamma_cap, s.gamma_cap_prime) / min(s.gamma, s.gamma_prime)


def write_edge_list(g, path):
    lines = [f"{u} {v}" for u, v in sorted(g.edges)]
    Path(path).write_text("\n".join(lines) + "\n")


def read_edge_list(path, n_nodes=None):
    edges = []
    for line in Path(path).read_text().splitlines():
        line = line.split("#", 1)[0].strip()
        if line:
            u, v = line.split()
            edges.append((int(u), int(v)))
    if n_nodes is None:
        n_nodes = 1 + max(max(e) for e in edges)
    return Graph(n_nodes, frozenset(edges))
