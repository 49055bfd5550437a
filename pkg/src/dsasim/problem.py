"""Distributed objectives built from per-node instantaneous functions.

Node ``n`` holds ``q`` instantaneous functions ``f_{n,i}`` and its local
objective is their mean. All nodes hold the same number of functions.
Stacked iterates are ``(N, p)`` arrays; table-shaped point sets are
``(N, q, p)``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import expit

from .errors import DimensionMismatch, InvalidParam, ZeroStrongConvexity


@dataclass
class EvalCounter:
    """Per-run cost bookkeeping: instantaneous-gradient calls and communication rounds."""

    n_nodes: int
    grad_evals: np.ndarray = field(default=None)
    comms: int = 0

    def __post_init__(self):
        if self.grad_evals is None:
            self.grad_evals = np.zeros(self.n_nodes, dtype=np.int64)

    def add(self, per_node):
        self.grad_evals += per_node

    @property
    def total(self):
        return int(self.grad_evals.sum())


class ProblemInstance:
    """Base class; subclasses implement the vectorized ``_values`` and ``_grads``.

    ``_values(rows, cols, pts)`` returns ``f_{rows[k], cols[k]}(pts[k])`` for
    every ``k``; ``_grads`` is the matching gradient.
    """

    n_nodes: int
    dim: int
    q: int
    mu: float
    lip: float

    def _values(self, rows, cols, pts):
        raise NotImplementedError

    def _grads(self, rows, cols, pts):
        raise NotImplementedError

    @property
    def q_counts(self):
        return np.full(self.n_nodes, self.q, dtype=np.int64)

    def _check_stacked(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape != (self.n_nodes, self.dim):
            raise DimensionMismatch(f"expected ({self.n_nodes}, {self.dim}) iterate, got {x.shape}")
        return x

    def value(self, n, i, x):
        x = np.asarray(x, dtype=float).reshape(1, self.dim)
        return float(self._values(np.array([n]), np.array([i]), x)[0])

    def grad(self, n, i, x):
        x = np.asarray(x, dtype=float).reshape(1, self.dim)
        return self._grads(np.array([n]), np.array([i]), x)[0]

    def grad_selected(self, idx, x, counter=None):
        """Gradient of ``f_{n, idx[n]}`` at ``x[n]`` for every node (one call per node)."""
        x = self._check_stacked(x)
        if counter is not None:
            counter.add(1)
        return self._grads(np.arange(self.n_nodes), np.asarray(idx), x)

    def values_at(self, y):
        """``f_{n,i}(y[n, i])`` for a table of points ``y`` of shape ``(N, q, p)``."""
        rows, cols = np.indices((self.n_nodes, self.q))
        pts = np.asarray(y, dtype=float).reshape(-1, self.dim)
        return self._values(rows.ravel(), cols.ravel(), pts).reshape(self.n_nodes, self.q)

    def grads_at(self, y, counter=None):
        rows, cols = np.indices((self.n_nodes, self.q))
        pts = np.asarray(y, dtype=float).reshape(-1, self.dim)
        if counter is not None:
            counter.add(self.q)
        g = self._grads(rows.ravel(), cols.ravel(), pts)
        return g.reshape(self.n_nodes, self.q, self.dim)

    def _broadcast(self, x):
        return np.broadcast_to(x[:, None, :], (self.n_nodes, self.q, self.dim))

    def local_values(self, x):
        x = self._check_stacked(x)
        return self.values_at(self._broadcast(x)).mean(axis=1)

    def local_grads(self, x, counter=None):
        """Full local gradients ``grad f_n(x_n)``; costs ``q`` evaluations per node."""
        x = self._check_stacked(x)
        return self.grads_at(self._broadcast(x), counter).mean(axis=1)

    def global_value(self, x):
        """``sum_n f_n(x)`` for a single point ``x`` in ``R^p``."""
        x = np.asarray(x, dtype=float)
        return float(self.local_values(np.tile(x, (self.n_nodes, 1))).sum())

    def global_gradient(self, x):
        x = np.asarray(x, dtype=float)
        return self.local_grads(np.tile(x, (self.n_nodes, 1))).sum(axis=0)

    def global_hessian(self, x):
        """Hessian of ``sum_n f_n``; ``None`` when the family has no closed form."""
        return None


def aggregate_value(problem, x):
    """``f(x) = sum_n f_n(x_n)`` for a stacked iterate."""
    return float(problem.local_values(x).sum())


def aggregate_gradient(problem, x, counter=None):
    """Stacked ``[grad f_1(x_1); ...; grad f_N(x_N)]`` as an ``(N, p)`` array."""
    return problem.local_grads(x, counter)


def function_condition_number(problem):
    if problem.mu <= 0:
        raise ZeroStrongConvexity("function condition number needs mu > 0")
    return problem.lip / problem.mu


class QuadraticProblem(ProblemInstance):
    """``f_{n,i}(x) = 0.5 * ||x - a_{n,i}||^2``; closed-form optimum, ``mu = L = 1``."""

    def __init__(self, targets):
        targets = np.array(targets, dtype=float)
        if targets.ndim != 3:
            raise DimensionMismatch("targets must have shape (N, q, p)")
        self.targets = targets
        self.n_nodes, self.q, self.dim = targets.shape
        self.mu = 1.0
        self.lip = 1.0

    def _values(self, rows, cols, pts):
        d = pts - self.targets[rows, cols]
        return 0.5 * np.einsum("kp,kp->k", d, d)

    def _grads(self, rows, cols, pts):
        return pts - self.targets[rows, cols]

    def optimum(self):
        return self.targets.mean(axis=1).mean(axis=0)

    def global_hessian(self, x):
        return self.n_nodes * np.eye(self.dim)


def generate_quadratic(n_nodes, q_per_node, dim, seed=0, scale=1.0):
    if min(n_nodes, q_per_node, dim) < 1:
        raise InvalidParam("n_nodes, q_per_node and dim must all be >= 1")
    rng = np.random.default_rng(seed)
    return QuadraticProblem(scale * rng.standard_normal((n_nodes, q_per_node, dim)))


@dataclass(frozen=True)
class LogisticDataset:
    features: np.ndarray  # (N, q, p)
    labels: np.ndarray  # (N, q), entries in {-1, +1}
    lam: float

    def __post_init__(self):
        if self.features.ndim != 3 or self.labels.shape != self.features.shape[:2]:
            raise DimensionMismatch("features must be (N, q, p) and labels (N, q)")
        if self.features.shape[1] < 1:
            raise InvalidParam("every node needs at least one sample")
        if not np.isin(self.labels, (-1.0, 1.0)).all():
            raise InvalidParam("labels must be -1 or +1")
        if self.lam < 0:
            raise InvalidParam("lambda must be nonnegative")

    @property
    def n_nodes(self):
        return self.features.shape[0]

    def to_csv(self, path):
        n_nodes, q, p = self.features.shape
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["node_id", "label"] + [f"feature_{k + 1}" for k in range(p)])
            for n in range(n_nodes):
                for i in range(q):
                    w.writerow([n, int(self.labels[n, i])] + [repr(float(v)) for v in self.features[n, i]])

    @classmethod
    def from_csv(cls, path, lam):
        rows = {}
        with open(path, newline="") as fh:
            for rec in csv.DictReader(fh):
                n = int(rec.pop("node_id"))
                label = float(rec.pop("label"))
                feats = [float(rec[k]) for k in sorted(rec, key=lambda k: int(k.split("_")[1]))]
                rows.setdefault(n, []).append((label, feats))
        nodes = [rows[n] for n in sorted(rows)]
        labels = np.array([[lab for lab, _ in node] for node in nodes])
        features = np.array([[f for _, f in node] for node in nodes])
        return cls(features, labels, lam)


class LogisticProblem(ProblemInstance):
    """``f_{n,i}(x) = lam/(2N) ||x||^2 + q log(1 + exp(-l s^T x))``.

    The regularizer share ``lam/(2N)`` makes the node objectives sum to the
    centralized regularized log-likelihood with weight ``lam/2``.
    """

    def __init__(self, dataset):
        self.dataset = dataset
        self.features = dataset.features
        self.labels = dataset.labels
        self.n_nodes, self.q, self.dim = self.features.shape
        self.lam = float(dataset.lam)
        self.reg = self.lam / self.n_nodes
        self.mu = self.reg
        max_sq = float(np.einsum("nqp,nqp->nq", self.features, self.features).max())
        self.lip = self.reg + self.q * max_sq / 4.0

    def _margins(self, rows, cols, pts):
        s = self.features[rows, cols]
        return self.labels[rows, cols] * np.einsum("kp,kp->k", s, pts), s

    def _values(self, rows, cols, pts):
        z, _ = self._margins(rows, cols, pts)
        # log(1 + exp(-z)) without overflow
        return 0.5 * self.reg * np.einsum("kp,kp->k", pts, pts) + self.q * np.logaddexp(0.0, -z)

    def _grads(self, rows, cols, pts):
        z, s = self._margins(rows, cols, pts)
        coef = -self.q * self.labels[rows, cols] * expit(-z)
        return self.reg * pts + coef[:, None] * s

    def global_hessian(self, x):
        s = self.features.reshape(-1, self.dim)
        z = self.labels.ravel() * (s @ x)
        w = expit(z) * expit(-z)
        return self.lam * np.eye(self.dim) + (s * w[:, None]).T @ s


def generate_logistic(
    n_nodes,
    total_samples,
    dim,
    lam,
    mean=2.0,
    std_plus=2.0,
    std_minus=2.0,
    seed=0,
):
    """Synthetic two-class Gaussian dataset split evenly across nodes.

    Each node gets ``ceil(q/2)`` samples labeled +1 with components drawn from
    ``Normal(mean, std_plus)`` and the rest labeled -1 drawn from
    ``Normal(-mean, std_minus)``.
    """
    if total_samples % n_nodes:
        raise InvalidParam(f"total_samples={total_samples} not divisible by n_nodes={n_nodes}")
    if dim < 1 or lam < 0 or n_nodes < 1:
        raise InvalidParam("need dim >= 1, lam >= 0, n_nodes >= 1")
    q = total_samples // n_nodes
    n_pos = math.ceil(q / 2)
    rng = np.random.default_rng(seed)
    features = np.empty((n_nodes, q, dim))
    labels = np.empty((n_nodes, q))
    for n in range(n_nodes):
        features[n, :n_pos] = rng.normal(mean, std_plus, size=(n_pos, dim))
        features[n, n_pos:] = rng.normal(-mean, std_minus, size=(q - n_pos, dim))
        labels[n, :n_pos] = 1.0
        labels[n, n_pos:] = -1.0
    ds = LogisticDataset(features, labels, float(lam))
    return ds, LogisticProblem(ds)


def save_dataset(ds, path):
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    ds.to_csv(path)
