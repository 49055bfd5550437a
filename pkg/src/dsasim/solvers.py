"""Decentralized iteration schemes over a shared gradient-table machinery.

All schemes are synchronous: every node updates from the previous round's
neighbor values. Iterates are ``(N, p)`` arrays and mixing is ``W @ x``.

Implemented: ``dgd``, ``extra``, ``stochastic_extra``, ``dec_saga``, ``dsa``
and ``dsa_saddle`` (the primal-dual form of ``dsa``, used as an oracle).
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatch, InvalidParam, MissingHistory, NonFinite, TableUninitialized
from .problem import EvalCounter

ALGORITHMS = ("dgd", "extra", "stochastic_extra", "dec_saga", "dsa", "dsa_saddle")
STOCHASTIC = ("stochastic_extra", "dec_saga", "dsa", "dsa_saddle")
TABLE_BASED = ("dec_saga", "dsa", "dsa_saddle")


@dataclass(frozen=True)
class StepSchedule:
    """Constant ``alpha`` or diminishing ``alpha / (t+1)**decay``."""

    alpha: float
    kind: str = "constant"
    decay: float = 0.0

    def __post_init__(self):
        if not self.alpha > 0:
            raise InvalidParam(f"stepsize must be positive, got {self.alpha}")
        if self.kind not in ("constant", "diminishing"):
            raise InvalidParam(f"unknown schedule kind {self.kind!r}")

    def __call__(self, t):
        if self.kind == "constant":
            return self.alpha
        return self.alpha / (t + 1) ** self.decay


class IndexStream:
    """One independent uniform index per node per iteration.

    Node ``n`` draws from its own Philox generator keyed by ``(seed, n)``, so a
    second stream built from the same seed replays the exact sequence.
    """

    CHUNK = 256

    def __init__(self, seed, q_counts):
        self.seed = int(seed)
        self.q_counts = np.asarray(q_counts, dtype=np.int64)
        self._gens = [
            np.random.Generator(np.random.Philox(np.random.SeedSequence(self.seed, spawn_key=(n,))))
            for n in range(len(self.q_counts))
        ]
        self._buf = None
        self._pos = self.CHUNK

    def __next__(self):
        if self._pos == self.CHUNK:
            self._buf = np.stack(
                [g.integers(0, q, size=self.CHUNK) for g, q in zip(self._gens, self.q_counts)], axis=1
            )
            self._pos = 0
        out = self._buf[self._pos]
        self._pos += 1
        return out

    def __iter__(self):
        return self


class RecordedStream:
    """Replays a fixed list of index vectors."""

    def __init__(self, draws):
        self._it = iter([np.asarray(d, dtype=np.int64) for d in draws])

    def __next__(self):
        return next(self._it)

    def __iter__(self):
        return self


class GradientTable:
    """Per-node store of the latest instantaneous gradients.

    ``grads[n, i]`` is ``grad f_{n,i}(points[n, i])`` and ``running_sum[n]`` is
    kept equal to ``grads[n].sum(axis=0)`` by O(p) updates.
    """

    def __init__(self, grads, points, running_sum=None):
        self.grads = grads
        self.points = points
        self.running_sum = grads.sum(axis=1) if running_sum is None else running_sum

    @classmethod
    def initialize(cls, problem, x0, counter=None):
        pts = np.repeat(np.asarray(x0, dtype=float)[:, None, :], problem.q, axis=1)
        return cls(problem.grads_at(pts, counter), pts)

    @property
    def q(self):
        return self.grads.shape[1]

    def recomputed_sum(self):
        return self.grads.sum(axis=1)

    def copy(self):
        return GradientTable(self.grads.copy(), self.points.copy(), self.running_sum.copy())

    def averaging_gradient(self, problem, idx, x, counter=None, update=True):
        """Stochastic averaging gradient for every node at ``x`` with indices ``idx``.

        Uses the table as it stands before this call; afterwards entry
        ``idx[n]`` of node ``n`` is overwritten with the fresh gradient, which
        is the single instantaneous evaluation made per node.
        """
        rows = np.arange(len(idx))
        fresh = problem.grad_selected(idx, x, counter)
        old = self.grads[rows, idx]
        ghat = fresh - old + self.running_sum / self.q
        if update:
            self.grads[rows, idx] = fresh
            self.running_sum += fresh - old
            self.points[rows, idx] = x
        return ghat


@dataclass
class SolverState:
    algorithm: str
    x: np.ndarray
    x_prev: np.ndarray = None
    # previous gradient term: grad f(x^{t-1}) for extra, the realized
    # stochastic gradient for stochastic_extra, ghat^{t-1} for dsa
    g_prev: np.ndarray = None
    table: GradientTable = None
    t: int = 0
    stream: object = None
    counter: EvalCounter = None
    # running sum of U x^s, the dual variable of the saddle-point form
    v: np.ndarray = None
    last_idx: np.ndarray = None

    def copy(self):
        new = copy.copy(self)
        for name in ("x", "x_prev", "g_prev", "v", "last_idx"):
            val = getattr(self, name)
            if val is not None:
                setattr(new, name, val.copy())
        if self.table is not None:
            new.table = self.table.copy()
        new.counter = copy.deepcopy(self.counter)
        new.stream = copy.deepcopy(self.stream)
        return new


@dataclass
class SaddleState(SolverState):
    """State of the primal-dual form; ``v`` is always populated."""


def init_state(algorithm, problem, x0=None, seed=0, stream=None, track_dual=False, wp=None):
    """Fresh state at ``t = 0``; table-based methods pay ``q`` evaluations per node here."""
    if algorithm not in ALGORITHMS:
        raise InvalidParam(f"unknown algorithm {algorithm!r}; expected one of {ALGORITHMS}")
    if x0 is None:
        x0 = np.zeros((problem.n_nodes, problem.dim))
    x0 = problem._check_stacked(x0).copy()
    counter = EvalCounter(problem.n_nodes)
    if stream is None and algorithm in STOCHASTIC:
        stream = IndexStream(seed, problem.q_counts)
    table = GradientTable.initialize(problem, x0, counter) if algorithm in TABLE_BASED else None
    cls = SaddleState if algorithm == "dsa_saddle" else SolverState
    state = cls(algorithm, x0, table=table, stream=stream, counter=counter)
    if algorithm == "dsa_saddle" or track_dual:
        if wp is None:
            raise InvalidParam("the dual variable needs the weight pair")
        state.v = wp.u @ x0
    return state


def _check_weights(state, wp):
    if wp.n_nodes != state.x.shape[0]:
        raise DimensionMismatch(f"weights are {wp.n_nodes}x{wp.n_nodes}, iterate has {state.x.shape[0]} nodes")


def _advance(state, x_new, wp):
    state.x_prev = state.x
    state.x = x_new
    state.t += 1
    state.counter.comms += 1
    if state.v is not None and state.algorithm != "dsa_saddle":
        state.v = state.v + wp.u @ x_new
    return state


def stochastic_averaging_gradient(state, problem, n, i):
    """Single-node averaging gradient at ``state.x[n]`` with index ``i`` (updates the table)."""
    table = state.table
    if table is None:
        raise TableUninitialized("gradient table has not been initialized")
    x_n = state.x[n]
    fresh = problem.grad(n, i, x_n)
    if state.counter is not None:
        state.counter.grad_evals[n] += 1
    old = table.grads[n, i].copy()
    ghat = fresh - old + table.running_sum[n] / table.q
    table.grads[n, i] = fresh
    table.running_sum[n] += fresh - old
    table.points[n, i] = x_n
    return ghat


def dgd_step(state, problem, wp, schedule):
    """``x^{t+1} = W x^t - alpha grad f(x^t)``."""
    _check_weights(state, wp)
    g = problem.local_grads(state.x, state.counter)
    return _advance(state, wp.w @ state.x - schedule(state.t) * g, wp)


def _double_step(state, wp, g, alpha):
    """Shared EXTRA template; DGD-like first step, then the two-iterate recursion."""
    if state.t == 0:
        x_new = wp.w @ state.x - alpha * g
    else:
        if state.x_prev is None or state.g_prev is None:
            raise MissingHistory(f"step t={state.t} needs the previous iterate and gradient")
        x_new = state.x + wp.w @ state.x - wp.w_tilde @ state.x_prev - alpha * (g - state.g_prev)
    state.g_prev = g
    return _advance(state, x_new, wp)


def extra_step(state, problem, wp, schedule):
    _check_weights(state, wp)
    if state.t > 0 and state.x_prev is None:
        raise MissingHistory(f"step t={state.t} needs the previous iterate")
    g = problem.local_grads(state.x, state.counter)
    return _double_step(state, wp, g, schedule(state.t))


def stochastic_extra_step(state, problem, wp, schedule):
    """EXTRA with ``grad f_{n, i_n^t}(x_n^t)`` in place of the local gradient.

    The previous term reuses the gradient realized at ``t-1`` (same index as
    drawn then), so one evaluation per node per step.
    """
    _check_weights(state, wp)
    if state.t > 0 and state.x_prev is None:
        raise MissingHistory(f"step t={state.t} needs the previous iterate")
    idx = next(state.stream)
    state.last_idx = idx
    g = problem.grad_selected(idx, state.x, state.counter)
    return _double_step(state, wp, g, schedule(state.t))


def _require_table(state):
    if state.table is None:
        raise TableUninitialized("gradient table has not been initialized")


def dec_saga_step(state, problem, wp, schedule):
    """DGD with the stochastic averaging gradient in place of the local gradient."""
    _check_weights(state, wp)
    _require_table(state)
    idx = next(state.stream)
    state.last_idx = idx
    ghat = state.table.averaging_gradient(problem, idx, state.x, state.counter)
    return _advance(state, wp.w @ state.x - schedule(state.t) * ghat, wp)


def dsa_step(state, problem, wp, schedule):
    """EXTRA recursion driven by stochastic averaging gradients.

    ``ghat^{t-1}`` comes from the state; recomputing it against the mutated
    table would give a different algorithm.
    """
    _check_weights(state, wp)
    _require_table(state)
    if state.t > 0 and state.x_prev is None:
        raise MissingHistory(f"step t={state.t} needs the previous iterate")
    idx = next(state.stream)
    state.last_idx = idx
    ghat = state.table.averaging_gradient(problem, idx, state.x, state.counter)
    return _double_step(state, wp, ghat, schedule(state.t))


def dsa_saddle_step(state, problem, wp, schedule):
    """Primal-dual form: ``x+ = x - a ghat - (I - W_t) x - U v``, then ``v+ = v + U x+``."""
    _check_weights(state, wp)
    _require_table(state)
    if state.v is None:
        raise MissingHistory("saddle form needs the dual variable v")
    alpha = schedule(state.t)
    idx = next(state.stream)
    state.last_idx = idx
    x = state.x
    ghat = state.table.averaging_gradient(problem, idx, x, state.counter)
    x_new = x - alpha * ghat - (x - wp.w_tilde @ x) - wp.u @ state.v
    state.v = state.v + wp.u @ x_new
    state.g_prev = ghat
    return _advance(state, x_new, wp)


STEPS = {
    "dgd": dgd_step,
    "extra": extra_step,
    "stochastic_extra": stochastic_extra_step,
    "dec_saga": dec_saga_step,
    "dsa": dsa_step,
    "dsa_saddle": dsa_saddle_step,
}


def step(state, problem, wp, schedule):
    return STEPS[state.algorithm](state, problem, wp, schedule)


@dataclass
class RunRecord:
    """Per-iteration trace; row ``t`` describes the state after ``t`` steps.

    ``grad_evals_cum`` counts instantaneous-gradient evaluations per node,
    including the table initialization of table-based methods.
    """

    algorithm: str
    alpha: float
    seed: int
    iterations: np.ndarray
    grad_evals_cum: np.ndarray
    comms_cum: np.ndarray
    metrics: dict = field(default_factory=dict)
    final_state: SolverState = field(default=None, repr=False)
    trajectory: list = field(default=None, repr=False)

    COLUMN_ORDER = ("error_e_t", "p_t", "lyapunov")

    @property
    def error(self):
        return self.metrics["error_e_t"]

    def first_below(self, threshold, key="error_e_t"):
        hits = np.flatnonzero(self.metrics[key] <= threshold)
        return int(hits[0]) if hits.size else None

    def columns(self):
        cols = [("iteration", self.iterations)]
        known = [k for k in self.COLUMN_ORDER if k in self.metrics]
        extra = sorted(k for k in self.metrics if k not in self.COLUMN_ORDER)
        cols += [(k, self.metrics[k]) for k in known + extra]
        cols += [("grad_evals_cum", self.grad_evals_cum), ("comms_cum", self.comms_cum)]
        return cols

    def to_csv(self, path):
        cols = self.columns()
        with open(path, "w", newline="\n", encoding="utf-8") as fh:
            fh.write(",".join(name for name, _ in cols) + "\n")
            for r in range(len(self.iterations)):
                fh.write(",".join(_fmt(vals[r]) for _, vals in cols) + "\n")

    @staticmethod
    def read_csv(path):
        with open(path, encoding="utf-8") as fh:
            header = fh.readline().strip().split(",")
            data = np.array([[float(v) for v in line.split(",")] for line in fh if line.strip()])
        if data.size == 0:
            data = data.reshape(0, len(header))
        return {name: data[:, k] for k, name in enumerate(header)}


def _fmt(v):
    if isinstance(v, (np.integer, int)):
        return str(int(v))
    return repr(float(v))


def run(algorithm, problem, wp, schedule, iterations, seed=0, x0=None, hooks=None,
        stream=None, track_dual=False, keep_trajectory=False):
    """Run ``iterations`` synchronous rounds and record metrics at every ``t``.

    ``hooks`` maps a column name to a pure function of the state; each is
    evaluated at ``t = 0..iterations``. Raises NonFinite as soon as an
    iterate stops being finite.
    """
    if iterations < 0:
        raise InvalidParam("iterations must be >= 0")
    if isinstance(schedule, (int, float)):
        schedule = StepSchedule(float(schedule))
    hooks = dict(hooks or {})
    state = init_state(algorithm, problem, x0, seed, stream, track_dual, wp)
    _check_weights(state, wp)
    step_fn = STEPS[algorithm]
    n_rows = iterations + 1
    evals = np.zeros(n_rows, dtype=np.int64)
    comms = np.zeros(n_rows, dtype=np.int64)
    metrics = {k: np.zeros(n_rows) for k in hooks}
    traj = [state.x.copy()] if keep_trajectory else None

    def record(r):
        evals[r] = state.counter.grad_evals.max()
        comms[r] = state.counter.comms
        for k, fn in hooks.items():
            metrics[k][r] = fn(state)

    record(0)
    for r in range(1, n_rows):
        # overflow is reported below as NonFinite, not as a numpy warning
        with np.errstate(over="ignore", invalid="ignore"):
            step_fn(state, problem, wp, schedule)
        if not np.isfinite(state.x).all():
            raise NonFinite(f"{algorithm} iterate became non-finite at t={state.t} (alpha={schedule.alpha})")
        record(r)
        if keep_trajectory:
            traj.append(state.x.copy())
    return RunRecord(
        algorithm=algorithm,
        alpha=schedule.alpha,
        seed=seed,
        iterations=np.arange(n_rows),
        grad_evals_cum=evals,
        comms_cum=comms,
        metrics=metrics,
        final_state=state,
        trajectory=traj,
    )
