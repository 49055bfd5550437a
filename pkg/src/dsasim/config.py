"""Experiment configuration: dataclasses plus a flat dotted ``key = value`` format.

Example::

    iterations = 2000
    seed = 1
    problem.total_samples = 500
    graph.kind = random
    graph.p_c = 0.3
    algo.1.name = dsa
    algo.1.alpha = 5e-3

Lines starting with ``#`` are comments. Unknown keys and malformed values
raise ConfigError.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, fields

from .errors import ConfigError
from .solvers import ALGORITHMS
from .topology import DEFAULT_TAU_FACTOR, GRAPH_KINDS

FAMILIES = ("logistic", "quadratic")
DEFAULT_TOPOLOGIES = ("complete", "random:0.3", "random:0.2", "cycle", "line", "star")


@dataclass
class ProblemConfig:
    family: str = "logistic"
    total_samples: int = 500
    dim: int = 2
    lam: float = 1e-4
    mean: float = 2.0
    std_plus: float = 2.0
    std_minus: float = 2.0
    scale: float = 1.0  # quadratic targets only
    seed: int = 0


@dataclass
class GraphConfig:
    kind: str = "random"
    n_nodes: int = 20
    p_c: float = 0.3
    tau_factor: float = DEFAULT_TAU_FACTOR
    seed: int = 0


@dataclass
class AlgoConfig:
    name: str
    alpha: float
    schedule: str = "constant"
    decay: float = 0.0

    @property
    def label(self):
        return f"{self.name}_alpha={self.alpha!r}"


@dataclass
class MetricsConfig:
    p_t: bool = False
    lyapunov: bool = False
    lyapunov_c: float = None  # None: the default c


@dataclass
class SweepConfig:
    topologies: tuple = DEFAULT_TOPOLOGIES
    threshold: float = 1e-6
    seeds: tuple = (0, 1, 2, 3, 4)
    algorithm: str = "dsa"
    alpha: float = 0.04


@dataclass
class ExperimentConfig:
    iterations: int = 2000
    seed: int = 1
    output_dir: str = "out"
    problem: ProblemConfig = field(default_factory=ProblemConfig)
    graph: GraphConfig = field(default_factory=GraphConfig)
    algos: list = field(default_factory=list)
    metrics: MetricsConfig = field(default_factory=MetricsConfig)
    sweep: SweepConfig = field(default_factory=SweepConfig)

    def validate(self):
        p, g = self.problem, self.graph
        _require(self.iterations >= 0, "iterations must be >= 0")
        _require(p.family in FAMILIES, f"problem.family must be one of {FAMILIES}")
        _require(p.total_samples >= 1 and p.dim >= 1, "problem.total_samples and problem.dim must be >= 1")
        _require(p.lam >= 0, "problem.lam must be >= 0")
        _require(p.std_plus > 0 and p.std_minus > 0, "problem standard deviations must be positive")
        _require(g.kind in GRAPH_KINDS, f"graph.kind must be one of {GRAPH_KINDS}")
        _require(g.n_nodes >= 1, "graph.n_nodes must be >= 1")
        _require(0 < g.p_c <= 1, "graph.p_c must lie in (0, 1]")
        _require(g.tau_factor > 0.5, "graph.tau_factor must exceed 1/2")
        _require(p.total_samples % g.n_nodes == 0, "problem.total_samples must be divisible by graph.n_nodes")
        for a in self.algos:
            _require(a.name in ALGORITHMS, f"unknown algorithm {a.name!r}")
            _require(math.isfinite(a.alpha) and a.alpha > 0, f"{a.name}: alpha must be finite and positive")
            _require(a.schedule in ("constant", "diminishing"), f"{a.name}: unknown schedule {a.schedule!r}")
        s = self.sweep
        _require(math.isfinite(s.threshold) and s.threshold > 0, "sweep.threshold must be finite and positive")
        _require(s.algorithm in ALGORITHMS, f"unknown sweep algorithm {s.algorithm!r}")
        _require(math.isfinite(s.alpha) and s.alpha > 0, "sweep.alpha must be finite and positive")
        for t in s.topologies:
            parse_topology(t)
        return self

    def to_dict(self):
        d = asdict(self)
        d["sweep"]["topologies"] = list(self.sweep.topologies)
        d["sweep"]["seeds"] = list(self.sweep.seeds)
        return d

    @classmethod
    def from_dict(cls, d):
        try:
            cfg = cls(
                iterations=int(d["iterations"]),
                seed=int(d["seed"]),
                output_dir=str(d["output_dir"]),
                problem=ProblemConfig(**d["problem"]),
                graph=GraphConfig(**d["graph"]),
                algos=[AlgoConfig(**a) for a in d["algos"]],
                metrics=MetricsConfig(**d["metrics"]),
                sweep=SweepConfig(**{**d["sweep"], "topologies": tuple(d["sweep"]["topologies"]),
                                     "seeds": tuple(d["sweep"]["seeds"])}),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"invalid manifest config: {exc}") from exc
        return cfg.validate()


def _require(cond, msg):
    if not cond:
        raise ConfigError(msg)


def parse_topology(spec):
    """``"random:0.3"`` -> ``("random", 0.3)``; other kinds carry ``None``."""
    kind, _, arg = str(spec).partition(":")
    kind = kind.strip()
    if kind not in GRAPH_KINDS:
        raise ConfigError(f"unknown topology {spec!r}")
    if kind == "random":
        try:
            p_c = float(arg)
        except ValueError:
            raise ConfigError(f"random topology needs a probability, e.g. 'random:0.3', got {spec!r}") from None
        if not 0 < p_c <= 1:
            raise ConfigError(f"edge probability in {spec!r} must lie in (0, 1]")
        return kind, p_c
    if arg:
        raise ConfigError(f"topology {kind!r} takes no argument")
    return kind, None


def _parse_bool(text):
    low = text.lower()
    if low in ("true", "yes", "1", "on"):
        return True
    if low in ("false", "no", "0", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _parse_optional_float(text):
    return None if text.lower() in ("none", "") else float(text)


def _converter(tp):
    if tp in (bool, "bool"):
        return _parse_bool
    if tp in (int, "int"):
        return int
    if tp in (float, "float"):
        return float
    if tp == "tuple" or tp is tuple:
        return None
    return str


def _coerce(obj, name, text, key):
    if name in {"topologies", "seeds"}:
        items = tuple(s.strip() for s in text.split(",") if s.strip())
        return items if name == "topologies" else tuple(int(s) for s in items)
    if isinstance(obj, MetricsConfig) and name == "lyapunov_c":
        return _parse_optional_float(text)
    ftype = {f.name: f.type for f in fields(obj)}.get(name)
    if ftype is None:
        raise ConfigError(f"unknown key {key!r}")
    return _converter(ftype)(text)


def parse_config(text):
    """Parse the flat format into a validated ExperimentConfig."""
    cfg = ExperimentConfig()
    algos = {}
    sections = {"problem": cfg.problem, "graph": cfg.graph, "metrics": cfg.metrics, "sweep": cfg.sweep}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not sep or not key:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        parts = key.split(".")
        try:
            if len(parts) == 1 and parts[0] in ("iterations", "seed", "output_dir"):
                setattr(cfg, parts[0], str(value) if parts[0] == "output_dir" else int(value))
            elif len(parts) == 2 and parts[0] in sections:
                setattr(sections[parts[0]], parts[1], _coerce(sections[parts[0]], parts[1], value, key))
            elif len(parts) == 3 and parts[0] == "algo":
                entry = algos.setdefault(parts[1], {})
                if parts[2] not in ("name", "alpha", "schedule", "decay"):
                    raise ConfigError(f"unknown key {key!r}")
                entry[parts[2]] = value if parts[2] in ("name", "schedule") else float(value)
            else:
                raise ConfigError(f"unknown key {key!r}")
        except ValueError as exc:
            raise ConfigError(f"line {lineno}: bad value for {key!r}: {exc}") from None
    for label in sorted(algos, key=_algo_order):
        entry = algos[label]
        if "name" not in entry or "alpha" not in entry:
            raise ConfigError(f"algo.{label} needs both name and alpha")
        cfg.algos.append(AlgoConfig(**entry))
    return cfg.validate()


def _algo_order(label):
    return (0, int(label), "") if label.isdigit() else (1, 0, label)


def load_config(path):
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config(text)
