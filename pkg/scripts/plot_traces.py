"""Plot e^t traces written by ``dsasim run`` or a ``topology-sweep`` table.

    python scripts/plot_traces.py out/comparison --x grad_evals_cum -o comparison_evals.png
    python scripts/plot_traces.py out/sweep/topology_sweep.csv -o sweep.png
"""

import argparse
import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from dsasim.solvers import RunRecord  # noqa: E402


def plot_runs(directory, x_col, ax):
    for path in sorted(Path(directory).glob("*_alpha=*.csv")):
        data = RunRecord.read_csv(path)
        e = data["error_e_t"]
        keep = e > 0
        ax.semilogy(data[x_col][keep], e[keep], label=path.stem.replace("_alpha=", " a="))
    ax.set_xlabel("iteration t" if x_col == "iteration" else "gradient evaluations per node")
    ax.set_ylabel("e^t")
    ax.legend()


def plot_sweep(path, ax):
    rows = list(csv.DictReader(open(path, encoding="utf-8")))
    topologies = list(dict.fromkeys(r["topology"] for r in rows))
    for k, topo in enumerate(topologies):
        hits = [r["iterations_to_threshold"] for r in rows if r["topology"] == topo]
        vals = [int(h) for h in hits if h != "not_reached"]
        ax.scatter([k] * len(vals), vals, color="C0")
        if len(vals) < len(hits):
            ax.scatter([k], [ax.get_ylim()[1] if vals else 1000], marker="^", color="C3")
    ax.set_xticks(range(len(topologies)), topologies)
    ax.set_ylabel("iterations to threshold (triangle: not reached)")


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("source", help="run output directory or topology_sweep.csv")
    ap.add_argument("--x", default="iteration", choices=("iteration", "grad_evals_cum"))
    ap.add_argument("-o", "--output", default="traces.png")
    args = ap.parse_args()
    fig, ax = plt.subplots(figsize=(7, 4.5))
    if Path(args.source).is_dir():
        plot_runs(args.source, args.x, ax)
    else:
        plot_sweep(args.source, ax)
    fig.tight_layout()
    fig.savefig(args.output, dpi=150)
    print(f"wrote {args.output}")


if __name__ == "__main__":
    main()
