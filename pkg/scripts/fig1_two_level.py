"""Two-level protocol figure: field components for h = h0, h = 2 h0 and y-axis driving.

Usage: python scripts/fig1_two_level.py [--tf 1] [--out figures]
"""
import argparse
from pathlib import Path

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from stadyn import twolevel as tl  # noqa: E402
from stadyn.propagate import TimeGrid  # noqa: E402


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--tf", type=float, default=1.0)
    ap.add_argument("--steps", type=int, default=2000)
    ap.add_argument("--out", default="figures")
    args = ap.parse_args()

    grid = TimeGrid(0.0, args.tf, args.steps)
    sched = tl.polynomial_theta(0.0, np.pi / 2, grid)
    h0 = tl.threshold_field(0.0, np.pi / 2, args.tf)
    panels = [("h = h0", tl.field_from_invariant(sched, h0)),
              ("h = 2 h0", tl.field_from_invariant(sched, 2 * h0)),
              ("y-axis", tl.y_axis_protocol(sched))]

    fig, axes = plt.subplots(1, 3, figsize=(12, 3.5), sharey=True)
    t = grid.times / args.tf
    for ax, (title, proto) in zip(axes, panels):
        f = proto.field(grid.times) / h0
        for k, name in enumerate("xyz"):
            ax.plot(t, f[:, k], label=f"h n_{name} / h0")
        rep = tl.verify_protocol(proto, sched)
        ax.set_title(f"{title}  (1 - F = {1 - rep.fidelity_min:.1e})")
        ax.set_xlabel("t / tf")
    axes[0].legend()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    fig.tight_layout()
    fig.savefig(out / "fig1_two_level.png", dpi=150)
    print(f"h0 = {h0:.12g}; wrote {out / 'fig1_two_level.png'}")


if __name__ == "__main__":
    main()
