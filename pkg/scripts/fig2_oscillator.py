"""Harmonic trap expansion figure: omega^2(t) for the polynomial scale factor.

One panel per omega0 * tf, one curve per omegaf / omega0.
Usage: python scripts/fig2_oscillator.py [--out figures]
"""
import argparse
from pathlib import Path

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from stadyn import oscillator as osc  # noqa: E402
from stadyn.propagate import TimeGrid  # noqa: E402


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--nodes", type=int, default=2001)
    ap.add_argument("--out", default="figures")
    args = ap.parse_args()

    fig, axes = plt.subplots(1, len(osc.FIG_OMEGA0_TF), figsize=(12, 3.5))
    for ax, wt in zip(axes, osc.FIG_OMEGA0_TF):
        for r in osc.FIG_RATIOS:
            sol = osc.polynomial_b(1.0, r, TimeGrid(0.0, wt, args.nodes - 1))
            proto = osc.omega_from_b(sol)
            tag = " (negative)" if proto.negative else ""
            ax.plot(sol.grid.times / wt, proto.omega_sq, label=f"omegaf/omega0 = {r:g}{tag}")
        ax.axhline(0.0, color="k", lw=0.5)
        ax.set_title(f"omega0 tf = {wt:g}")
        ax.set_xlabel("t / tf")
        ax.set_ylabel("omega^2 / omega0^2")
        ax.legend(fontsize=7)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    fig.tight_layout()
    fig.savefig(out / "fig2_oscillator.png", dpi=150)
    print(f"wrote {out / 'fig2_oscillator.png'}")


if __name__ == "__main__":
    main()
