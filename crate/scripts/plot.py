"""Render figures from gaitclone CLI outputs.

usage: python scripts/plot.py WORKDIR [OUTDIR]
"""

import sys
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import pandas as pd


def loss_curve(work: Path, out: Path) -> None:
    path = work / "loss_curve.csv"
    if not path.exists():
        return
    df = pd.read_csv(path)
    fig, ax = plt.subplots(figsize=(7, 4))
    for stage, g in df.groupby("stage"):
        ax.plot(g.epoch, g.train_loss, label=f"{stage} train")
        ax.plot(g.epoch, g.val_loss, "--", label=f"{stage} val")
    ax.set_yscale("log")
    ax.set_xlabel("epoch")
    ax.set_ylabel("L1 loss")
    ax.legend()
    fig.tight_layout()
    fig.savefig(out / "loss_curve.png", dpi=120)


def torque_traces(work: Path, out: Path) -> None:
    path = work / "eval" / "torque_traces.csv"
    if not path.exists():
        return
    df = pd.read_csv(path)
    fig, axes = plt.subplots(2, 1, figsize=(9, 5), sharex=True)
    for ax, joint in zip(axes, ["pk", "pa"]):
        ax.plot(df.t, df[f"tau_{joint}_pd"], label="PD")
        ax.plot(df.t, df[f"tau_{joint}_engine"], label="fixed-point DeltaGRU", alpha=0.8)
        ax.set_ylabel(f"tau_{joint} (N m)")
    axes[0].legend()
    axes[1].set_xlabel("t (s)")
    fig.tight_layout()
    fig.savefig(out / "torque_traces.png", dpi=120)


def phase_portraits(work: Path, out: Path) -> None:
    runs = sorted((work / "simulate").glob("*_*.csv"))
    runs = [r for r in runs if r.name != "rmse_table.csv"]
    if not runs:
        return
    fig, ax = plt.subplots(figsize=(6, 5))
    for r in runs:
        df = pd.read_csv(r)
        ax.plot(df.th_a_pk, df.dth_a_pk, lw=0.5, label=r.stem)
    ax.set_xlabel("knee angle (rad)")
    ax.set_ylabel("knee velocity (rad/s)")
    ax.legend()
    fig.tight_layout()
    fig.savefig(out / "phase_portraits.png", dpi=120)


def main() -> None:
    if len(sys.argv) < 2:
        sys.exit(__doc__)
    work = Path(sys.argv[1])
    out = Path(sys.argv[2]) if len(sys.argv) > 2 else work / "figures"
    out.mkdir(parents=True, exist_ok=True)
    loss_curve(work, out)
    torque_traces(work, out)
    phase_portraits(work, out)
    print(f"wrote figures to {out}")


if __name__ == "__main__":
    main()
