"""Distortion against the number of subcarriers for a fixed discrete-time channel.

The channel is drawn once at ``--channel-M`` so that only M changes along the
sweep.  With the perfect-reconstruction pulse the distortion falls by 4^K per
doubling; with PHYDYAS it levels off at the 2*delta floor.
"""

import argparse

import numpy as np

from fbmc_forge.sim import ExperimentConfig, sweep


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--M", type=int, nargs="+", default=[64, 128, 256, 512])
    ap.add_argument("--K", type=int, default=1)
    ap.add_argument("--pulse", default="pr_sine", choices=["pr_sine", "phydyas"])
    ap.add_argument("--channel-M", type=int, default=64)
    ap.add_argument("--trials", type=int, default=8)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", default="results/m_sweep")
    args = ap.parse_args()

    cfg = ExperimentConfig(M=args.M[0], N=60, K_T=args.K, K_R=args.K, pulse=args.pulse, trials=args.trials,
                           channel_M=args.channel_M, master_seed=args.seed)
    _, rows = sweep(cfg, "M", args.M, out_dir=f"{args.out}/{args.pulse}_K{args.K}")
    prev = None
    for M in args.M:
        th = np.mean([float(r[3]) for r in rows if r[1] == M])
        em = np.mean([float(r[4]) for r in rows if r[1] == M])
        ratio = "" if prev is None else f"  ratio {prev / em:.2f}"
        print(f"M={M:5d}  mean P_e theory {th:.3e}  simulated {em:.3e}{ratio}")
        prev = em


if __name__ == "__main__":
    main()
