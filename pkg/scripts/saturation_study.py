"""Replicated saturation scans: spread of the fitted I_sat and R_inf over seeds."""

import argparse

import numpy as np

from hgpw.reproduce import DEFAULT_SEED, saturation_once


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--i-sat", type=float, default=90.0, help="generating I_sat (kW/cm^2)")
    ap.add_argument("--r-inf", type=float, default=160e3, help="generating R_inf (counts/s)")
    ap.add_argument("--seeds", type=int, default=50)
    ap.add_argument("--dwell", type=float, default=1.0)
    ap.add_argument("--seed", type=int, default=DEFAULT_SEED)
    args = ap.parse_args()

    fits = [saturation_once(args.i_sat, args.r_inf, (args.seed, k), dwell_s=args.dwell)
            for k in range(args.seeds)]
    v = np.array([f.values for f in fits])
    e = np.array([f.errors for f in fits])
    for j, (name, truth) in enumerate((("R_inf", args.r_inf), ("I_sat", args.i_sat))):
        pull = (v[:, j] - truth) / e[:, j]
        print(f"{name}: mean {v[:, j].mean():.4g}, scatter {v[:, j].std(ddof=1):.3g}, "
              f"mean fit error {e[:, j].mean():.3g}, pull rms {np.sqrt(np.mean(pull**2)):.2f}")


if __name__ == "__main__":
    main()
