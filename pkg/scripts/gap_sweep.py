"""Effective index, propagation length and energy split of the hybrid mode versus gap width."""

import argparse

from hgpw.geometry import CrossSection
from hgpw.io import write_sweep
from hgpw.modesolver import gap_sweep, sweep_table


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--gaps", type=float, nargs="+", default=[100, 200, 300, 500, 1000])
    ap.add_argument("--mesh", default="default", choices=["coarse", "default", "fine"])
    ap.add_argument("--wavelength", type=float, default=785.0)
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--out", help="CSV path")
    args = ap.parse_args()

    rows = gap_sweep(CrossSection(), args.gaps, args.wavelength, args.mesh, workers=args.workers)
    print(f"{'gap':>6} {'Re n':>8} {'Im n':>10} {'L (um)':>8} {'core':>6} {'gap':>6} {'metal':>6}")
    for r in rows:
        f = r.fractions
        print(f"{r.gap:6.0f} {r.n_eff.real:8.4f} {r.n_eff.imag:10.2e} {r.length_um:8.2f} "
              f"{f['core']:6.3f} {f['gap']:6.3f} {f['metal']:6.3f}")
    if args.out:
        write_sweep(sweep_table(rows), args.out)


if __name__ == "__main__":
    main()
