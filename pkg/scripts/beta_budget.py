"""Coupling efficiency from a budget file, with the variance split and a sampling check."""

import argparse

from hgpw.coupling import CouplingBudget, beta_from_measurement, beta_monte_carlo
from hgpw.io import read_budget


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("budget", nargs="?", help="INI with [tau_ns] [alpha] [r_inf] [eta] value/sigma")
    ap.add_argument("--samples", type=int, default=200_000)
    args = ap.parse_args()

    budget = read_budget(args.budget) if args.budget else CouplingBudget.reference()
    res = beta_from_measurement(budget)
    print(f"beta = {res.beta:.4f} +- {res.sigma:.4f}" + ("  (unphysical)" if res.unphysical else ""))
    total = sum(res.contributions.values())
    for name, c in sorted(res.contributions.items(), key=lambda kv: -kv[1]):
        print(f"  {name:7s} {100 * c / total:5.1f}% of the variance")
    mean, std = beta_monte_carlo(budget, args.samples)
    print(f"sampled: {mean:.4f} +- {std:.4f}")


if __name__ == "__main__":
    main()
