"""Final-energy deviation from a fine-step reference as the Trotter step count grows.

    python scripts/trotter_scaling.py --steps 25 50 100 200 --reference 800
"""

import argparse

import numpy as np

from hubbard_cd import lattice
from hubbard_cd.evolve import ADIABATIC_CD, VARIANTS, EvolutionPlan, run_evolution
from hubbard_cd.fermion import build_hamiltonians


def final_energy(lat, hams, variant, n, T):
    return run_evolution(EvolutionPlan(variant, n, T / n), lat, hams, record_every=n).e_final


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--T", type=float, default=1.0)
    ap.add_argument("--steps", type=int, nargs="+", default=[25, 50, 100, 200])
    ap.add_argument("--reference", type=int, default=800)
    ap.add_argument("--variant", choices=VARIANTS, default=ADIABATIC_CD)
    args = ap.parse_args()

    lat = lattice.build(1, 1)
    hams = build_hamiltonians(lat)
    ref = final_energy(lat, hams, args.variant, args.reference, args.T)
    ns = np.array(args.steps)
    errs = np.array([abs(final_energy(lat, hams, args.variant, int(n), args.T) - ref) for n in ns])
    for n, e in zip(ns, errs):
        print(f"N={n:5d}  |E_N - E_ref| = {e:.3e}")
    print("local slopes:", np.round(np.log2(errs[:-1] / errs[1:]) / np.log2(ns[1:] / ns[:-1]), 3))
    print(f"fitted log-log slope: {np.polyfit(np.log(ns), np.log(errs), 1)[0]:.3f}")


if __name__ == "__main__":
    main()
