"""Final energy and error of adiabatic, CD-assisted and CD-only evolution
over a range of total times.

    python scripts/energy_vs_time.py --times 0.5 1 1.5 2 5 10 -o results/energy_vs_time.csv
"""

import argparse
import csv

from hubbard_cd import lattice
from hubbard_cd.evolve import VARIANTS, EvolutionPlan, energy_error, run_evolution
from hubbard_cd.fermion import build_hamiltonians
from hubbard_cd.oracle import reference_energy


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--nx", type=int, default=1)
    ap.add_argument("--ny", type=int, default=1)
    ap.add_argument("--u", type=float, default=1.5)
    ap.add_argument("--dt", type=float, default=0.02)
    ap.add_argument("--times", type=float, nargs="+", default=[0.25 * k for k in range(1, 21)])
    ap.add_argument("--variants", nargs="+", choices=VARIANTS, default=list(VARIANTS))
    ap.add_argument("-o", "--output", default="energy_vs_time.csv")
    args = ap.parse_args()

    lat = lattice.build(args.nx, args.ny)
    hams = build_hamiltonians(lat, 1.0, args.u)
    e0 = reference_energy(lat, hams)
    with open(args.output, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["variant", "T", "N", "energy", "delta_e_pct", "e_ground"])
        for T in args.times:
            n = max(1, round(T / args.dt))
            for v in args.variants:
                r = run_evolution(EvolutionPlan(v, n, args.dt), lat, hams, record_every=n)
                de = energy_error(r.e_final, e0, r.e_initial)
                w.writerow([v, n * args.dt, n, r.e_final, de, e0])
                print(f"{v:13s} T={n * args.dt:6.2f}  E={r.e_final:.6f}  dE={de:7.3f}%")


if __name__ == "__main__":
    main()
