"""Train both ansatze over several seeds and write per-iteration medians.

    python scripts/vqa_training.py --seeds 10 --max-iter 300
    python scripts/vqa_training.py --noise bit_flip --p 0.01 --max-iter 150
"""

import argparse
import csv

import numpy as np

from hubbard_cd import lattice
from hubbard_cd.cli import threads
from hubbard_cd.fermion import build_hamiltonians
from hubbard_cd.statevec import CHANNELS, NoiseModel
from hubbard_cd.vqa import CD_INSPIRED, EXACT, HV, NOISY, PATHWISE, CostConfig, TrainConfig, train_many, write_traces


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--nx", type=int, default=1)
    ap.add_argument("--ny", type=int, default=1)
    ap.add_argument("--seeds", type=int, default=10)
    ap.add_argument("--max-iter", type=int, default=300)
    ap.add_argument("--eta", type=float, default=0.05)
    ap.add_argument("--noise", choices=CHANNELS)
    ap.add_argument("--p", type=float, default=0.01)
    ap.add_argument("--trajectories", type=int, default=100)
    ap.add_argument("--prefix", default="vqa")
    args = ap.parse_args()

    lat = lattice.build(args.nx, args.ny)
    hams = build_hamiltonians(lat)
    if args.noise:
        cost = CostConfig(NOISY, noise=NoiseModel(args.noise, args.p), trajectories=args.trajectories, gradient=PATHWISE)
    else:
        cost = CostConfig(EXACT)
    configs = [TrainConfig(args.eta, args.max_iter, s, cost=cost) for s in range(args.seeds)]
    with open(f"{args.prefix}_median.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["ansatz", "iteration", "median", "q25", "q75"])
        for kind in (HV, CD_INSPIRED):
            traces = train_many(kind, lat, hams, configs, workers=min(threads(), args.seeds))
            write_traces(traces, f"{args.prefix}_{kind}_traces.csv")
            e = np.array([t.energies for t in traces])
            for it, col in enumerate(e.T):
                q25, med, q75 = np.percentile(col, [25, 50, 75])
                w.writerow([kind, it, med, q25, q75])
            print(f"{kind:12s} median final energy {np.median(e[:, -1]):.6f}")


if __name__ == "__main__":
    main()
