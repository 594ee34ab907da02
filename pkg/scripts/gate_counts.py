"""Basic-gate counts per Trotter step and per ansatz layer, as JSON.

    python scripts/gate_counts.py --nx 1 --ny 2
"""

import argparse
import json

from hubbard_cd.cli import ExperimentConfig, count_gates


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--nx", type=int, default=1)
    ap.add_argument("--ny", type=int, default=1)
    ap.add_argument("--layers", type=int, default=1)
    args = ap.parse_args()
    rep = count_gates(ExperimentConfig(nx=args.nx, ny=args.ny, layers=args.layers).resolve())
    print(json.dumps(rep, indent=2, default=int))


if __name__ == "__main__":
    main()
