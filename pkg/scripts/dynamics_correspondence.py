"""Quantum vs classical moments after evolving one Gaussian under each preset Hamiltonian."""

import argparse
import csv
import math
import sys

from nobroadcast import dynamics as dyn
from nobroadcast import phase_space as ps


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--schedule", default="0.2,0.1,0.05")
    ap.add_argument("--t-final", type=float, default=math.pi / 2)
    ap.add_argument("--hamiltonians", default="free,harmonic,quartic")
    args = ap.parse_args()
    schedule = [float(h) for h in args.schedule.split(",")]

    # a box of half-width 8 holds the freely spreading packet up to t = pi/2
    P0 = ps.PhaseSpaceDistribution.gaussian(center=(2.0, 0.5), sigma=0.5, nodes=105, extent=8.0)
    out = csv.writer(sys.stdout)
    out.writerow(("hamiltonian",) + dyn.CorrespondenceRow.CSV_FIELDS + ("fock_dim",))
    for name in args.hamiltonians.split(","):
        H = dyn.PolynomialHamiltonian.preset(name)
        for r in dyn.correspondence_report(P0, H, schedule, args.t_final, fock_margin=20):
            out.writerow((name,) + tuple(repr(getattr(r, f)) for f in dyn.CorrespondenceRow.CSV_FIELDS)
                         + (r.fock_dim,))
    return 0


if __name__ == "__main__":
    sys.exit(main())
