"""Quantum moment integrals of P-constructed states against their classical limit.

Sweeps hbar for moment orders 2 and 3 on identical unit Gaussians and adds
the relative-entropy column S(rho1|rho2) vs KL for two displaced Gaussians.
"""

import argparse
import csv
import sys

from nobroadcast import phase_space as ps


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--schedule", default="1,0.5,0.25,0.125,0.0625")
    ap.add_argument("--grid", type=int, default=129)
    args = ap.parse_args()
    schedule = [float(h) for h in args.schedule.split(",")]

    unit = ps.PhaseSpaceDistribution.gaussian(sigma=1.0, nodes=args.grid)
    out = csv.writer(sys.stdout)
    out.writerow(("n", "hbar", "quantum", "classical", "rel_error", "fock_dim"))
    for n in (2, 3):
        for r in ps.hbar_sweep(unit, unit, n, schedule):
            out.writerow((n, r.hbar, repr(r.quantum), repr(r.classical), repr(r.rel_error), r.fock_dim))

    a = ps.PhaseSpaceDistribution.gaussian(center=(0.5, 0.0), sigma=1.0, nodes=args.grid, extent=7.0)
    b = ps.PhaseSpaceDistribution.gaussian(center=(-0.5, 0.2), sigma=1.2, nodes=args.grid, extent=7.0)
    print()
    out.writerow(("hbar", "quantum_entropy", "classical_entropy"))
    for h, s, kl in ps.entropy_limit_sweep(a, b, schedule):
        out.writerow((h, repr(s), repr(kl)))
    return 0


if __name__ == "__main__":
    sys.exit(main())
