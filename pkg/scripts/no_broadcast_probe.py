"""Search for a broadcaster of two sources and report the residual floor per restart.

    python3 scripts/no_broadcast_probe.py --restarts 20 --max-evals 30000 --seed 7
"""

import argparse
import csv
import sys

from nobroadcast import broadcasting as bc
from nobroadcast import quantum_state as qs


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seed", type=int, default=7)
    ap.add_argument("--restarts", type=int, default=20)
    ap.add_argument("--max-evals", type=int, default=30_000)
    ap.add_argument("--machine-dim", type=int, default=4)
    args = ap.parse_args()

    task = bc.BroadcastTask.with_defaults([qs.basis_state(0, 2), qs.pure([1.0, 1.0])], args.machine_dim)
    cfg = bc.OptimizerConfig(seed=args.seed, restarts=args.restarts, max_evals=args.max_evals)
    result, summary = bc.probe_no_broadcast(task, cfg)

    out = csv.writer(sys.stdout)
    out.writerow(("restart", "residual"))
    for k, r in enumerate(summary.restart_residuals):
        out.writerow((k, repr(r)))
    print(f"# floor {summary.floor!r} (restart {result.best_restart}); "
          f"{summary.in_window} certified unitaries, min gap {summary.min_gap_in_window:.4f}, "
          f"violations {summary.violations}", file=sys.stderr)
    return 0 if summary.floor > 1e-3 and summary.no_broadcast else 1


if __name__ == "__main__":
    sys.exit(main())
