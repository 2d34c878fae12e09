"""A small regret experiment: how fast do learned rules approach the best rule?

Runs the Monte Carlo harness from ``configs/montecarlo.toml`` with few
replications and cheap oracle evaluation, so it finishes in seconds.
The full run uses the same code through ``ivpolicy montecarlo``.

    python3 demos/regret_mini.py [--reps 12]
"""

import argparse
import os

from ivpolicy.experiments import ExperimentConfig, run_montecarlo

CONFIG = os.path.join(os.path.dirname(__file__), "..", "configs", "montecarlo.toml")


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--reps", type=int, default=12)
    parser.add_argument("--threads", type=int, default=None)
    args = parser.parse_args()

    cfg = ExperimentConfig.from_toml(CONFIG)
    cfg.raw["montecarlo"].update(replications=args.reps, eval_draws=200_000,
                                 sizes=[250, 1000], directions=90)
    cfg.validate()
    curve = run_montecarlo(cfg, threads=args.threads)

    for r in curve.rows:
        print(f"{r['learner']:5s} n={r['n']:5d} regret={r['mean_regret']:.5f} "
              f"(se {r['se_regret']:.5f}) over budget in {r['violation_freq']:.0%}")
    print("log-log slopes:", {k: round(v, 2) for k, v in curve.slopes.items()})


if __name__ == "__main__":
    main()
