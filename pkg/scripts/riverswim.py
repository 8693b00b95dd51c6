"""RiverSwim cumulative regret at a few checkpoints for all three agents.

    python scripts/riverswim.py --episodes 3000 --seeds 5 --out riverswim.csv
"""

import argparse

from delayed_psvi.delay import DelayDistribution
from delayed_psvi.harness import AgentConfig, EnvConfig, ExperimentConfig, cumulative_regret_at, run_experiment, write_metrics


def main():
    p = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--episodes", type=int, default=3000)
    p.add_argument("--seeds", type=int, default=5)
    p.add_argument("--delay", default="poisson:5")
    p.add_argument("--out", help="prefix for per-agent metrics CSVs")
    args = p.parse_args()

    K = args.episodes
    checkpoints = sorted({max(1, K // 10), K // 2, K})
    print("agent  " + "  ".join(f"R({k})" for k in checkpoints))
    for agent in ("psvi", "lpsvi", "ucbvi"):
        cfg = ExperimentConfig(env=EnvConfig(name="riverswim"), agent=AgentConfig(name=agent),
                               delay=DelayDistribution.parse(args.delay), episodes=K, seeds=tuple(range(args.seeds)))
        rows = run_experiment(cfg)
        if args.out:
            write_metrics(rows, f"{args.out}_{agent}.csv")
        print(f"{agent:<6} " + "  ".join(f"{cumulative_regret_at(rows, k):9.2f}" for k in checkpoints), flush=True)


if __name__ == "__main__":
    main()
