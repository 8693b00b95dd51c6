"""Synthetic linear MDP grid: converged return per agent and delay.

    python scripts/synthetic_grid.py --episodes 5000 --seeds 10 [--reward-mode tabular-override --alpha-seed 6]
"""

import argparse
import time

from delayed_psvi.delay import DelayDistribution
from delayed_psvi.harness import AgentConfig, EnvConfig, ExperimentConfig, converged_return, optimal_value, run_experiment

DELAYS = {
    "multinomial": DelayDistribution.multinomial([10, 20, 30], [0.5, 0.3, 0.2]),
    "poisson": DelayDistribution.poisson(50),
    "lomax": DelayDistribution.pareto(1.0, 500),
}


def main():
    p = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--episodes", type=int, default=5000)
    p.add_argument("--seeds", type=int, default=10)
    p.add_argument("--alpha-seed", type=int, default=0)
    p.add_argument("--reward-mode", default="feature", choices=("feature", "tabular-override"))
    p.add_argument("--agents", nargs="+", default=["psvi", "lpsvi", "ucbvi"])
    p.add_argument("--delays", nargs="+", default=list(DELAYS), choices=list(DELAYS))
    args = p.parse_args()

    env = EnvConfig(alpha_seed=args.alpha_seed, reward_mode=args.reward_mode)
    print(f"{'delay':<12} {'agent':<6} {'return':>8} {'ratio':>6} {'secs':>6}")
    for dname in args.delays:
        for agent in args.agents:
            cfg = ExperimentConfig(env=env, agent=AgentConfig(name=agent), delay=DELAYS[dname],
                                   episodes=args.episodes, seeds=tuple(range(args.seeds)))
            t0 = time.perf_counter()
            rows = run_experiment(cfg)
            ret, v_star = converged_return(rows), optimal_value(cfg)
            print(f"{dname:<12} {agent:<6} {ret:8.3f} {ret / v_star:6.3f} {time.perf_counter() - t0:6.1f}", flush=True)
    print(f"V* = {v_star:.4f}")


if __name__ == "__main__":
    main()
