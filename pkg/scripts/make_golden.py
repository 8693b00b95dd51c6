"""Regenerate the pinned determinism fixture under tests/data.

Only rerun this after an intentional change to the sampling order or the
numerics; the acceptance suite compares against the committed bytes.
"""

from pathlib import Path

from delayed_psvi.delay import DelayDistribution
from delayed_psvi.harness import AgentConfig, EnvConfig, ExperimentConfig, run_experiment, save_config, write_metrics

DATA = Path(__file__).resolve().parents[1] / "tests" / "data"

GOLDEN = ExperimentConfig(
    env=EnvConfig(name="synthetic", num_actions=20, alpha_seed=3),
    agent=AgentConfig(name="lpsvi", N=20),
    delay=DelayDistribution.poisson(5),
    episodes=60,
    horizon=10,
    seeds=(0, 1),
)


def main():
    DATA.mkdir(parents=True, exist_ok=True)
    save_config(GOLDEN, DATA / "golden_config.json")
    write_metrics(run_experiment(GOLDEN), DATA / "golden_metrics.csv")
    print(f"wrote {DATA / 'golden_metrics.csv'}")


if __name__ == "__main__":
    main()
