"""End-to-end training on benchmark environment I.

Generates a small offline dataset from a uniform behavior policy, fits the
quadratic Q-model by minimizing the kernel U-statistic loss, and compares
Monte Carlo returns of the learned policy against the behavior policy.

Uses a reduced iteration budget so the demo finishes in a few seconds;
pass --full for the complete 20000-iteration run (about half a minute).

Run:  python3 demos/train_env1.py [--full]
"""

import argparse
import time

import numpy as np

from quasiopt.envs import EnvSpec, env_reset, env_step, generate_dataset
from quasiopt.evaluate import evaluate_policy
from quasiopt.model import ModelConfig, radial_grid_basis
from quasiopt.train import TrainConfig, train_full


def behavior_mean(spec, n_rollouts=100, horizon=100, gamma=0.9, seed=0):
    out = []
    for st in np.random.SeedSequence(seed).spawn(n_rollouts):
        rng = np.random.default_rng(st)
        s = env_reset(spec, rng)
        total, disc = 0.0, 1.0
        for _ in range(horizon):
            s, r = env_step(spec, s, float(rng.uniform(0, 1)), rng)
            total += disc * r
            disc *= gamma
        out.append(total)
    return float(np.mean(out))


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--full", action="store_true",
                    help="use the full 20000-iteration budget")
    args = ap.parse_args()

    spec = EnvSpec("I")
    dataset = generate_dataset(spec, n=25, T=24, seed=0)
    model = ModelConfig(mu=0.1, gamma=0.9, basis=radial_grid_basis(2),
                        cap=5.0)
    train = TrainConfig(alpha0=0.002, decay=1e-4, batch_size=5,
                        max_iters=20_000 if args.full else 3000,
                        n_inits=200, seed=0)

    t0 = time.perf_counter()
    params, report, _ = train_full(dataset, model, train)
    elapsed = time.perf_counter() - t0
    print(f"trained {report.n_iters} iterations in {elapsed:.1f} s "
          f"(final loss {report.losses[-1]:.3f})")

    learned = evaluate_policy(spec, params, model, n_rollouts=100,
                              horizon=100, seed=1)
    base = behavior_mean(spec, seed=2)
    print(f"learned policy mean return : {learned.mean:7.2f} "
          f"(sd {learned.sd:.2f})")
    print(f"behavior policy mean return: {base:7.2f}")


if __name__ == "__main__":
    main()
