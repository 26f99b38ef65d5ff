"""Monte-Carlo policy evaluation, return-distribution reporting, screening
weight cross-validation and sensitivity sweeps."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .data import Dataset
from .envs import EnvSpec, env_reset, env_step
from .model import ModelConfig, ModelParams, sample_action, value
from .train import TrainConfig, train_full

__all__ = ["EvalReport", "CvReport", "mc_rollout", "evaluate_policy",
           "cv_criterion", "cross_validate_mu", "sensitivity_sweep",
           "SWEEP_COLUMNS"]

_QUANTILES = (5, 25, 50, 75, 95)

SWEEP_COLUMNS = ("mu", "mean_return", "sd_return", "n_seeds")


@dataclass(frozen=True)
class EvalReport:
    """Per-rollout discounted returns with summary statistics."""

    returns: np.ndarray
    mean: float
    sd: float
    quantiles: dict
    horizon: int
    gamma: float
    seed: int
    return_bound: float  # max |reward| seen * (1 - gamma^horizon)/(1 - gamma)


@dataclass(frozen=True)
class CvReport:
    mu_grid: tuple
    criteria: tuple
    selected_mu: float
    selected_params: ModelParams


def _rollout(env_spec: EnvSpec, params: ModelParams,
             model_config: ModelConfig, horizon: int,
             rng: np.random.Generator) -> tuple[float, float]:
    """Discounted return of one rollout plus the largest |reward| seen."""
    gamma = model_config.gamma
    s = env_reset(env_spec, rng)
    total = 0.0
    max_abs_r = 0.0
    disc = 1.0
    for _ in range(horizon):
        a = sample_action(s, params, model_config.basis, model_config.mu, rng)
        if env_spec.bounded_actions:
            a = float(np.clip(a, *env_spec.action_range))
        s, r = env_step(env_spec, s, a, rng)
        total += disc * r
        max_abs_r = max(max_abs_r, abs(r))
        disc *= gamma
    return total, max_abs_r


def mc_rollout(env_spec: EnvSpec, params: ModelParams,
               model_config: ModelConfig, horizon: int,
               rng: np.random.Generator) -> float:
    """One rollout's discounted return, actions drawn from the learned policy
    by rejection sampling."""
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    return _rollout(env_spec, params, model_config, horizon, rng)[0]


def evaluate_policy(env_spec: EnvSpec, params: ModelParams,
                    model_config: ModelConfig, n_rollouts: int = 100,
                    horizon: int = 100, seed: int = 0) -> EvalReport:
    """n_rollouts independent rollouts, each on its own generator stream."""
    if n_rollouts < 1:
        raise ValueError("n_rollouts must be >= 1")
    streams = np.random.SeedSequence(seed).spawn(n_rollouts)
    results = [
        _rollout(env_spec, params, model_config, horizon,
                 np.random.default_rng(streams[i]))
        for i in range(n_rollouts)]
    returns = np.array([r[0] for r in results])
    max_abs_r = max(r[1] for r in results)
    gamma = model_config.gamma
    geo = (1.0 - gamma ** horizon) / (1.0 - gamma) if gamma < 1 else horizon
    bound = max_abs_r * geo
    assert np.all(np.abs(returns) <= bound + 1e-9), \
        "discounted return exceeds its geometric bound"
    return EvalReport(
        returns=returns, mean=float(returns.mean()),
        sd=float(returns.std(ddof=1)) if n_rollouts > 1 else 0.0,
        quantiles={q: float(np.percentile(returns, q)) for q in _QUANTILES},
        horizon=horizon, gamma=gamma, seed=seed, return_bound=float(bound))


def cv_criterion(dataset: Dataset, params: ModelParams,
                 model_config: ModelConfig) -> float:
    """Mean fitted value on the trajectories' initial states, penalized by
    mu / (1 - gamma)."""
    v0 = value(dataset.states[:, 0, :], params, model_config.basis,
               model_config.mu)
    return float(np.mean(v0)) - model_config.mu / (1.0 - model_config.gamma)


DEFAULT_MU_GRID = (0.01, 0.05, 0.1, 0.2, 0.3, 0.5)


def cross_validate_mu(dataset: Dataset, mu_grid, model_config: ModelConfig,
                      train_config: TrainConfig,
                      bandwidth: float | None = None) -> CvReport:
    """Train once per candidate mu (fresh multi-start each) and keep the
    criterion maximizer; ties break toward the smaller mu."""
    mu_grid = tuple(mu_grid)
    if not mu_grid:
        raise ValueError("mu grid must be nonempty")
    criteria = []
    fitted = []
    for mu in mu_grid:
        cfg = replace(model_config, mu=mu)
        params, _, _ = train_full(dataset, cfg, train_config,
                                  bandwidth=bandwidth)
        criteria.append(cv_criterion(dataset, params, cfg))
        fitted.append(params)
    crit = np.array(criteria)
    best = int(np.flatnonzero(crit == crit.max())[0])  # grid sorted ascending
    return CvReport(mu_grid=mu_grid, criteria=tuple(criteria),
                    selected_mu=mu_grid[best], selected_params=fitted[best])


def sensitivity_sweep(env_spec: EnvSpec, dataset: Dataset, mu_grid,
                      model_config: ModelConfig, train_config: TrainConfig,
                      n_seeds: int = 10, n_rollouts: int = 100,
                      horizon: int = 100) -> list[dict]:
    """Train and evaluate at each mu across seeds.

    Returns one row per mu with the cross-seed mean and standard deviation
    of the mean rollout return (columns per SWEEP_COLUMNS).
    """
    rows = []
    for mu in mu_grid:
        cfg = replace(model_config, mu=mu)
        means = []
        for k in range(n_seeds):
            tc = replace(train_config, seed=train_config.seed + k)
            params, _, _ = train_full(dataset, cfg, tc)
            rep = evaluate_policy(env_spec, params, cfg,
                                  n_rollouts=n_rollouts, horizon=horizon,
                                  seed=tc.seed)
            means.append(rep.mean)
        means = np.array(means)
        rows.append({"mu": float(mu), "mean_return": float(means.mean()),
                     "sd_return": float(means.std(ddof=1)) if n_seeds > 1
                     else 0.0, "n_seeds": n_seeds})
    return rows
