"""Synthetic benchmark environments and behavior-policy data generation.

Four environments: two with 2-dimensional states and actions in [0, 1]
(nonlinear saturating transitions), two with 8-dimensional states and actions
in [-100, 100] (tanh latent-mean transitions; III and IV share the transition
kernel and differ only in reward). Behavior actions are uniform on the action
range. Gaussian noise uses numpy's Generator.normal (ziggurat), fixed per
build for determinism.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import Dataset

__all__ = ["EnvSpec", "EnvError", "env_reset", "env_step", "generate_dataset"]

_ENV_IDS = ("I", "II", "III", "IV")


class EnvError(ValueError):
    """Raised for unknown environments or invalid parameters."""


@dataclass(frozen=True)
class EnvSpec:
    """Environment identity plus the knobs left open by the dynamics.

    noise_scale is the transition noise standard deviation; init_scale the
    standard deviation of the i.i.d. centered-normal initial state.
    """

    env_id: str
    noise_scale: float = 0.5
    init_scale: float = 0.5
    gamma: float = 0.9

    def __post_init__(self):
        if self.env_id not in _ENV_IDS:
            raise EnvError(f"unknown environment {self.env_id!r}; "
                           f"choose from {_ENV_IDS}")
        if self.noise_scale < 0 or self.init_scale < 0:
            raise EnvError("noise_scale and init_scale must be nonnegative")

    @property
    def d_s(self) -> int:
        return 2 if self.env_id in ("I", "II") else 8

    @property
    def action_range(self) -> tuple[float, float]:
        """Behavior-policy sampling range (learned policies in III/IV may
        choose any real action)."""
        return (0.0, 1.0) if self.env_id in ("I", "II") else (-100.0, 100.0)

    @property
    def bounded_actions(self) -> bool:
        """True when the action space itself is the closed behavior range
        (environments I and II); III and IV accept any real action."""
        return self.env_id in ("I", "II")


def env_reset(spec: EnvSpec, rng: np.random.Generator) -> np.ndarray:
    """Initial state: i.i.d. N(0, init_scale^2) per coordinate."""
    return spec.init_scale * rng.standard_normal(spec.d_s)


def env_step(spec: EnvSpec, state: np.ndarray, action: float,
             rng: np.random.Generator) -> tuple[np.ndarray, float]:
    """Advance one step; the reward is computed from the realized next state."""
    s = np.asarray(state, dtype=float)
    if s.shape != (spec.d_s,):
        raise EnvError(f"state must have shape ({spec.d_s},)")
    a = float(action)
    noise = spec.noise_scale * rng.standard_normal(spec.d_s)

    if spec.env_id == "I":
        g = (1.0 - np.exp(-a)) / (1.0 + np.exp(-a))
        cross = 0.25 * s[0] * s[1]
        sp = np.array([g * s[0] + cross, -g * s[1] + cross]) + noise
        r = 3.0 * (-np.exp(sp[0] - sp[1]) * a ** 2
                   + (sp[0] + sp[1] + 0.5) * a + sp[0] + sp[1])
    elif spec.env_id == "II":
        cross = 0.25 * s[0] * s[1]
        sp = np.array([0.75 * (2.0 * a - 1.0) * s[0] + cross,
                       0.75 * (1.0 - 2.0 * a) * s[1] + cross]) + noise
        r = (0.25 * sp[0] ** 3 + 2.0 * sp[0]
             + 0.5 * sp[1] ** 3 + sp[1] + 0.25 * (2.0 * a - 1.0))
    else:  # III and IV share the transition kernel
        u = a / 100.0
        mean = np.tanh(np.concatenate([u + s[:4], -u + s[4:]]))
        sp = mean + noise
        if spec.env_id == "III":
            r = (-np.exp(sp[0] / 2.0 + sp[4] / 2.0) * u ** 2
                 + 2.0 * (sp[1] + sp[2] + sp[5] + sp[6] + 0.5) * u
                 + sp[3] + sp[7])
        else:
            r = ((sp[0] / 2.0) ** 3 + (sp[1] / 2.0) ** 3 + sp[2] + sp[3]
                 + 2.0 * ((sp[4] / 2.0) ** 3 + (sp[5] / 2.0) ** 3)
                 + 0.5 * (sp[6] + sp[7]))
    return sp, float(r)


def generate_dataset(spec: EnvSpec, n: int, T: int, seed: int) -> Dataset:
    """n behavior-policy trajectories of length T.

    Each trajectory draws from its own generator stream spawned from the
    seed, so the result is independent of generation order.
    """
    if n < 1 or T < 2:
        raise EnvError("need n >= 1 and T >= 2")
    lo, hi = spec.action_range
    streams = np.random.SeedSequence(seed).spawn(n)
    states = np.empty((n, T, spec.d_s))
    actions = np.empty((n, T))
    rewards = np.empty((n, T))
    next_states = np.empty((n, T, spec.d_s))
    for i in range(n):
        rng = np.random.default_rng(streams[i])
        s = env_reset(spec, rng)
        for t in range(T):
            a = rng.uniform(lo, hi)
            sp, r = env_step(spec, s, a, rng)
            states[i, t] = s
            actions[i, t] = a
            rewards[i, t] = r
            next_states[i, t] = sp
            s = sp
    return Dataset(states, actions, rewards, next_states,
                   env_tag=spec.env_id, seed=seed,
                   meta={"noise_scale": spec.noise_scale,
                         "init_scale": spec.init_scale, "gamma": spec.gamma})
