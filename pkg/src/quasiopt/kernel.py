"""Kernel-embedded U-statistic training loss and its analytic gradient.

The loss couples the per-transition optimality defect Lambda (reward plus
discounted next-state value minus the regularized current-state quantities)
across within-trajectory pairs through a Gaussian kernel on standardized
(state, action) points:

    loss = mean over trajectories of
           sum_{j != k} Lambda_j K_jk Lambda_k / (T (T - 1)).

The kernel does not depend on the trained parameters, so the gradient is the
pair-weighted sum of per-transition Lambda gradients, all in closed form.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import pdist, squareform
from scipy.special import expit

from .data import Dataset, Standardizer, Transition
from .model import ModelConfig, ModelParams, _VALUE_COEF, basis_eval

__all__ = [
    "KernelConfig",
    "LossValue",
    "GradientResult",
    "gaussian_kernel",
    "median_heuristic_bandwidth",
    "lambda_term",
    "u_statistic_loss",
    "loss_gradient",
]


@dataclass(frozen=True)
class KernelConfig:
    """Gaussian kernel scale plus the standardization applied to its inputs."""

    bandwidth: float
    standardizer: Standardizer

    def __post_init__(self):
        if not self.bandwidth > 0:
            raise ValueError("bandwidth must be positive")


@dataclass(frozen=True)
class LossValue:
    value: float
    n_pairs: int


@dataclass(frozen=True)
class GradientResult:
    """Flat gradient in ModelParams.as_vector layout, plus event counters.

    clip_events counts transitions where the curvature exponent guard
    (theta1 . phi clipped to +-50) was active; kink_events counts transitions
    sitting exactly on the density/multiplier kink (subgradient 0 used).
    """

    vector: np.ndarray
    clip_events: int = 0
    kink_events: int = 0


def gaussian_kernel(x: np.ndarray, y: np.ndarray, config: KernelConfig) -> float:
    """exp(-||std(x) - std(y)||^2 / (2 bw^2)) on (state, action) rows."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape:
        raise ValueError(f"dimension mismatch: {x.shape} vs {y.shape}")
    d = config.standardizer.transform(x) - config.standardizer.transform(y)
    return float(np.exp(-np.sum(d * d) / (2.0 * config.bandwidth ** 2)))


def median_heuristic_bandwidth(dataset: Dataset, standardizer: Standardizer,
                               max_points: int = 2000, seed: int = 0) -> float:
    """Median pairwise standardized distance over a bounded subsample.

    Deterministic given the seed. Degenerate data (all points identical)
    falls back to bandwidth 1 with a warning.
    """
    pts = standardizer.transform(dataset.flat_state_actions())
    if pts.shape[0] > max_points:
        idx = np.random.default_rng(seed).choice(pts.shape[0], size=max_points,
                                                 replace=False)
        pts = pts[np.sort(idx)]
    med = float(np.median(pdist(pts)))
    if med <= 0.0:
        warnings.warn("degenerate data: all points identical; bandwidth = 1")
        return 1.0
    return med


# --- per-transition quantities ---------------------------------------------

def _curvature_bounds(mu: float, cap: float, action_scale: float = 1.0):
    """Training-time clamp range for the curvature exponent theta1 . phi.

    Ceiling: the density peak (3/2)(a1 / 12 mu)^{1/3} stays at or below the
    cap iff log a1 <= log(12 mu (2C/3)^3) — keeps the policy inside the
    capped class. Floor: the support width (12 mu / a1)^{1/3} stays within
    ten times the data action span (estimated from the action standard
    deviation) — wider supports have no data coverage and make the empirical
    loss unbounded below. Both combined with the +-50 overflow guard.
    """
    ceiling = min(50.0, np.log(12.0 * mu) + 3.0 * np.log(2.0 * cap / 3.0))
    span = 10.0 * np.sqrt(12.0) * max(action_scale, 1e-12)
    floor = max(-50.0, np.log(12.0 * mu) - 3.0 * np.log(span))
    return min(floor, ceiling), ceiling


def _coeff_batch(phi: np.ndarray, params: ModelParams, clip: bool,
                 bounds: tuple[float, float] = (-50.0, 50.0)):
    """Quadratic coefficients for a batch of feature rows.

    With clip=True the curvature exponent is clamped into bounds (see
    _curvature_bounds). The returned mask marks clamped rows, whose
    curvature gradient is zeroed.
    """
    log_a1 = phi @ params.theta1
    clipped = np.zeros(log_a1.shape, dtype=bool)
    if clip:
        lo, hi = bounds
        clipped = (log_a1 < lo) | (log_a1 > hi)
        log_a1 = np.clip(log_a1, lo, hi)
    elif np.any(log_a1 > 700.0):
        raise ValueError("exp overflow in curvature coefficient")
    return np.exp(log_a1), phi @ params.theta2, phi @ params.theta3, clipped


def _lambda_pieces(states, actions, rewards, next_states, params: ModelParams,
                   config: ModelConfig, clip: bool, action_scale: float = 1.0,
                   v_max: float | None = None):
    """Lambda for a flat batch of transitions plus everything the analytic
    gradient needs. Returns a dict of aligned arrays.

    With clip=True and a finite v_max, state values are clamped to
    [-v_max, v_max] (training-time counterpart of the bounded-value model
    class; without it the empirical loss is unbounded below along
    degenerate-value directions). Clamped values get zero value-gradient.
    """
    mu, cap = config.mu, config.cap
    bounds = _curvature_bounds(mu, cap, action_scale)
    phi_s = np.atleast_2d(basis_eval(states, config.basis))
    phi_sp = np.atleast_2d(basis_eval(next_states, config.basis))
    a1, a2, a3, clip_s = _coeff_batch(phi_s, params, clip, bounds)
    b1, b2, b3, clip_sp = _coeff_batch(phi_sp, params, clip, bounds)

    center = a2 / (2.0 * a1)
    peak = 1.5 * (a1 / (12.0 * mu)) ** (1.0 / 3.0)
    dev = actions - center
    pre = peak - (a1 / (2.0 * mu)) * dev ** 2
    pi = np.maximum(0.0, pre)
    w = 2.0 * mu * np.maximum(0.0, -pre)  # multiplier on the Q scale

    v_s = a3 + a2 ** 2 / (4.0 * a1) + mu - _VALUE_COEF * (mu ** 2 * a1) ** (1.0 / 3.0)
    v_sp = b3 + b2 ** 2 / (4.0 * b1) + mu - _VALUE_COEF * (mu ** 2 * b1) ** (1.0 / 3.0)
    vclip_s = np.zeros(v_s.shape, dtype=bool)
    vclip_sp = np.zeros(v_sp.shape, dtype=bool)
    if clip and v_max is not None:
        vclip_s = np.abs(v_s) > v_max
        vclip_sp = np.abs(v_sp) > v_max
        v_s = np.clip(v_s, -v_max, v_max)
        v_sp = np.clip(v_sp, -v_max, v_max)

    z = params.k0 * (states @ params.xi - params.b0)
    sig = expit(z)
    eta = -mu * cap * sig

    lam = (rewards + config.gamma * v_sp - mu * (2.0 * pi - 1.0)
           - eta + w - v_s)
    return {
        "lam": lam, "phi_s": phi_s, "phi_sp": phi_sp,
        "a1": a1, "a2": a2, "b1": b1, "b2": b2,
        "center": center, "peak": peak, "dev": dev, "pre": pre,
        "sig": sig, "clip_s": clip_s, "clip_sp": clip_sp,
        "vclip_s": vclip_s, "vclip_sp": vclip_sp,
    }


def lambda_term(tr: Transition, params: ModelParams, config: ModelConfig) -> float:
    """Optimality defect of one transition:
    r + gamma V(s') - mu (2 pi(a|s) - 1) - eta(s) + varpi(s, a) - V(s).
    """
    pieces = _lambda_pieces(tr.state[None, :], np.array([tr.action]),
                            np.array([tr.reward]), tr.next_state[None, :],
                            params, config, clip=False)
    return float(pieces["lam"][0])


# --- loss and gradient ------------------------------------------------------

def _pair_kernel(traj_points: np.ndarray, kernel: KernelConfig) -> np.ndarray:
    """Gram matrix of one trajectory's standardized (state, action) rows,
    with a zeroed diagonal (ordered pairs j != k only)."""
    std = kernel.standardizer.transform(traj_points)
    gram = np.exp(-squareform(pdist(std, "sqeuclidean"))
                  / (2.0 * kernel.bandwidth ** 2))
    np.fill_diagonal(gram, 0.0)
    return gram


def u_statistic_loss(batch: Dataset, params: ModelParams, config: ModelConfig,
                     kernel: KernelConfig, clip: bool = False,
                     v_max: float | None = None) -> LossValue:
    """Average over trajectories of the within-trajectory pair form
    sum_{j != k} Lambda_j K_jk Lambda_k / (T (T - 1))."""
    n, T = batch.n, batch.T
    a_scale = float(kernel.standardizer.scale[-1])
    total = 0.0
    for i in range(n):
        pieces = _lambda_pieces(batch.states[i], batch.actions[i],
                                batch.rewards[i], batch.next_states[i],
                                params, config, clip, a_scale, v_max)
        lam = pieces["lam"]
        pts = np.concatenate([batch.states[i], batch.actions[i][:, None]], axis=1)
        gram = _pair_kernel(pts, kernel)
        total += float(lam @ gram @ lam) / (T * (T - 1))
    return LossValue(value=total / n, n_pairs=n * T * (T - 1))


def loss_gradient(batch: Dataset, params: ModelParams, config: ModelConfig,
                  kernel: KernelConfig, clip: bool = False,
                  v_max: float | None = None) -> GradientResult:
    """Analytic gradient of u_statistic_loss in ModelParams layout.

    Per trajectory the loss is quadratic in the Lambda vector with a fixed
    kernel matrix, so the gradient is 2/(T(T-1)) * sum_j (K0 Lambda)_j
    * dLambda_j, chained through the value, density, multiplier and eta
    closed forms. The multiplier kink uses subgradient 0 and is counted.
    """
    mu, cap, gamma = config.mu, config.cap, config.gamma
    n, T = batch.n, batch.T
    m, d = params.m, params.xi.shape[0]
    grad = np.zeros(3 * m + d)
    a_scale = float(kernel.standardizer.scale[-1])
    clip_events = 0
    kink_events = 0
    for i in range(n):
        p = _lambda_pieces(batch.states[i], batch.actions[i],
                           batch.rewards[i], batch.next_states[i],
                           params, config, clip, a_scale, v_max)
        pts = np.concatenate([batch.states[i], batch.actions[i][:, None]], axis=1)
        gram = _pair_kernel(pts, kernel)
        weight = (2.0 / (T * (T - 1))) * (gram @ p["lam"])  # (T,)

        a1, a2, b1, b2 = p["a1"], p["a2"], p["b1"], p["b2"]
        dev, center, peak, pre = p["dev"], p["center"], p["peak"], p["pre"]

        # d Lambda / d (a1, a2, a3) at the current state.
        dv_da1 = -a2 ** 2 / (4.0 * a1 ** 2) \
            - (_VALUE_COEF / 3.0) * mu ** (2.0 / 3.0) * a1 ** (-2.0 / 3.0)
        dv_da2 = a2 / (2.0 * a1)
        dpre_da1 = peak / (3.0 * a1) - dev ** 2 / (2.0 * mu) - center * dev / mu
        dpre_da2 = dev / (2.0 * mu)
        pos = pre > 0.0
        neg = pre < 0.0
        kink_events += int(np.sum(pre == 0.0))
        # -2 mu dpi + dvarpi: both branches carry the same -2 mu dpre factor
        # (the Q-scale multiplier makes Lambda smooth across the boundary);
        # exactly at the kink both subgradients are taken as 0.
        coef = np.where(pos | neg, -2.0 * mu, 0.0)
        # Where the training-time value clamp is active the value channel is
        # flat, so its gradient contribution is zeroed.
        mvs = np.where(p["vclip_s"], 0.0, 1.0)
        mvp = np.where(p["vclip_sp"], 0.0, 1.0)
        dlam_da1 = coef * dpre_da1 - mvs * dv_da1
        dlam_da2 = coef * dpre_da2 - mvs * dv_da2
        dlam_da3 = -mvs

        # d Lambda / d (b1, b2, b3) at the next state (value term only).
        dlam_db1 = mvp * gamma * (-b2 ** 2 / (4.0 * b1 ** 2)
                                  - (_VALUE_COEF / 3.0) * mu ** (2.0 / 3.0)
                                  * b1 ** (-2.0 / 3.0))
        dlam_db2 = mvp * gamma * b2 / (2.0 * b1)
        dlam_db3 = mvp * gamma

        # Chain to theta: a1 = exp(theta1 . phi) so da1/dtheta1 = a1 phi,
        # except where the training clip froze the exponent.
        ca1 = np.where(p["clip_s"], 0.0, a1)
        cb1 = np.where(p["clip_sp"], 0.0, b1)
        clip_events += int(np.sum(p["clip_s"]) + np.sum(p["clip_sp"])
                           + np.sum(p["vclip_s"]) + np.sum(p["vclip_sp"]))
        phi_s, phi_sp = p["phi_s"], p["phi_sp"]
        grad[:m] += (weight * dlam_da1 * ca1) @ phi_s \
            + (weight * dlam_db1 * cb1) @ phi_sp
        grad[m:2 * m] += (weight * dlam_da2) @ phi_s \
            + (weight * dlam_db2) @ phi_sp
        grad[2 * m:3 * m] += (weight * dlam_da3) @ phi_s \
            + (weight * dlam_db3) @ phi_sp

        # d Lambda / d xi = -d eta / d xi.
        sig = p["sig"]
        deta_dz = -mu * cap * sig * (1.0 - sig)
        grad[3 * m:] += (weight * (-deta_dz) * params.k0) @ batch.states[i]
    grad /= n
    return GradientResult(vector=grad, clip_events=clip_events,
                          kink_events=kink_events)
