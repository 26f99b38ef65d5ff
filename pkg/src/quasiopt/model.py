"""Quadratic action-value model and its induced bounded-support policy.

The action value is Q(s, a) = -a1 * a^2 + a2 * a + a3 with
a1 = exp(theta1 . phi(s)) > 0, a2 = theta2 . phi(s), a3 = theta3 . phi(s).
A concave quadratic Q induces a clipped-parabola (q-Gaussian) policy whose
support is a closed interval around the Q-maximizer; the state value, the
policy density and both Lagrange multipliers all have closed forms in
(a1, a2, a3, mu).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy.special import expit

__all__ = [
    "BasisSpec",
    "ModelParams",
    "ModelConfig",
    "ModelError",
    "basis_eval",
    "radial_grid_basis",
    "q_coeffs",
    "support",
    "policy_density",
    "peak_density",
    "sample_action",
    "value",
    "varpi",
    "eta",
    "prox_circ",
    "save_model",
    "load_model",
]

# Appears in the closed-form state value: (9/5) * 12^(-1/3).
_VALUE_COEF = 1.8 * 12.0 ** (-1.0 / 3.0)

MODEL_SCHEMA_VERSION = 1


class ModelError(ValueError):
    """Raised for invalid model parameters or files."""


@dataclass(frozen=True)
class BasisSpec:
    """State feature map. Component 0 is always the constant 1.

    kind="polynomial_degree_2": [1, s_1..s_d, s_1^2, s_1 s_2, ..., s_d^2]
    (all degree <= 2 monomials, graded-lex order).
    kind="radial": [1, exp(-||s - c_i||^2 / (2 width^2)) for each center].
    """

    kind: str
    d_s: int
    centers: np.ndarray | None = None
    width: float | None = None

    def __post_init__(self):
        if self.kind not in ("polynomial_degree_2", "radial"):
            raise ModelError(f"unknown basis kind {self.kind!r}")
        if self.d_s < 1:
            raise ModelError("d_s must be >= 1")
        if self.kind == "radial":
            if self.centers is None or self.width is None:
                raise ModelError("radial basis requires centers and width")
            centers = np.atleast_2d(np.asarray(self.centers, dtype=float))
            if centers.shape[1] != self.d_s:
                raise ModelError("radial centers must have d_s columns")
            if not self.width > 0:
                raise ModelError("radial width must be positive")
            object.__setattr__(self, "centers", centers)

    @property
    def m(self) -> int:
        if self.kind == "polynomial_degree_2":
            d = self.d_s
            return 1 + d + d * (d + 1) // 2
        return 1 + self.centers.shape[0]


def basis_eval(s: np.ndarray, basis: BasisSpec) -> np.ndarray:
    """Evaluate phi(s). Accepts a single state (d_s,) or a batch (N, d_s)."""
    s = np.asarray(s, dtype=float)
    single = s.ndim == 1
    sb = np.atleast_2d(s)
    if sb.shape[1] != basis.d_s:
        raise ModelError(f"state dim {sb.shape[1]} != basis d_s {basis.d_s}")
    if basis.kind == "polynomial_degree_2":
        cols = [np.ones(sb.shape[0])]
        cols.extend(sb[:, j] for j in range(basis.d_s))
        for i in range(basis.d_s):
            for j in range(i, basis.d_s):
                cols.append(sb[:, i] * sb[:, j])
        phi = np.column_stack(cols)
    else:
        d2 = ((sb[:, None, :] - basis.centers[None, :, :]) ** 2).sum(axis=2)
        rbf = np.exp(-d2 / (2.0 * basis.width ** 2))
        phi = np.column_stack([np.ones(sb.shape[0]), rbf])
    return phi[0] if single else phi


def radial_grid_basis(d_s: int, scale: float = 0.5,
                      width: float = 1.0) -> BasisSpec:
    """Compact radial basis with centers on {-scale, +scale} patterns.

    For d_s <= 4 the centers are the full corner grid (2^d_s centers); for
    larger state dimensions they are the 2 d_s single-axis points +-scale e_j.
    Radial features are bounded in (0, 1], which keeps the induced policy
    well behaved far outside the data region — polynomial features extrapolate
    quadratically there and make small-sample training unstable.
    """
    if d_s <= 4:
        grids = np.meshgrid(*([np.array([-scale, scale])] * d_s),
                            indexing="ij")
        centers = np.stack([g.ravel() for g in grids], axis=1)
    else:
        centers = np.concatenate([scale * np.eye(d_s), -scale * np.eye(d_s)])
    return BasisSpec("radial", d_s=d_s, centers=centers, width=width)


@dataclass(frozen=True)
class ModelParams:
    """Everything training optimizes: theta = (theta1, theta2, theta3), xi.

    k0 and b0 shape the sigmoid multiplier eta and are fixed, not trained.
    """

    theta1: np.ndarray
    theta2: np.ndarray
    theta3: np.ndarray
    xi: np.ndarray
    k0: float = 1.0
    b0: float = 0.0

    def __post_init__(self):
        for name in ("theta1", "theta2", "theta3", "xi"):
            arr = np.asarray(getattr(self, name), dtype=float)
            if not np.all(np.isfinite(arr)):
                raise ModelError(f"non-finite entries in {name}")
            object.__setattr__(self, name, arr)
        m = self.theta1.shape[0]
        if self.theta2.shape != (m,) or self.theta3.shape != (m,):
            raise ModelError("theta1/theta2/theta3 must share length m")
        if not self.k0 > 0:
            raise ModelError("k0 must be positive")

    @property
    def m(self) -> int:
        return self.theta1.shape[0]

    def as_vector(self) -> np.ndarray:
        """Flat layout [theta1, theta2, theta3, xi] (gradients use the same)."""
        return np.concatenate([self.theta1, self.theta2, self.theta3, self.xi])

    def with_vector(self, vec: np.ndarray) -> "ModelParams":
        m, d = self.m, self.xi.shape[0]
        if vec.shape != (3 * m + d,):
            raise ModelError(f"parameter vector must have length {3 * m + d}")
        return replace(self, theta1=vec[:m].copy(), theta2=vec[m:2 * m].copy(),
                       theta3=vec[2 * m:3 * m].copy(), xi=vec[3 * m:].copy())


@dataclass(frozen=True)
class ModelConfig:
    """Screening weight mu, density cap, discount and feature basis."""

    mu: float
    gamma: float
    basis: BasisSpec
    cap: float = 5.0

    def __post_init__(self):
        if not self.mu > 0:
            raise ModelError("mu must be positive")
        if not self.cap > 0:
            raise ModelError("cap must be positive")
        if not 0.0 <= self.gamma < 1.0:
            raise ModelError("gamma must lie in [0, 1)")


_EXP_OVERFLOW = 700.0


def q_coeffs(s: np.ndarray, params: ModelParams, basis: BasisSpec):
    """Quadratic coefficients (a1, a2, a3) of Q at state s; a1 > 0 always."""
    phi = basis_eval(s, basis)
    log_a1 = phi @ params.theta1
    if np.any(log_a1 > _EXP_OVERFLOW):
        raise ModelError("exp overflow in curvature coefficient: theta1.phi > 700")
    a1 = np.exp(log_a1)
    a2 = phi @ params.theta2
    a3 = phi @ params.theta3
    return a1, a2, a3


def support(s: np.ndarray, params: ModelParams, basis: BasisSpec, mu: float):
    """Closed-form support interval [w_lo, w_hi] of the induced policy."""
    a1, a2, _ = q_coeffs(s, params, basis)
    half = (12.0 * a1 ** 2 * mu) ** (1.0 / 3.0) / (2.0 * a1)
    center = a2 / (2.0 * a1)
    return center - half, center + half


def peak_density(s: np.ndarray, params: ModelParams, basis: BasisSpec, mu: float):
    """Maximum of the policy density, attained at the Q-maximizing action."""
    a1, _, _ = q_coeffs(s, params, basis)
    return 1.5 * (a1 / (12.0 * mu)) ** (1.0 / 3.0)


def _density_raw(a, a1, a2, mu):
    """Pre-clipped parabola; the density is its positive part, and the
    multiplier varpi its negative part."""
    center = a2 / (2.0 * a1)
    peak = 1.5 * (a1 / (12.0 * mu)) ** (1.0 / 3.0)
    return peak - (a1 / (2.0 * mu)) * (np.asarray(a, dtype=float) - center) ** 2


def policy_density(a, s: np.ndarray, params: ModelParams, basis: BasisSpec,
                   mu: float):
    """Density of the induced policy at action(s) a; zero outside the support."""
    a1, a2, _ = q_coeffs(s, params, basis)
    return np.maximum(0.0, _density_raw(a, a1, a2, mu))


def varpi(s: np.ndarray, a, params: ModelParams, basis: BasisSpec, mu: float):
    """Nonnegative multiplier for the density >= 0 constraint.

    Expressed on the Q scale (2 mu times the clipped negative pre-density):
    with this scaling the first-order stationarity identity holds off the
    support as well as on it, and varpi * policy_density == 0 identically.
    """
    a1, a2, _ = q_coeffs(s, params, basis)
    return 2.0 * mu * np.maximum(0.0, -_density_raw(a, a1, a2, mu))


def value(s: np.ndarray, params: ModelParams, basis: BasisSpec, mu: float):
    """State value of the smoothed operator at its induced policy.

    Evaluates the closed form
    mu - (1/4mu) * ((I1 - 2mu)^2 / |W| - I2)
    with I1 = int_W Q, I2 = int_W Q^2 computed from antiderivatives over the
    support interval W; algebra collapses it to
    Q(center) + mu - (9/5) (mu^2 a1 / 12)^(1/3).
    """
    a1, a2, a3 = q_coeffs(s, params, basis)
    q_max = a3 + a2 ** 2 / (4.0 * a1)
    return q_max + mu - _VALUE_COEF * (mu ** 2 * a1) ** (1.0 / 3.0)


def eta(s: np.ndarray, params: ModelParams, mu: float, cap: float):
    """Sigmoid-parametrized multiplier, confined to (-mu*cap, 0)."""
    s = np.asarray(s, dtype=float)
    z = params.k0 * ((s @ params.xi) - params.b0)
    return -mu * cap * expit(z)


def prox_circ(x):
    """Derivative-form regularizer term: 2x - 1."""
    return 2.0 * np.asarray(x, dtype=float) - 1.0


_SAMPLE_MAX_ROUNDS = 10 ** 6


def sample_action(s: np.ndarray, params: ModelParams, basis: BasisSpec,
                  mu: float, rng: np.random.Generator) -> float:
    """Draw one action by rejection sampling against the clipped parabola.

    Proposals are uniform on the support; the acceptance rate is exactly 2/3
    for this family, so the loop terminates quickly.
    """
    a1, a2, _ = q_coeffs(s, params, basis)
    center = a2 / (2.0 * a1)
    half = (12.0 * a1 ** 2 * mu) ** (1.0 / 3.0) / (2.0 * a1)
    peak = 1.5 * (a1 / (12.0 * mu)) ** (1.0 / 3.0)
    for _ in range(_SAMPLE_MAX_ROUNDS):
        cand = center + half * (2.0 * rng.random() - 1.0)
        dens = peak - (a1 / (2.0 * mu)) * (cand - center) ** 2
        if rng.random() * peak < dens:
            return float(cand)
    raise ModelError("rejection sampling failed to accept within the iteration cap")


# --- persistence -----------------------------------------------------------

def save_model(params: ModelParams, config: ModelConfig, path: str | Path) -> None:
    payload = {
        "schema_version": MODEL_SCHEMA_VERSION,
        "theta1": params.theta1.tolist(),
        "theta2": params.theta2.tolist(),
        "theta3": params.theta3.tolist(),
        "xi": params.xi.tolist(),
        "k0": params.k0,
        "b0": params.b0,
        "mu": config.mu,
        "cap": config.cap,
        "gamma": config.gamma,
        "basis": {
            "kind": config.basis.kind,
            "d_s": config.basis.d_s,
            "centers": None if config.basis.centers is None
            else config.basis.centers.tolist(),
            "width": config.basis.width,
        },
    }
    with open(path, "w") as fh:
        json.dump(payload, fh)


def load_model(path: str | Path) -> tuple[ModelParams, ModelConfig]:
    with open(path) as fh:
        payload = json.load(fh)
    if payload.get("schema_version") != MODEL_SCHEMA_VERSION:
        raise ModelError(f"unsupported model schema: {payload.get('schema_version')!r}")
    required = ("theta1", "theta2", "theta3", "xi", "k0", "b0",
                "mu", "cap", "gamma", "basis")
    missing = [k for k in required if k not in payload]
    if missing:
        raise ModelError(f"model file missing fields: {missing}")
    b = payload["basis"]
    basis = BasisSpec(
        kind=b["kind"], d_s=b["d_s"],
        centers=None if b.get("centers") is None else np.asarray(b["centers"]),
        width=b.get("width"))
    params = ModelParams(
        theta1=np.asarray(payload["theta1"], dtype=float),
        theta2=np.asarray(payload["theta2"], dtype=float),
        theta3=np.asarray(payload["theta3"], dtype=float),
        xi=np.asarray(payload["xi"], dtype=float),
        k0=float(payload["k0"]), b0=float(payload["b0"]))
    if params.m != basis.m:
        raise ModelError(
            f"theta length {params.m} does not match basis dimension {basis.m}")
    config = ModelConfig(mu=float(payload["mu"]), gamma=float(payload["gamma"]),
                         basis=basis, cap=float(payload["cap"]))
    return params, config
