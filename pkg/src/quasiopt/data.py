"""Trajectory datasets: containers, CSV/JSON persistence, minibatching, standardization.

The on-disk CSV layout is fixed as
``traj_id, t, s_1..s_d, a, r, sp_1..sp_d`` with a mandatory header row.
All floats are serialized with full (round-trip) precision.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

__all__ = [
    "Transition",
    "Trajectory",
    "Dataset",
    "Standardizer",
    "DatasetError",
    "load_dataset",
    "save_dataset",
    "sample_minibatch",
    "fit_standardizer",
]


class DatasetError(ValueError):
    """Raised for malformed or inconsistent trajectory data."""


@dataclass(frozen=True)
class Transition:
    """One (state, action, reward, next_state) step."""

    state: np.ndarray
    action: float
    reward: float
    next_state: np.ndarray


@dataclass(frozen=True)
class Trajectory:
    """An ordered list of transitions of fixed length T."""

    transitions: tuple[Transition, ...]

    def __len__(self) -> int:
        return len(self.transitions)


@dataclass(frozen=True)
class Dataset:
    """Array-backed collection of n trajectories sharing T and d_s.

    Shapes: states/next_states (n, T, d_s), actions/rewards (n, T).
    Immutable after construction; views returned by minibatching copy
    the relevant rows.
    """

    states: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    next_states: np.ndarray
    env_tag: str | None = None
    seed: int | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        states = np.asarray(self.states, dtype=float)
        actions = np.asarray(self.actions, dtype=float)
        rewards = np.asarray(self.rewards, dtype=float)
        next_states = np.asarray(self.next_states, dtype=float)
        if states.ndim != 3:
            raise DatasetError(f"states must be (n, T, d_s), got shape {states.shape}")
        n, T, d_s = states.shape
        if n == 0:
            raise DatasetError("empty dataset")
        if T < 2:
            raise DatasetError(f"trajectory length T={T} < 2")
        if d_s < 1:
            raise DatasetError("state dimension must be >= 1")
        if next_states.shape != (n, T, d_s):
            raise DatasetError("next_states shape mismatch")
        if actions.shape != (n, T) or rewards.shape != (n, T):
            raise DatasetError("actions/rewards shape mismatch")
        for name, arr in (("states", states), ("actions", actions),
                          ("rewards", rewards), ("next_states", next_states)):
            if not np.all(np.isfinite(arr)):
                bad = np.argwhere(~np.isfinite(arr))[0]
                raise DatasetError(
                    f"non-finite value in {name} at trajectory {bad[0]}, step {bad[1]}")
        object.__setattr__(self, "states", states)
        object.__setattr__(self, "actions", actions)
        object.__setattr__(self, "rewards", rewards)
        object.__setattr__(self, "next_states", next_states)

    @property
    def n(self) -> int:
        return self.states.shape[0]

    @property
    def T(self) -> int:
        return self.states.shape[1]

    @property
    def d_s(self) -> int:
        return self.states.shape[2]

    @property
    def max_abs_reward(self) -> float:
        """Empirical reward bound, recorded for diagnostics (not enforced)."""
        return float(np.max(np.abs(self.rewards)))

    def trajectory(self, i: int) -> Trajectory:
        steps = tuple(
            Transition(self.states[i, t].copy(), float(self.actions[i, t]),
                       float(self.rewards[i, t]), self.next_states[i, t].copy())
            for t in range(self.T))
        return Trajectory(steps)

    def subset(self, indices: np.ndarray) -> "Dataset":
        idx = np.asarray(indices, dtype=int)
        return Dataset(self.states[idx], self.actions[idx], self.rewards[idx],
                       self.next_states[idx], env_tag=self.env_tag, seed=self.seed,
                       meta=dict(self.meta))

    def flat_state_actions(self) -> np.ndarray:
        """All (state, action) rows stacked, shape (n*T, d_s + 1)."""
        s = self.states.reshape(-1, self.d_s)
        a = self.actions.reshape(-1, 1)
        return np.concatenate([s, a], axis=1)


@dataclass(frozen=True)
class Standardizer:
    """Per-coordinate mean/scale over all (state, action) pairs of a dataset.

    Zero-variance coordinates get scale 1 so they pass through unchanged.
    """

    mean: np.ndarray
    scale: np.ndarray

    def transform(self, x: np.ndarray) -> np.ndarray:
        return (np.asarray(x, dtype=float) - self.mean) / self.scale


def fit_standardizer(dataset: Dataset) -> Standardizer:
    x = dataset.flat_state_actions()
    mean = x.mean(axis=0)
    scale = x.std(axis=0)
    scale = np.where(scale > 0.0, scale, 1.0)
    return Standardizer(mean=mean, scale=scale)


def sample_minibatch(dataset: Dataset, n0: int, rng: np.random.Generator) -> Dataset:
    """Sample n0 distinct whole trajectories uniformly without replacement."""
    if not 1 <= n0 <= dataset.n:
        raise DatasetError(f"minibatch size {n0} out of range [1, {dataset.n}]")
    idx = rng.choice(dataset.n, size=n0, replace=False)
    return dataset.subset(idx)


# --- persistence -----------------------------------------------------------

def _infer_format(path: Path, fmt: str | None) -> str:
    if fmt is not None:
        if fmt not in ("csv", "json"):
            raise DatasetError(f"unknown format {fmt!r}")
        return fmt
    suffix = path.suffix.lower().lstrip(".")
    if suffix in ("csv", "json"):
        return suffix
    raise DatasetError(f"cannot infer format from {path.name!r}; pass format=")


def save_dataset(dataset: Dataset, path: str | Path, format: str | None = None) -> None:
    path = Path(path)
    fmt = _infer_format(path, format)
    if fmt == "csv":
        _save_csv(dataset, path)
    else:
        _save_json(dataset, path)


def _save_csv(dataset: Dataset, path: Path) -> None:
    d = dataset.d_s
    header = (["traj_id", "t"] + [f"s_{j + 1}" for j in range(d)]
              + ["a", "r"] + [f"sp_{j + 1}" for j in range(d)])
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for i in range(dataset.n):
            for t in range(dataset.T):
                row = ([i, t] + [repr(float(v)) for v in dataset.states[i, t]]
                       + [repr(float(dataset.actions[i, t])),
                          repr(float(dataset.rewards[i, t]))]
                       + [repr(float(v)) for v in dataset.next_states[i, t]])
                writer.writerow(row)


def _save_json(dataset: Dataset, path: Path) -> None:
    payload = {
        "format_version": 1,
        "n": dataset.n,
        "T": dataset.T,
        "d_s": dataset.d_s,
        "env_tag": dataset.env_tag,
        "seed": dataset.seed,
        "trajectories": [
            {
                "states": dataset.states[i].tolist(),
                "actions": dataset.actions[i].tolist(),
                "rewards": dataset.rewards[i].tolist(),
                "next_states": dataset.next_states[i].tolist(),
            }
            for i in range(dataset.n)
        ],
    }
    with open(path, "w") as fh:
        json.dump(payload, fh)


def load_dataset(path: str | Path, format: str | None = None) -> Dataset:
    path = Path(path)
    if not path.exists():
        raise DatasetError(f"no such file: {path}")
    fmt = _infer_format(path, format)
    if fmt == "csv":
        return _load_csv(path)
    return _load_json(path)


def _load_csv(path: Path) -> Dataset:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DatasetError(f"{path}: empty file") from None
        d_s = _parse_header(header, path)
        rows: dict[str, dict[int, tuple]] = {}
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 4 + 2 * d_s:
                raise DatasetError(
                    f"{path}:{lineno}: expected {4 + 2 * d_s} fields, got {len(row)}")
            try:
                traj_id = row[0]
                t = int(row[1])
                vals = [float(v) for v in row[2:]]
            except ValueError as exc:
                raise DatasetError(f"{path}:{lineno}: parse failure: {exc}") from None
            if not all(np.isfinite(vals)):
                raise DatasetError(f"{path}:{lineno}: non-finite value")
            rows.setdefault(traj_id, {})[t] = tuple(vals)
    if not rows:
        raise DatasetError(f"{path}: no data rows")
    return _assemble(rows, d_s, path)


def _parse_header(header: list[str], path: Path) -> int:
    header = [h.strip() for h in header]
    if len(header) < 6 or header[0] != "traj_id" or header[1] != "t":
        raise DatasetError(f"{path}: bad header, expected traj_id,t,s_1..,a,r,sp_1..")
    try:
        a_pos = header.index("a")
    except ValueError:
        raise DatasetError(f"{path}: header missing action column 'a'") from None
    d_s = a_pos - 2
    expected = (["traj_id", "t"] + [f"s_{j + 1}" for j in range(d_s)]
                + ["a", "r"] + [f"sp_{j + 1}" for j in range(d_s)])
    if header != expected:
        raise DatasetError(f"{path}: bad header {header!r}")
    return d_s


def _assemble(rows: dict[str, dict[int, tuple]], d_s: int, path: Path) -> Dataset:
    lengths = {tid: len(steps) for tid, steps in rows.items()}
    if len(set(lengths.values())) > 1:
        raise DatasetError(
            f"{path}: inconsistent T across trajectories: {sorted(set(lengths.values()))}")
    T = next(iter(lengths.values()))
    if T < 2:
        raise DatasetError(f"{path}: trajectory length T={T} < 2")
    traj_ids = sorted(rows, key=_traj_sort_key)
    n = len(traj_ids)
    states = np.empty((n, T, d_s))
    actions = np.empty((n, T))
    rewards = np.empty((n, T))
    next_states = np.empty((n, T, d_s))
    for i, tid in enumerate(traj_ids):
        steps = rows[tid]
        for k, t in enumerate(sorted(steps)):
            vals = steps[t]
            states[i, k] = vals[:d_s]
            actions[i, k] = vals[d_s]
            rewards[i, k] = vals[d_s + 1]
            next_states[i, k] = vals[d_s + 2:]
    return Dataset(states, actions, rewards, next_states)


def _traj_sort_key(tid: str):
    try:
        return (0, int(tid), tid)
    except ValueError:
        return (1, 0, tid)


def _load_json(path: Path) -> Dataset:
    with open(path) as fh:
        try:
            payload = json.load(fh)
        except json.JSONDecodeError as exc:
            raise DatasetError(f"{path}: parse failure: {exc}") from None
    try:
        trajs = payload["trajectories"]
        states = np.array([t["states"] for t in trajs], dtype=float)
        actions = np.array([t["actions"] for t in trajs], dtype=float)
        rewards = np.array([t["rewards"] for t in trajs], dtype=float)
        next_states = np.array([t["next_states"] for t in trajs], dtype=float)
    except (KeyError, TypeError, ValueError) as exc:
        raise DatasetError(f"{path}: malformed dataset file: {exc}") from None
    return Dataset(states, actions, rewards, next_states,
                   env_tag=payload.get("env_tag"), seed=payload.get("seed"))
