"""Environment fidelity: independently re-coded dynamics, shared transitions,
dataset generation determinism."""

import math

import numpy as np
import pytest

from quasiopt.envs import EnvError, EnvSpec, env_reset, env_step, generate_dataset


# --- independent scalar re-implementations of the dynamics ------------------
# Written coordinate-by-coordinate with math.* so that any vectorization slip
# in the package implementation would show up as a mismatch.

def ref_step_noise_free(env_id, s, a):
    if env_id == "I":
        g = (1.0 - math.exp(-a)) / (1.0 + math.exp(-a))
        sp1 = g * s[0] + 0.25 * s[0] * s[1]
        sp2 = -g * s[1] + 0.25 * s[0] * s[1]
        r = 3.0 * (-math.exp(sp1 - sp2) * a * a
                   + (sp1 + sp2 + 0.5) * a + sp1 + sp2)
        return [sp1, sp2], r
    if env_id == "II":
        sp1 = 0.75 * (2.0 * a - 1.0) * s[0] + 0.25 * s[0] * s[1]
        sp2 = 0.75 * (1.0 - 2.0 * a) * s[1] + 0.25 * s[0] * s[1]
        r = (0.25 * sp1 ** 3 + 2.0 * sp1 + 0.5 * sp2 ** 3 + sp2
             + 0.25 * (2.0 * a - 1.0))
        return [sp1, sp2], r
    u = a / 100.0
    sp = [math.tanh(u + s[j]) for j in range(4)] \
        + [math.tanh(-u + s[j]) for j in range(4, 8)]
    if env_id == "III":
        r = (-math.exp(sp[0] / 2.0 + sp[4] / 2.0) * u * u
             + 2.0 * (sp[1] + sp[2] + sp[5] + sp[6] + 0.5) * u
             + sp[3] + sp[7])
    else:
        r = ((sp[0] / 2.0) ** 3 + (sp[1] / 2.0) ** 3 + sp[2] + sp[3]
             + 2.0 * ((sp[4] / 2.0) ** 3 + (sp[5] / 2.0) ** 3)
             + 0.5 * (sp[6] + sp[7]))
    return sp, r


@pytest.mark.parametrize("env_id", ["I", "II", "III", "IV"])
def test_noise_free_formula_fidelity(env_id):
    spec = EnvSpec(env_id, noise_scale=0.0)
    rng = np.random.default_rng(0)
    lo, hi = spec.action_range
    for _ in range(1000):
        s = rng.normal(size=spec.d_s)
        a = rng.uniform(lo, hi)
        sp, r = env_step(spec, s, a, rng)
        sp_ref, r_ref = ref_step_noise_free(env_id, s, a)
        np.testing.assert_allclose(sp, sp_ref, atol=1e-14, rtol=1e-14)
        assert r == pytest.approx(r_ref, abs=1e-14, rel=1e-14)


def test_env_iii_iv_share_transitions():
    """Same seed, same actions: identical next-state sequences, different
    rewards."""
    ds3 = generate_dataset(EnvSpec("III"), n=4, T=10, seed=11)
    ds4 = generate_dataset(EnvSpec("IV"), n=4, T=10, seed=11)
    np.testing.assert_array_equal(ds3.states, ds4.states)
    np.testing.assert_array_equal(ds3.actions, ds4.actions)
    np.testing.assert_array_equal(ds3.next_states, ds4.next_states)
    assert not np.array_equal(ds3.rewards, ds4.rewards)


class TestEnvSpec:
    def test_unknown_env(self):
        with pytest.raises(EnvError, match="unknown environment"):
            EnvSpec("V")

    def test_dims_and_ranges(self):
        assert EnvSpec("I").d_s == 2 and EnvSpec("III").d_s == 8
        assert EnvSpec("II").action_range == (0.0, 1.0)
        assert EnvSpec("IV").action_range == (-100.0, 100.0)
        assert EnvSpec("I").bounded_actions and not EnvSpec("III").bounded_actions

    def test_negative_noise_rejected(self):
        with pytest.raises(EnvError):
            EnvSpec("I", noise_scale=-1.0)


class TestReset:
    def test_scale(self):
        spec = EnvSpec("I", init_scale=0.5)
        rng = np.random.default_rng(0)
        draws = np.array([env_reset(spec, rng) for _ in range(4000)])
        assert abs(draws.std() - 0.5) < 0.02
        assert abs(draws.mean()) < 0.02


class TestStep:
    def test_state_shape_checked(self):
        with pytest.raises(EnvError, match="shape"):
            env_step(EnvSpec("I"), np.zeros(3), 0.5, np.random.default_rng(0))

    def test_noise_enters_reward_through_next_state(self):
        """The reward depends on the realized (noisy) next state."""
        spec = EnvSpec("I", noise_scale=0.5)
        s = np.array([0.3, -0.2])
        sp1, r1 = env_step(spec, s, 0.4, np.random.default_rng(1))
        sp2, r2 = env_step(spec, s, 0.4, np.random.default_rng(2))
        assert not np.array_equal(sp1, sp2)
        assert r1 != r2


class TestGenerateDataset:
    def test_shapes_and_chaining(self):
        ds = generate_dataset(EnvSpec("I"), n=5, T=7, seed=0)
        assert ds.states.shape == (5, 7, 2)
        # consecutive steps chain: next_state at t equals state at t+1
        np.testing.assert_array_equal(ds.next_states[:, :-1], ds.states[:, 1:])

    def test_deterministic_given_seed(self):
        a = generate_dataset(EnvSpec("II"), n=3, T=5, seed=4)
        b = generate_dataset(EnvSpec("II"), n=3, T=5, seed=4)
        np.testing.assert_array_equal(a.states, b.states)
        np.testing.assert_array_equal(a.rewards, b.rewards)

    def test_trajectories_independent_of_n(self):
        """Per-trajectory streams: the first trajectories agree regardless of
        how many more are generated."""
        small = generate_dataset(EnvSpec("I"), n=2, T=5, seed=9)
        big = generate_dataset(EnvSpec("I"), n=6, T=5, seed=9)
        np.testing.assert_array_equal(small.states, big.states[:2])

    def test_behavior_actions_uniform_on_range(self):
        ds = generate_dataset(EnvSpec("III"), n=10, T=20, seed=0)
        assert ds.actions.min() >= -100.0 and ds.actions.max() <= 100.0
        assert ds.actions.std() > 40.0  # wide spread, not collapsed

    def test_bad_sizes(self):
        with pytest.raises(EnvError):
            generate_dataset(EnvSpec("I"), n=0, T=5, seed=0)
        with pytest.raises(EnvError):
            generate_dataset(EnvSpec("I"), n=2, T=1, seed=0)
