import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from statehawk import ndcompute as nd
from statehawk.ndcompute import Adam, Tape
from statehawk.policy_rl import (
    EpisodeBuffer,
    PolicyNet,
    PpoConfig,
    ValueNet,
    compute_gae,
    entropy,
    hard_decode,
    ppo_update,
    sample_action,
    surrogate_loss,
)
from statehawk.repro import bandit_run


def _buf(rewards, values, dones, boot=0.0):
    n = len(rewards)
    return EpisodeBuffer(np.zeros((n, 1)), np.zeros(n, int), np.zeros(n), np.asarray(values, float),
                         np.asarray(rewards, float), np.asarray(dones, float), boot)


def test_sample_action_degenerate_and_frequency():
    rng = np.random.default_rng(0)
    assert all(sample_action([1.0, 0.0], rng) == (0, 0.0) for _ in range(100))
    hits = sum(sample_action([0.5, 0.5], rng)[0] for _ in range(100_000))
    assert abs(hits / 100_000 - 0.5) < 0.01


def test_sample_action_deterministic_and_validated():
    a = [sample_action([0.2, 0.3, 0.5], np.random.default_rng(4)) for _ in range(3)]
    assert a[0] == a[1] == a[2]
    with pytest.raises(ValueError):
        sample_action([0.5, 0.6], np.random.default_rng(0))


def test_hard_decode_examples():
    assert hard_decode([0.3, 0.7]) == 1
    assert hard_decode([0.5, 0.5]) == 0
    assert hard_decode(np.array([[0.2, 0.8], [0.6, 0.4]])).tolist() == [1, 0]


@given(hnp.arrays(np.float64, st.integers(2, 6), elements=st.floats(0.01, 1.0)), st.floats(0.1, 10))
def test_hard_decode_monotone_invariance(w, scale):
    p = w / w.sum()
    a = hard_decode(p)
    assert hard_decode(p * scale) == a
    assert hard_decode(np.log(p) + 3.0) == a
    assert hard_decode(p ** 3) == a


def test_entropy_max_at_uniform(rng):
    for m in (2, 3, 5):
        assert entropy(np.full(m, 1 / m)) == pytest.approx(np.log(m))
        assert entropy(rng.dirichlet(np.ones(m))) < np.log(m)
    assert entropy([1.0, 0.0]) == 0.0


def test_gae_examples():
    adv, tgt = compute_gae(_buf([2.0], [0.5], [1]), 0.99, 0.95)
    assert adv.tolist() == [1.5] and tgt.tolist() == [2.0]
    adv, _ = compute_gae(_buf([1, 1], [0.5, 0.5], [0, 1]), 0.99, 0.95)
    assert np.allclose(adv, [1.46525, 0.5])
    r, v, d = np.array([0.3, -1.0, 2.0]), np.array([0.1, 0.2, -0.4]), np.array([0.0, 0.0, 0.0])
    adv, _ = compute_gae(_buf(r, v, d, 0.7), 0.9, 0.0)
    assert np.allclose(adv, r + 0.9 * np.r_[v[1:], 0.7] - v)


@given(st.integers(1, 10), st.floats(0, 1), st.integers(0, 2**31))
def test_gae_lambda_one_is_discounted_return(n, gamma, seed):
    rng = np.random.default_rng(seed)
    r, v, boot = rng.normal(size=n), rng.normal(size=n), float(rng.normal())
    adv, _ = compute_gae(_buf(r, v, np.zeros(n), boot), gamma, 1.0)
    for t in range(n):
        ret = sum(gamma ** (k - t) * r[k] for k in range(t, n)) + gamma ** (n - t) * boot
        assert abs(adv[t] - (ret - v[t])) < 1e-10


def test_gae_normalization():
    adv, tgt = compute_gae(_buf([1, 2, 3, 4], [0, 0, 0, 0], [0, 0, 0, 1]), 0.99, 0.95, normalize=True)
    assert abs(adv.mean()) < 1e-12 and abs(adv.std() - 1) < 1e-6
    assert tgt[-1] == 4


def test_buffer_validation():
    with pytest.raises(ValueError):
        _buf([1, 2], [0], [0, 1])
    with pytest.raises(ValueError):
        _buf([1], [0], [0.5])


def test_ppo_config_validation():
    with pytest.raises(ValueError):
        PpoConfig(gamma=1.5)
    with pytest.raises(ValueError):
        PpoConfig(clip_eps=0)


def test_policy_outputs_distribution(rng):
    pol = PolicyNet(4, 3, rng, hidden=(8, 8))
    p = pol.probs(rng.normal(size=(5, 4)))
    assert np.allclose(p.sum(axis=1), 1) and np.all(p > 0)

def test_logit_cap_bounds_probabilities(rng):
    capped = PolicyNet(4, 3, rng, hidden=(8, 8), logit_cap=2.0)
    capped.params[f"{capped.layers[-1]}.W"] *= 1e4
    obs = rng.normal(size=(5, 4))
    raw = nd.mlp(Tape(enabled=False), capped.params, obs, capped.layers).value
    assert np.abs(raw).max() > 2
    # logits confined to [-2, 2]
    floor = np.exp(-2.0) / (np.exp(-2.0) + 2 * np.exp(2.0))
    assert np.all(capped.probs(obs) >= floor - 1e-15)
    z = capped.logits(Tape(), obs).value
    assert np.allclose(z, 2.0 * np.tanh(raw / 2.0))


def test_value_net_scalar(rng):
    v = ValueNet(3, rng, hidden=(4, 4))
    out = v.predict(rng.normal(size=(6, 3)))
    assert out.shape == (6,) and np.all(np.isfinite(out))
    assert np.allclose(v.values(Tape(), rng.normal(size=(2, 3))).value.shape, (2,))


def test_surrogate_gradient_equals_policy_gradient_at_identical_policies(rng):
    pol = PolicyNet(2, 3, rng, hidden=(5, 5))
    pol.params[f"{pol.layers[-1]}.W"] *= 50
    obs, acts, adv = rng.normal(size=(8, 2)), rng.integers(0, 3, 8), rng.normal(size=8)
    old = np.log(pol.probs(obs)[np.arange(8), acts])
    tape = Tape()
    loss, ratio, _, _ = surrogate_loss(tape, pol, obs, acts, old, adv, 0.2, 0.0)
    assert np.allclose(ratio, 1.0)
    g_clip = tape.backward(loss)
    t2 = Tape()
    lp, _ = pol.logp_entropy(t2, obs, acts)
    g_pg = t2.backward(nd.mul(nd.mean(nd.mul(lp, adv)), -1.0))
    for k in g_pg:
        assert np.allclose(g_clip[k], g_pg[k], atol=1e-12)


def test_zero_advantages_move_toward_uniform(rng):
    pol = PolicyNet(1, 3, rng, hidden=(8, 8))
    pol.params[f"{pol.layers[-1]}.b"] = np.array([2.0, 0.0, -1.0])
    val = ValueNet(1, rng, hidden=(8, 8))
    obs = np.ones((64, 1))
    h0 = entropy(pol.probs(obs[:1])[0])
    cfg = PpoConfig(minibatch=64, normalize_advantages=False)
    a_opt, c_opt = Adam(pol.params, lr=1e-2), Adam(val.params)
    p = pol.probs(obs[:1])[0]
    acts = rng.integers(0, 3, 64)
    buf = EpisodeBuffer(obs, acts, np.log(p[acts]), np.zeros(64), np.zeros(64), np.ones(64), 0.0)
    stats = ppo_update(buf, pol, val, cfg, a_opt, c_opt, rng, advantages=np.zeros(64), targets=np.zeros(64))
    assert entropy(pol.probs(obs[:1])[0]) > h0
    assert np.allclose(stats.first_ratios, 1.0)


def test_bandit_smoke():
    assert bandit_run(0) is not None
