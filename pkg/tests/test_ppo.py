import numpy as np
import pytest

from sfcsim.policy import PolicyNetwork
from sfcsim.ppo import Adam, PpoConfig, compute_gae, ppo_loss, train

from toy_env import CorridorEnv, greedy_return


def gae_oracle(rewards, values, dones, gamma, lam, bootstrap):
    """Brute-force backward recursion, written independently of the library."""
    T = len(rewards)
    adv = np.zeros(T)
    last = 0.0
    next_value = bootstrap
    for t in range(T - 1, -1, -1):
        nonterminal = 1.0 - dones[t]
        delta = rewards[t] + gamma * next_value * nonterminal - values[t]
        last = delta + gamma * lam * nonterminal * last
        adv[t] = last
        next_value = values[t]
    return adv, adv + values


# ----------------------------------------------------------------------- GAE

def test_gae_lambda_zero_is_one_step_td():
    rng = np.random.default_rng(0)
    r, v = rng.normal(size=12), rng.normal(size=12)
    d = np.zeros(12)
    adv, _ = compute_gae(r, v, d, 0.95, 0.0, 0.3)
    next_v = np.append(v[1:], 0.3)
    np.testing.assert_allclose(adv, r + 0.95 * next_v - v, atol=1e-12)


def test_gae_undistorted_suffix_sums():
    r = np.array([1.0, 2.0, 3.0, 4.0])
    adv, ret = compute_gae(r, np.zeros(4), np.zeros(4), 1.0, 1.0, 0.0)
    np.testing.assert_allclose(adv, [10.0, 9.0, 7.0, 4.0])
    np.testing.assert_allclose(ret, adv)


def test_gae_worked_example():
    # rewards [1,1], values [0.5,0.5], bootstrap 0, gamma .9, lambda .8:
    # A_1 = 1 - 0.5 = 0.5; A_0 = 1 + 0.45 - 0.5 + 0.72*0.5 = 1.31
    adv, ret = compute_gae([1.0, 1.0], [0.5, 0.5], [0.0, 0.0], 0.9, 0.8, 0.0)
    oracle_adv, oracle_ret = gae_oracle(
        np.array([1.0, 1.0]), np.array([0.5, 0.5]), np.zeros(2), 0.9, 0.8, 0.0)
    np.testing.assert_allclose(adv, [1.31, 0.5], atol=1e-12)
    np.testing.assert_array_equal(adv, oracle_adv)
    np.testing.assert_array_equal(ret, oracle_ret)


def test_gae_matches_oracle_exactly_on_random_sequences():
    rng = np.random.default_rng(1)
    for _ in range(100):
        T = int(rng.integers(1, 33))
        r = rng.normal(size=T)
        v = rng.normal(size=T)
        d = (rng.random(T) < 0.25).astype(float)
        gamma, lam = rng.uniform(0.8, 1.0), rng.uniform(0.0, 1.0)
        boot = float(rng.normal())
        adv, ret = compute_gae(r, v, d, gamma, lam, boot)
        o_adv, o_ret = gae_oracle(r, v, d, gamma, lam, boot)
        assert np.array_equal(adv, o_adv)
        assert np.array_equal(ret, o_ret)


def test_gae_done_masks_bootstrap():
    adv, _ = compute_gae([1.0], [0.0], [1.0], 0.9, 0.9, 100.0)
    np.testing.assert_allclose(adv, [1.0])


# ---------------------------------------------------------------------- loss

def make_batch(net, rng, B=8, old_from_net=True):
    obs = rng.normal(size=(B, net.obs_dim))
    actions = np.stack([rng.integers(0, s, B) for s in net.head_sizes], axis=1)
    if old_from_net:
        logps = net.head_log_probs(obs)
        old_logp = sum(lp[np.arange(B), actions[:, i]]
                       for i, lp in enumerate(logps))
    else:
        old_logp = rng.normal(size=B) - 2.0
    return {
        "obs": obs, "actions": actions, "old_logp": old_logp,
        "advantages": rng.normal(size=B), "returns": rng.normal(size=B),
    }


def test_unchanged_params_give_ratio_one_surrogate():
    net = PolicyNetwork(5, (4, 3, 2, 2), hidden=(6, 6), seed=1)
    rng = np.random.default_rng(2)
    batch = make_batch(net, rng)
    cfg = PpoConfig(value_coef=0.0, entropy_coef=0.0)
    loss, _, diag = ppo_loss(net, batch, cfg)
    assert float(loss.data) == pytest.approx(-batch["advantages"].mean(), abs=1e-12)
    assert diag["clip_fraction"] == 0.0
    assert diag["kl"] == pytest.approx(0.0, abs=1e-12)


def test_clip_saturation_zeroes_policy_gradient():
    net = PolicyNetwork(5, (4, 3, 2, 2), hidden=(6, 6), seed=3)
    rng = np.random.default_rng(4)
    batch = make_batch(net, rng, B=4)
    eps = 0.2
    # make every ratio exactly 1+2*eps with positive advantages
    batch["old_logp"] = batch["old_logp"] - np.log(1.0 + 2 * eps)
    batch["advantages"] = np.abs(batch["advantages"]) + 0.1
    cfg = PpoConfig(clip_epsilon=eps, value_coef=0.0, entropy_coef=0.0)
    loss, tensors, diag = ppo_loss(net, batch, cfg)
    assert diag["clip_fraction"] == 1.0
    assert float(loss.data) == pytest.approx(
        -(1 + eps) * batch["advantages"].mean(), rel=1e-9)
    loss.backward()
    for key, t in tensors.items():
        if t.grad is not None:
            np.testing.assert_allclose(t.grad, 0.0, atol=1e-12)


def test_gradients_match_finite_differences():
    net = PolicyNetwork(3, (2, 2, 1, 1), hidden=(4, 3), seed=5)
    rng = np.random.default_rng(6)
    batch = make_batch(net, rng, B=6)
    cfg = PpoConfig()
    loss, tensors, _ = ppo_loss(net, batch, cfg)
    loss.backward()
    eps = 1e-6
    worst = 0.0
    for key, arr in net.params.items():
        analytic = tensors[key].grad.reshape(-1)
        for j in range(arr.size):
            orig = arr.flat[j]
            arr.flat[j] = orig + eps
            lp, _, _ = ppo_loss(net, batch, cfg)
            arr.flat[j] = orig - eps
            lm, _, _ = ppo_loss(net, batch, cfg)
            arr.flat[j] = orig
            fd = (float(lp.data) - float(lm.data)) / (2 * eps)
            rel = abs(fd - analytic[j]) / max(abs(fd), abs(analytic[j]), 1e-8)
            worst = max(worst, rel)
    assert worst < 1e-4


def test_non_finite_loss_raises():
    net = PolicyNetwork(3, (2, 2, 1, 1), hidden=(4, 3), seed=7)
    rng = np.random.default_rng(8)
    batch = make_batch(net, rng, B=4)
    batch["advantages"] = np.full(4, np.inf)
    with pytest.raises(FloatingPointError):
        ppo_loss(net, batch, PpoConfig())


# ---------------------------------------------------------------------- Adam

def test_adam_minimizes_quadratic():
    params = {"x": np.array([5.0, -3.0])}
    opt = Adam(params, lr=0.1, max_grad_norm=None)
    for _ in range(500):
        opt.step(params, {"x": 2.0 * params["x"]})
    np.testing.assert_allclose(params["x"], 0.0, atol=1e-4)


def test_gradient_norm_clipping():
    params = {"x": np.array([0.0])}
    opt = Adam(params, lr=1.0, max_grad_norm=0.5)
    grads = {"x": np.array([100.0])}
    opt.step(params, grads)
    # clipped gradient keeps the original direction
    assert params["x"][0] < 0.0
    assert np.array_equal(grads["x"], [100.0])  # caller's array untouched


# --------------------------------------------------------------------- train

def test_total_steps_zero_returns_initial_params():
    cfg = PpoConfig(total_steps=0, n_envs=2, seed=3)
    net, log = train(lambda i: CorridorEnv(), cfg)
    fresh = PolicyNetwork(8, (2, 1, 1, 1), hidden=cfg.hidden, seed=3)
    for key in net.params:
        assert np.array_equal(net.params[key], fresh.params[key])
    assert log.updates == []


def test_training_is_bitwise_deterministic():
    cfg = PpoConfig(total_steps=4096, n_envs=2, seed=9)
    net1, log1 = train(lambda i: CorridorEnv(), cfg)
    net2, log2 = train(lambda i: CorridorEnv(), cfg)
    for key in net1.params:
        assert np.array_equal(net1.params[key], net2.params[key])
    assert [u["loss"] for u in log1.updates] == [u["loss"] for u in log2.updates]


def test_corridor_quick_learning_smoke():
    cfg = PpoConfig(total_steps=20_000, n_envs=4, seed=2)
    net, log = train(lambda i: CorridorEnv(), cfg, log_env0=False)
    assert not log.aborted
    assert greedy_return(net) >= 0.95
    assert len(log.episodes) > 50


def test_update_diagnostics_schema():
    cfg = PpoConfig(total_steps=1024, n_envs=2, seed=4)
    _, log = train(lambda i: CorridorEnv(), cfg)
    assert log.updates
    row = log.updates[0]
    for key in ("loss", "policy_loss", "value_loss", "entropy",
                "clip_fraction", "kl", "update", "global_step"):
        assert key in row
    assert row["entropy"] >= 0.0
