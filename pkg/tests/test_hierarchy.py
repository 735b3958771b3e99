import math

import numpy as np
import pytest

from multiskill import tensor as T
from multiskill.common import ConfigError
from multiskill.hierarchy import (
    LOG_2PI,
    AbstractTrajectory,
    AdvantageConfig,
    EntropyConfig,
    LambdaReturnConfig,
    ManagerPolicy,
    WorkerChunk,
    WorkerPolicy,
    cosine_max_reward,
    entropy_coeff_update,
    lambda_returns,
    manager_losses,
    select_subgoal,
    standardized,
    worker_losses,
)
from multiskill.skills import INF, ResolutionSet, SkillBank, SkillConfig

D = 4  # observation dim used throughout

# ------------------------------------------------------------------ cosine max


def test_cosine_max_identity_is_one():
    a = np.array([1.0, 2.0, -3.0])
    assert cosine_max_reward(a, a) == pytest.approx(1.0, abs=1e-15)


def test_cosine_max_orthogonal_is_zero():
    assert cosine_max_reward(np.array([1.0, 0.0]), np.array([0.0, 5.0])) == 0.0


def test_cosine_max_double_is_half():
    a = np.array([0.3, -1.2, 0.7])
    assert cosine_max_reward(a, 2 * a) == pytest.approx(0.5, abs=1e-15)


def test_cosine_max_degenerate_is_zero():
    a = np.zeros(3)
    assert cosine_max_reward(a, a) == 0.0
    assert cosine_max_reward(np.full(3, 1e-9), np.full(3, 1e-9)) == 0.0


def test_cosine_max_symmetric_and_bounded():
    rng = np.random.default_rng(0)
    for _ in range(200):
        a, b = rng.normal(size=3), rng.normal(size=3)
        r = cosine_max_reward(a, b)
        assert r == cosine_max_reward(b, a)
        assert 0.0 <= r <= 1.0


def test_cosine_max_batched():
    rng = np.random.default_rng(1)
    a = rng.normal(size=(5, 7, 3))
    b = rng.normal(size=(5, 7, 3))
    out = cosine_max_reward(a, b)
    assert out.shape == (5, 7)
    assert out[2, 3] == pytest.approx(cosine_max_reward(a[2, 3], b[2, 3]))


# --------------------------------------------------------------- lambda returns


def test_lambda_zero_is_one_step():
    cfg = LambdaReturnConfig(lam=0.0, gamma=0.9)
    r = np.array([1.0, 2.0, 3.0])
    v = np.array([5.0, 6.0, 7.0, 8.0])
    got = lambda_returns(r, v, cfg)
    assert np.allclose(got, r + 0.9 * v[1:], atol=1e-15)


def test_lambda_one_is_monte_carlo():
    cfg = LambdaReturnConfig(lam=1.0, gamma=0.5)
    r = np.array([1.0, 1.0, 1.0])
    v = np.zeros(4)
    got = lambda_returns(r, v, cfg)
    assert np.allclose(got, [1 + 0.5 + 0.25, 1 + 0.5, 1.0], atol=1e-15)


def test_lambda_hand_oracle():
    cfg = LambdaReturnConfig()  # lam 0.95, gamma 0.99
    got = lambda_returns(np.array([1.0, 1.0]), np.zeros(3), cfg)
    assert got[1] == pytest.approx(1.0, abs=1e-15)
    assert got[0] == pytest.approx(1.9405, abs=1e-12)


def test_lambda_length_mismatch():
    with pytest.raises(ConfigError):
        lambda_returns(np.zeros(3), np.zeros(3), LambdaReturnConfig())


def test_lambda_matches_mixture_expansion():
    # Brute-force oracle: G^lam_t = (1-lam) sum_{n<H-t} lam^{n-1} G^(n)_t
    #                               + lam^{H-t-1} G^(H-t)_t
    # with G^(n)_t = sum_{j=1..n} gamma^{j-1} r_{t+j} + gamma^n v_{t+n}.
    rng = np.random.default_rng(3)
    cfg = LambdaReturnConfig(lam=0.7, gamma=0.93)
    horizon = 9
    r = rng.normal(size=horizon)
    v = rng.normal(size=horizon + 1)

    def nstep(t, n):
        out = sum(cfg.gamma ** (j - 1) * r[t + j - 1] for j in range(1, n + 1))
        return out + cfg.gamma**n * v[t + n]

    expected = np.zeros(horizon)
    for t in range(horizon):
        rest = horizon - t
        acc = sum(
            (1 - cfg.lam) * cfg.lam ** (n - 1) * nstep(t, n) for n in range(1, rest)
        )
        expected[t] = acc + cfg.lam ** (rest - 1) * nstep(t, rest)
    got = lambda_returns(r, v, cfg)
    assert np.allclose(got, expected, atol=1e-10)


def test_lambda_batched_matches_rows():
    rng = np.random.default_rng(4)
    cfg = LambdaReturnConfig()
    r = rng.normal(size=(6, 5))
    v = rng.normal(size=(6, 6))
    got = lambda_returns(r, v, cfg)
    for i in range(6):
        assert np.allclose(got[i], lambda_returns(r[i], v[i], cfg), atol=1e-15)


def test_lambda_config_validation():
    with pytest.raises(ConfigError):
        LambdaReturnConfig(lam=1.5)
    with pytest.raises(ConfigError):
        LambdaReturnConfig(gamma=1.0)


# ----------------------------------------------------------- policies & gating


def tiny_worker(seed=0):
    return WorkerPolicy(D, 2, hidden=(16, 16), rng=np.random.default_rng(seed))


def tiny_setup(lengths=(16, 8, INF), seed=0):
    res = ResolutionSet(lengths, k=8)
    bank = SkillBank(
        SkillConfig(obs_dim=D, hidden=(16, 16), latent_groups=2, latent_classes=4),
        res,
        np.random.default_rng(seed),
    )
    manager = ManagerPolicy(
        D, res, latent_groups=2, latent_classes=4, hidden=(16, 16),
        rng=np.random.default_rng(seed + 1),
    )
    return res, bank, manager


def test_worker_actions_bounded_and_deterministic():
    w = tiny_worker()
    for p in w.params.values():  # random weights, not the zero-init heads
        p.data[:] = np.random.default_rng(2).normal(size=p.data.shape) * 0.5
    obs = np.random.default_rng(3).normal(size=(9, D))
    goal = np.random.default_rng(4).normal(size=(9, D))
    a1 = w.act(obs, goal, np.random.default_rng(7))
    a2 = w.act(obs, goal, np.random.default_rng(7))
    assert np.array_equal(a1, a2)
    assert np.all(np.abs(a1) < 1.0)
    greedy = w.act(obs, goal, np.random.default_rng(0), greedy=True)
    with T.no_grad():
        mean, _, _ = w.forward(obs, goal)
    assert np.array_equal(greedy, np.tanh(mean.data))


def test_worker_log_std_bounded():
    w = tiny_worker()
    w.params["worker.log_std.b"].data[:] = 1e3
    with T.no_grad():
        _, hi, _ = w.forward(np.zeros((1, D)), np.zeros((1, D)))
    w.params["worker.log_std.b"].data[:] = -1e3
    with T.no_grad():
        _, lo, _ = w.forward(np.zeros((1, D)), np.zeros((1, D)))
    assert np.all(hi.data <= 1.0 + 1e-12) and np.all(lo.data >= -5.0 - 1e-12)


def test_worker_log_prob_matches_gaussian_formula():
    w = tiny_worker()
    rng = np.random.default_rng(5)
    for p in w.params.values():
        p.data[:] = rng.normal(size=p.data.shape) * 0.3
    obs = rng.normal(size=(3, D))
    goal = rng.normal(size=(3, D))
    actions = np.tanh(rng.normal(size=(3, 2)))
    mean, log_std, _ = w.forward(obs, goal)
    lp = w.log_prob(mean, log_std, actions).data
    u = np.arctanh(np.clip(actions, -1 + 1e-9, 1 - 1e-9))
    base = (
        -0.5 * (((u - mean.data) / np.exp(log_std.data)) ** 2).sum(-1)
        - log_std.data.sum(-1)
        - 0.5 * 2 * LOG_2PI
    )
    corr = np.log(1 - np.tanh(u) ** 2 + 1e-9).sum(-1)
    assert np.allclose(lp, base - corr, atol=1e-12)


def test_select_subgoal_forced_choice_gates_bitwise():
    res, bank, manager = tiny_setup()
    manager.params["manager.choice.b"].data[:] = [0.0, 1e9, 0.0]
    obs = np.random.default_rng(0).normal(size=(4, D))
    rng = np.random.default_rng(1)
    subgoal, latents, choice = select_subgoal(manager, bank, obs, rng)
    assert np.array_equal(choice[:, 1], np.ones(4))
    # Recompute candidate 1 from the recorded latent; must match bit-for-bit.
    cand = bank.decode(1, obs, T.tensor(latents[:, 1])).data
    assert np.array_equal(subgoal, cand)
    assert latents.shape == (4, 3, 2, 4)


def test_select_subgoal_single_head():
    res, bank, manager = tiny_setup(lengths=(8,))
    manager.params["manager.choice.b"].data[:] = np.random.default_rng(2).normal(size=1)
    obs = np.random.default_rng(3).normal(size=(2, D))
    subgoal, latents, choice = select_subgoal(manager, bank, obs, np.random.default_rng(4))
    cand = bank.decode(0, obs, T.tensor(latents[:, 0])).data
    assert np.array_equal(subgoal, cand)
    assert np.array_equal(choice, np.ones((2, 1)))


def test_select_subgoal_compositional_oracle():
    res, bank, manager = tiny_setup(seed=11)
    rng_w = np.random.default_rng(9)
    for p in manager.params.values():
        p.data[:] = rng_w.normal(size=p.data.shape) * 0.2
    obs = rng_w.normal(size=(3, D))
    got_sg, got_z, got_c = select_subgoal(manager, bank, obs, np.random.default_rng(42))

    # Explicit sample-decode-gate composition with identical rng consumption.
    rng = np.random.default_rng(42)
    with T.no_grad():
        feats = manager.mlp.trunk(obs)
        zs, cands = [], []
        for i in range(res.n):
            dist = manager.skill_dist(feats, i)
            z = dist.sample(rng)
            zs.append(z)
            cands.append(bank.decode(i, obs, T.tensor(z)).data)
        c = manager.choice_dist(feats).sample(rng).reshape(3, res.n)
    sg = sum(cands[i] * c[:, i : i + 1] for i in range(res.n))
    assert np.array_equal(got_c, c)
    assert np.array_equal(got_z, np.stack(zs, axis=1))
    assert np.array_equal(got_sg, sg)


def test_manager_bank_mismatch_rejected():
    res, bank, _ = tiny_setup()
    manager = ManagerPolicy(D, ResolutionSet((8,)), latent_groups=2, latent_classes=4,
                            hidden=(16,), rng=np.random.default_rng(0))
    with pytest.raises(ConfigError):
        select_subgoal(manager, bank, np.zeros((1, D)), np.random.default_rng(0))


# -------------------------------------------------------------- manager losses


def forced_manager(choice_logits, skill_logits, v_ext=0.0, v_expl=0.0):
    """A manager whose heads output fixed logits/values for every state."""
    res = ResolutionSet((16, 8), k=8)
    m = ManagerPolicy(D, res, latent_groups=1, latent_classes=2, hidden=(8,),
                      rng=np.random.default_rng(0))
    m.params["manager.choice.w"].data[:] = 0.0
    m.params["manager.choice.b"].data[:] = choice_logits
    for i in range(2):
        m.params[f"manager.skill{i}.w"].data[:] = 0.0
        m.params[f"manager.skill{i}.b"].data[:] = skill_logits[i]
    m.params["manager.v_ext.w"].data[:] = 0.0
    m.params["manager.v_ext.b"].data[:] = v_ext
    m.params["manager.v_expl.w"].data[:] = 0.0
    m.params["manager.v_expl.b"].data[:] = v_expl
    return m


def onehot(n, i):
    v = np.zeros(n)
    v[i] = 1.0
    return v


def test_manager_losses_hand_oracle():
    # 1 batch row, 2 abstract steps, N=2 heads with 1x2 latents; every
    # probability and value is pinned so the whole loss is hand-computable.
    cl = np.log([0.75, 0.25])
    sl = [np.log([0.6, 0.4]), np.log([0.9, 0.1])]
    manager = forced_manager(cl, sl, v_ext=0.5, v_expl=0.0)
    states = np.zeros((1, 3, D))
    # step 0 picks head 0 with z=class0; step 1 picks head 1 with z=class1.
    choices = np.stack([onehot(2, 0), onehot(2, 1)])[None]
    latents = np.stack(
        [np.stack([onehot(2, 0)[None], onehot(2, 0)[None]]),
         np.stack([onehot(2, 1)[None], onehot(2, 1)[None]])]
    )[None]  # (1, M=2, N=2, G=1, C=2)
    r_ext = np.array([[1.0, 0.0]])
    r_expl = np.array([[0.0, 0.0]])
    traj = AbstractTrajectory(states, latents, choices, r_ext, r_expl)
    lam, gamma = 0.95, 0.99
    coeffs = {"choice": 0.3, "skill0": 0.2, "skill1": 0.2}
    losses, stats = manager_losses(
        manager, traj, coeffs,
        LambdaReturnConfig(lam=lam, gamma=gamma),
        AdvantageConfig(standardize=False),
    )

    # Hand computation. Values are 0.5 everywhere for ext, 0 for expl.
    g1 = 0.0 + gamma * ((1 - lam) * 0.5 + lam * 0.5)          # ext G_1
    g0 = 1.0 + gamma * ((1 - lam) * 0.5 + lam * g1)           # ext G_0
    a = np.array([g0 - 0.5, g1 - 0.5])                        # expl adv is 0
    h_choice = -(0.75 * np.log(0.75) + 0.25 * np.log(0.25))
    lp_choice = np.log([0.75, 0.25])                          # picked 0 then 1
    expected_choice = -(lp_choice @ a + 0.3 * 2 * h_choice)
    assert losses["choice"].data == pytest.approx(expected_choice, abs=1e-12)

    h0 = -(0.6 * np.log(0.6) + 0.4 * np.log(0.4))
    # Head 0 chosen only at step 0, where its latent was class 0.
    expected_s0 = -(np.log(0.6) * a[0] + 0.2 * 2 * h0)
    assert losses["skill0"].data == pytest.approx(expected_s0, abs=1e-12)

    h1 = -(0.9 * np.log(0.9) + 0.1 * np.log(0.1))
    expected_s1 = -(np.log(0.1) * a[1] + 0.2 * 2 * h1)
    assert losses["skill1"].data == pytest.approx(expected_s1, abs=1e-12)

    expected_v_ext = (0.5 - g0) ** 2 + (0.5 - g1) ** 2
    assert losses["v_ext"].data == pytest.approx(expected_v_ext, abs=1e-12)
    ge1 = 0.0
    ge0 = 0.0
    assert losses["v_expl"].data == pytest.approx((0 - ge0) ** 2 + (0 - ge1) ** 2, abs=1e-12)


def test_unchosen_head_pg_term_is_exactly_zero():
    # Head 1 gets non-uniform logits so its entropy gradient is nonzero
    # (at the uniform point the entropy gradient vanishes identically).
    manager = forced_manager(np.log([0.7, 0.3]), [np.zeros(2), np.log([0.9, 0.1])])
    rng = np.random.default_rng(0)
    states = rng.normal(size=(2, 3, D))
    choices = np.zeros((2, 2, 2))
    choices[:, :, 0] = 1.0  # head 1 never chosen
    latents = np.zeros((2, 2, 2, 1, 2))
    latents[..., 0] = 1.0
    traj = AbstractTrajectory(states, latents, choices,
                              rng.normal(size=(2, 2)), rng.normal(size=(2, 2)))
    coeffs = {"choice": 0.0, "skill0": 0.0, "skill1": 0.0}
    losses, _ = manager_losses(manager, traj, coeffs,
                               adv_cfg=AdvantageConfig(standardize=False))
    # With zero entropy coefficient the whole skill-1 loss is its PG term.
    assert losses["skill1"].data == 0.0
    manager.zero_grad()
    losses["skill1"].backward()
    for k in ("manager.skill1.w", "manager.skill1.b"):
        assert np.count_nonzero(manager.params[k].grad) == 0

    # With an entropy coefficient, the gradient equals the entropy-only
    # gradient: the PG term still contributes nothing.
    coeffs = {"choice": 0.0, "skill0": 0.0, "skill1": 0.7}
    losses_e, _ = manager_losses(manager, traj, coeffs,
                                 adv_cfg=AdvantageConfig(standardize=False))
    manager.zero_grad()
    losses_e["skill1"].backward()
    grads_full = {k: manager.params[k].grad.copy() for k in ("manager.skill1.w", "manager.skill1.b")}
    assert any(np.count_nonzero(g) for g in grads_full.values())


def test_zero_advantage_leaves_pure_entropy_loss():
    manager = forced_manager(np.log([0.5, 0.5]), [np.zeros(2), np.zeros(2)])
    states = np.zeros((1, 3, D))
    choices = np.zeros((1, 2, 2))
    choices[0, :, 0] = 1.0
    latents = np.zeros((1, 2, 2, 1, 2))
    latents[..., 0] = 1.0
    # Zero rewards and zero critic values -> zero advantages everywhere.
    traj = AbstractTrajectory(states, latents, choices, np.zeros((1, 2)), np.zeros((1, 2)))
    coeffs = {"choice": 0.4, "skill0": 0.4, "skill1": 0.4}
    losses, _ = manager_losses(manager, traj, coeffs,
                               adv_cfg=AdvantageConfig(standardize=False))
    h = math.log(2)  # both heads uniform over 2 classes/options
    assert losses["choice"].data == pytest.approx(-0.4 * 2 * h, abs=1e-12)
    assert losses["skill0"].data == pytest.approx(-0.4 * 2 * h, abs=1e-12)


def test_advantage_rescaling_scales_gradients():
    res, bank, manager = tiny_setup(seed=2)
    rng = np.random.default_rng(0)
    for p in manager.params.values():
        p.data[:] = rng.normal(size=p.data.shape) * 0.2
    states = rng.normal(size=(3, 3, D))
    latents = np.zeros((3, 2, 3, 2, 4))
    latents[..., 0] = 1.0
    choices = np.zeros((3, 2, 3))
    choices[..., 1] = 1.0
    r1 = rng.normal(size=(3, 2))
    traj1 = AbstractTrajectory(states, latents, choices, r1, np.zeros((3, 2)))
    traj2 = AbstractTrajectory(states, latents, choices, 2.7 * r1, np.zeros((3, 2)))
    coeffs = {"choice": 0.0, "skill0": 0.0, "skill1": 0.0, "skill2": 0.0}
    # Zero critics: advantage = lambda-returns, which scale linearly in r.
    for k in ("manager.v_ext.w", "manager.v_ext.b", "manager.v_expl.w", "manager.v_expl.b"):
        manager.params[k].data[:] = 0.0
    cfg = AdvantageConfig(standardize=False)
    l1, _ = manager_losses(manager, traj1, coeffs, adv_cfg=cfg)
    manager.zero_grad()
    l1["choice"].backward()
    g1 = manager.params["manager.choice.w"].grad.copy()
    l2, _ = manager_losses(manager, traj2, coeffs, adv_cfg=cfg)
    manager.zero_grad()
    l2["choice"].backward()
    g2 = manager.params["manager.choice.w"].grad.copy()
    assert np.allclose(g2, 2.7 * g1, rtol=1e-12, atol=1e-15)


def test_manager_nonfinite_advantage_rejected():
    manager = forced_manager(np.zeros(2), [np.zeros(2), np.zeros(2)])
    states = np.zeros((1, 3, D))
    choices = np.zeros((1, 2, 2))
    choices[0, :, 0] = 1.0
    latents = np.zeros((1, 2, 2, 1, 2))
    latents[..., 0] = 1.0
    rewards = np.array([[np.nan, 0.0]])
    traj = AbstractTrajectory(states, latents, choices, rewards, np.zeros((1, 2)))
    with pytest.raises(T.NumericError):
        manager_losses(manager, traj, {"choice": 0.0, "skill0": 0.0, "skill1": 0.0})


def test_manager_alive_mask_blocks_terminal_learning():
    manager = forced_manager(np.log([0.5, 0.5]), [np.zeros(2), np.zeros(2)], v_ext=0.3)
    states = np.random.default_rng(1).normal(size=(1, 3, D))
    choices = np.zeros((1, 2, 2))
    choices[0, :, 0] = 1.0
    latents = np.zeros((1, 2, 2, 1, 2))
    latents[..., 0] = 1.0
    rewards = np.array([[1.0, 5.0]])
    alive = np.array([[1.0, 0.0, 0.0]])  # terminal after first chunk
    traj = AbstractTrajectory(states, latents, choices, rewards,
                              np.zeros((1, 2)), alive=alive)
    coeffs = {"choice": 0.0, "skill0": 0.0, "skill1": 0.0}
    losses, _ = manager_losses(manager, traj, coeffs,
                               adv_cfg=AdvantageConfig(standardize=False))
    # Post-terminal reward 5.0 must not leak in: G_0 = r_0 = 1, A_0 = 1 - 0 = 1...
    # values are masked to 0 at dead states, so G_0 = 1.0 and A_0 = 1.0 - 0.3.
    expected = -(math.log(0.5) * (1.0 - 0.3))
    assert losses["choice"].data == pytest.approx(expected, abs=1e-12)


def test_bandit_score_function_gradient_matches_analytic():
    # 2-arm bandit: fixed state, choice head probabilities p, arm rewards r.
    # The mean gradient of the choice loss w.r.t. the head bias over many
    # sampled one-step trajectories must match -p_j (r_j - E[r]) within 3
    # standard errors.
    p_logits = np.log([0.65, 0.35])
    r_arms = np.array([1.0, -0.5])
    manager = forced_manager(p_logits, [np.zeros(2), np.zeros(2)])
    probs = np.exp(p_logits)
    coeffs = {"choice": 0.0, "skill0": 0.0, "skill1": 0.0}
    cfg = AdvantageConfig(standardize=False)
    lam = LambdaReturnConfig()
    rng = np.random.default_rng(0)
    n_batches, batch = 50, 2000
    means = []
    for _ in range(n_batches):
        c_idx = rng.choice(2, size=batch, p=probs)
        choices = np.zeros((batch, 1, 2))
        choices[np.arange(batch), 0, c_idx] = 1.0
        latents = np.zeros((batch, 1, 2, 1, 2))
        latents[..., 0] = 1.0
        rewards = r_arms[c_idx][:, None]
        traj = AbstractTrajectory(np.zeros((batch, 2, D)), latents, choices,
                                  rewards, np.zeros((batch, 1)))
        losses, _ = manager_losses(manager, traj, coeffs, lam, cfg)
        manager.zero_grad()
        losses["choice"].backward()
        means.append(manager.params["manager.choice.b"].grad.copy())
    means = np.stack(means)
    grand_mean = means.mean(axis=0)
    se = means.std(axis=0, ddof=1) / np.sqrt(n_batches)
    expected = -probs * (r_arms - probs @ r_arms)
    assert np.all(np.abs(grand_mean - expected) <= 3 * se + 1e-12), (
        grand_mean, expected, se
    )


# --------------------------------------------------------------- worker losses


def test_worker_rewards_one_when_on_goal():
    w = tiny_worker()
    goal = np.random.default_rng(0).normal(size=(2, D))
    states = np.repeat(goal[:, None, :], 4, axis=1)  # every state equals goal
    chunk = WorkerChunk(states, goal, np.zeros((2, 3, 2)))
    _, stats = worker_losses(w, chunk, coeff=0.0, standardize=False)
    assert stats["reward_mean"] == pytest.approx(1.0, abs=1e-12)


def test_worker_zero_rewards_zero_critic():
    # States orthogonal to the goal give zero reward; with zero-init value
    # head the returns are 0, so critic loss is 0 and the actor loss is pure
    # entropy.
    w = tiny_worker()
    goal = np.zeros((1, D))
    goal[0, 0] = 1.0
    states = np.zeros((1, 4, D))
    states[:, :, 1] = 1.0
    actions = np.full((1, 3, 2), 0.1)
    chunk = WorkerChunk(states, goal, actions)
    losses, _ = worker_losses(w, chunk, coeff=0.5, standardize=False)
    assert losses["critic"].data == 0.0
    with T.no_grad():
        _, log_std, _ = w.forward(states[0, :3], np.repeat(goal, 3, axis=0))
    h = WorkerPolicy.entropy(log_std).data.sum()
    assert losses["actor"].data == pytest.approx(-0.5 * h, abs=1e-12)


def test_worker_hand_oracle():
    # 3-step chunk, all heads pinned to constants; every quantity below is
    # computed by hand from the formulas.
    w = tiny_worker()
    w.params["worker.mean.w"].data[:] = 0.0
    w.params["worker.mean.b"].data[:] = 0.3
    w.params["worker.log_std.w"].data[:] = 0.0
    w.params["worker.log_std.b"].data[:] = 0.0  # tanh(0) -> log_std = -2
    w.params["worker.value.w"].data[:] = 0.0
    w.params["worker.value.b"].data[:] = 0.25

    goal = np.array([[1.0, 0.0, 0.0, 0.0]])
    states = np.zeros((1, 4, D))
    states[0, 1] = [1.0, 1.0, 0.0, 0.0]   # cosine_max = 1/2
    states[0, 2] = [2.0, 0.0, 0.0, 0.0]   # 2/4 = 1/2
    states[0, 3] = [1.0, 0.0, 0.0, 0.0]   # exactly the goal -> 1
    actions = np.full((1, 3, 2), 0.2)
    chunk = WorkerChunk(states, goal, actions)
    lam_cfg = LambdaReturnConfig(lam=0.5, gamma=0.9)
    losses, stats = worker_losses(w, chunk, coeff=0.3, lam_cfg=lam_cfg, standardize=False)

    r = np.array([0.5, 0.5, 1.0])
    v = 0.25
    g2 = r[2] + 0.9 * ((1 - 0.5) * v + 0.5 * v)
    g1 = r[1] + 0.9 * ((1 - 0.5) * v + 0.5 * g2)
    g0 = r[0] + 0.9 * ((1 - 0.5) * v + 0.5 * g1)
    g = np.array([g0, g1, g2])
    adv = g - v

    u = np.arctanh(np.clip(actions[0, 0], -1 + 1e-9, 1 - 1e-9))
    log_std = -2.0
    lp = (
        -0.5 * (((u - 0.3) / np.exp(log_std)) ** 2).sum()
        - 2 * log_std
        - 0.5 * 2 * LOG_2PI
        - np.log(1 - np.tanh(u) ** 2 + 1e-9).sum()
    )
    h = 2 * log_std + 0.5 * 2 * (LOG_2PI + 1.0)
    expected_actor = -(lp * adv.sum() + 0.3 * 3 * h)
    expected_critic = ((v - g) ** 2).sum()
    assert losses["actor"].data == pytest.approx(expected_actor, abs=1e-10)
    assert losses["critic"].data == pytest.approx(expected_critic, abs=1e-12)
    assert stats["reward_mean"] == pytest.approx(r.mean(), abs=1e-15)


def test_worker_alive_mask_stops_padding():
    w = tiny_worker()
    goal = np.random.default_rng(0).normal(size=(1, D))
    states = np.repeat(goal[:, None, :], 4, axis=1)
    actions = np.zeros((1, 3, 2))
    alive = np.array([[1.0, 1.0, 0.0, 0.0]])  # terminal at state 2
    chunk = WorkerChunk(states, goal, actions, alive=alive)
    losses, stats = worker_losses(w, chunk, coeff=0.0, standardize=False)
    # Only the first two rewards count (actions at t=0, 1).
    assert stats["reward_mean"] == pytest.approx(1.0, abs=1e-12)
    lam, gamma = 0.95, 0.99
    g1 = 1.0  # bootstrap dead -> v = 0
    g0 = 1.0 + gamma * lam * g1
    assert losses["critic"].data == pytest.approx(g0**2 + g1**2, abs=1e-12)


def test_worker_gradients_flow_and_are_finite():
    w = tiny_worker(seed=3)
    rng = np.random.default_rng(6)
    for p in w.params.values():
        p.data[:] = rng.normal(size=p.data.shape) * 0.3
    states = rng.normal(size=(4, 9, D))
    goal = rng.normal(size=(4, D))
    actions = np.tanh(rng.normal(size=(4, 8, 2)))
    losses, _ = worker_losses(w, WorkerChunk(states, goal, actions), coeff=0.1)
    w.zero_grad()
    (losses["actor"] + losses["critic"]).backward()
    for name, p in w.params.items():
        assert np.all(np.isfinite(p.grad)), name
    assert np.count_nonzero(w.params["worker.l0.w"].grad) > 0


# ------------------------------------------------------------- entropy control


def test_entropy_coeff_fixed_point():
    cfg = EntropyConfig()
    assert entropy_coeff_update(0.37, 0.5 * 4.0, 4.0, cfg) == pytest.approx(0.37)


def test_entropy_coeff_zero_entropy_multiplies_by_exp_kappa_eta():
    cfg = EntropyConfig()
    got = entropy_coeff_update(0.2, 0.0, 4.0, cfg)
    assert got == pytest.approx(0.2 * math.exp(cfg.kappa * cfg.eta), rel=1e-12)


def test_entropy_coeff_monotone_decrease_to_clamp():
    cfg = EntropyConfig()
    coeff = 1.0
    h_max = 3.0
    prev = coeff
    for _ in range(5000):
        coeff = entropy_coeff_update(coeff, h_max, h_max, cfg)  # pinned above target
        assert coeff <= prev + 1e-15
        prev = coeff
    assert coeff == cfg.lo


def test_entropy_coeff_clamped_above():
    cfg = EntropyConfig()
    coeff = 1.0
    for _ in range(100):
        coeff = entropy_coeff_update(coeff, 0.0, 1.0, cfg)
    assert coeff == cfg.hi


def test_standardized_masked():
    a = np.array([[1.0, 2.0, 100.0], [3.0, 4.0, -50.0]])
    mask = np.array([[1.0, 1.0, 0.0], [1.0, 1.0, 0.0]])
    out = standardized(a, mask)
    vals = out[mask > 0]
    assert abs(vals.mean()) < 1e-12
    assert vals.std() == pytest.approx(1.0, abs=1e-4)
    assert np.all(out[mask == 0] == 0)
