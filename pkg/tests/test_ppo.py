import math

import numpy as np
import pytest

from plangen.encode import ActionIndexMap, init_action_map
from plangen.genmdp import GenConfig, GenerationMDP, Phase, Trajectory, Transition
from plangen.nlm import NLMConfig
from plangen.ppo import (
    METRICS_HEADER,
    GenerationPolicy,
    PPOConfig,
    Trainer,
    advantages,
    anneal_entropy,
    batch_values,
    entropy_term,
    lifted_distribution,
    ppo_loss,
    returns_two_channel,
)

SMALL_NLM = NLMConfig(depth=2, breadth=2, hidden_channels=4)


@pytest.fixture(scope="module")
def mdp(bw):
    return GenerationMDP(bw, "builtin:blocksworld", GenConfig(max_init_atoms=5, goal_spec=("on(block, block)",)))


def _traj(spec, status=Phase.DONE):
    ts = [Transition(ph, None, None, 0, 0.0, r_consistency=rc, r_difficulty=rd) for ph, rc, rd in spec]
    return Trajectory(ts, status=status)


# -- returns and advantages --------------------------------------------------


def test_returns_examples():
    cfg = PPOConfig()
    r = returns_two_channel(_traj([("goal", 0, 0), ("goal", 0, 0), ("goal", 0, 1)]), cfg)
    assert np.allclose(r, [0.990025, 0.995, 1.0], atol=1e-12)
    r = returns_two_channel(_traj([("init", 0, 0), ("init", 0, 0), ("init", -1, 0)], Phase.DISCARDED), cfg)
    assert np.allclose(r, [-0.81, -0.9, -1.0], atol=1e-12)


def test_returns_are_additive():
    cfg = PPOConfig()
    spec = [("init", 0, 0), ("init", -1, 0), ("goal", 0, 0), ("goal", 0, 0.7)]
    both = returns_two_channel(_traj(spec), cfg)
    c = returns_two_channel(_traj([(p, rc, 0) for p, rc, _ in spec]), cfg)
    d = returns_two_channel(_traj([(p, 0, rd) for p, _, rd in spec]), cfg)
    assert np.allclose(both, c + d, atol=1e-15)
    assert c[2:].tolist() == [0, 0]  # consistency never reaches the goal phase


def test_advantages():
    r = np.array([1.0, 2.0, 3.0])
    assert advantages(r, r, normalize=False).tolist() == [0, 0, 0]
    assert advantages(r, r - 5).tolist() == [0, 0, 0]
    a = advantages(np.random.default_rng(0).standard_normal(50), np.zeros(50))
    assert abs(a.mean()) < 1e-9 and a.std() == pytest.approx(1)
    assert advantages(np.array([2.0]), np.array([0.5])).tolist() == [1.5]


# -- distributions -----------------------------------------------------------


def test_lifted_distribution_examples():
    amap = ActionIndexMap([1], 4, "atom")
    assert lifted_distribution(np.array([0.25] * 4 + [0.0]), amap).tolist() == [1.0, 0.0]


def test_lifted_concentrated_on_predicate(mdp, bw):
    amap = init_action_map(mdp, 2)
    from plangen.genmdp import AtomAction

    probs = np.zeros(amap.size)
    probs[amap.encode(AtomAction(bw.pred_index["on"], (1, 0)))] = 1.0
    lifted = lifted_distribution(probs, amap)
    assert lifted[bw.pred_index["on"]] == 1.0 and lifted.sum() == 1.0


def test_lifted_sum_preserved(mdp):
    rng = np.random.default_rng(0)
    for n in range(1, 6):
        amap = init_action_map(mdp, n)
        p = rng.random(amap.size) * (rng.random(amap.size) < 0.5)
        p[-1] += 0.1
        p /= p.sum()
        assert abs(lifted_distribution(p, amap).sum() - 1) < 1e-9


def test_entropy_term_examples():
    u4 = np.full(4, 0.25)
    assert entropy_term(u4, u4) == pytest.approx(math.log(4), abs=1e-12)
    assert entropy_term(np.array([0.0, 1.0]), np.array([1.0])) == 0.0
    assert entropy_term(np.full(8, 1 / 8), np.full(2, 0.5)) == pytest.approx(2 * math.log(2), abs=1e-12)
    rng = np.random.default_rng(1)
    for _ in range(20):
        p = rng.dirichlet(np.ones(6))
        assert entropy_term(p, p[:3] / p[:3].sum()) >= 0


def test_anneal_is_constant():
    cfg = PPOConfig()
    assert {anneal_entropy(cfg, i, "init") for i in (0, 10, 10_000)} == {0.1}
    assert {anneal_entropy(cfg, i, "goal") for i in (0, 10, 10_000)} == {0.0}


# -- loss --------------------------------------------------------------------


@pytest.fixture(scope="module")
def sampled(mdp):
    policy = GenerationPolicy(mdp, SMALL_NLM, seed=0)
    rng = np.random.default_rng(0)
    init, goal = [], []
    while len(goal) < 6:
        _, traj = policy.episode(rng)
        init += [t for t in traj.transitions if t.phase == "init"]
        goal += [t for t in traj.transitions if t.phase == "goal"]
    return policy, init, goal


def test_first_epoch_surrogate(sampled):
    policy, init, _ = sampled
    adv = np.random.default_rng(2).standard_normal(len(init))
    parts = ppo_loss(policy.nets["init"], init, adv, np.zeros(len(init)), PPOConfig(), 0.1)
    assert parts.surrogate == pytest.approx(-adv.mean(), abs=1e-12)


def test_clipped_ratio(sampled):
    from dataclasses import replace

    policy, init, _ = sampled
    shifted = [replace(t, log_prob=t.log_prob - math.log(1.5)) for t in init]
    adv = np.full(len(init), 2.0)
    parts = ppo_loss(policy.nets["init"], shifted, adv, np.zeros(len(init)), PPOConfig(), 0.0)
    assert parts.surrogate == pytest.approx(-1.1 * 2.0, abs=1e-9)
    parts = ppo_loss(policy.nets["init"], shifted, -adv, np.zeros(len(init)), PPOConfig(), 0.0)
    assert parts.surrogate == pytest.approx(1.5 * 2.0, abs=1e-9)  # negative advantages are not clipped from above


def test_goal_phase_entropy_zero(sampled):
    policy, _, goal = sampled
    parts = ppo_loss(policy.nets["goal"], goal, np.ones(len(goal)), np.zeros(len(goal)), PPOConfig(), 0.0)
    assert parts.entropy == 0.0


def test_value_loss(sampled):
    policy, init, _ = sampled
    values = batch_values(policy.nets["init"].critic, init)
    parts = ppo_loss(policy.nets["init"], init, np.zeros(len(init)), values, PPOConfig(), 0.0)
    assert parts.value == pytest.approx(0.0, abs=1e-20)
    parts = ppo_loss(policy.nets["init"], init, np.zeros(len(init)), values + 2, PPOConfig(), 0.0)
    assert parts.value == pytest.approx(4.0)


def test_zero_advantage_leaves_policy(sampled):
    from plangen.nlm import Adam

    policy, init, _ = sampled
    nets = policy.nets["init"]
    before = nets.policy.get_flat()
    critic_before = nets.critic.get_flat()
    opt = Adam(nets.params, lr=1e-3)
    parts = ppo_loss(nets, init, np.zeros(len(init)), np.ones(len(init)), PPOConfig(), 0.0)
    opt.zero_grad()
    parts.loss.backward()
    opt.step()
    assert np.array_equal(nets.policy.get_flat(), before)
    assert not np.array_equal(nets.critic.get_flat(), critic_before)
    nets.critic.set_flat(critic_before)


def test_loss_rejects_non_finite(sampled):
    from plangen.ppo import TrainingError

    policy, init, _ = sampled
    with pytest.raises(TrainingError):
        ppo_loss(policy.nets["init"], init, np.full(len(init), np.nan), np.zeros(len(init)), PPOConfig(), 0.0)


# -- training loop -----------------------------------------------------------


def _trainer(mdp, seed=0):
    return Trainer(mdp, SMALL_NLM, PPOConfig(trajectories_per_iter=4, checkpoint_every=1), seed=seed)


def test_collect_trajectories(mdp):
    stats = _trainer(mdp).collect_trajectories()
    assert len(stats.trajectories) + stats.dropped == 4
    for traj in stats.trajectories:
        phases = [t.phase for t in traj.transitions]
        assert phases == sorted(phases, key=["init", "goal"].index)
        assert all(t.mask[t.action] and np.isfinite(t.log_prob) for t in traj.transitions)
        if traj.status == Phase.DISCARDED:
            assert all(t.r_difficulty == 0 for t in traj.transitions)


def test_actions_replay(mdp):
    """Recorded action indices rebuild the same episode."""
    from plangen.encode import decode_action
    from plangen.genmdp import TERMINATE

    policy = GenerationPolicy(mdp, SMALL_NLM, seed=1)
    gs0, traj = policy.episode(np.random.default_rng(4))
    gs = mdp.new_episode()
    for t in traj.transitions:
        a = decode_action(t.action, policy._encode(gs, mdp)[2])
        if gs.phase == Phase.INIT:
            gs = mdp.terminate_init(gs) if a is TERMINATE else mdp.step_init(gs, a)
        else:
            gs = mdp.terminate_goal(gs) if a is TERMINATE else mdp.step_goal(gs, a)
    assert gs.phase == gs0.phase and gs.s_ic == gs0.s_ic


def test_train_iteration_metrics(mdp):
    tr = _trainer(mdp)
    row = tr.train_iteration()
    assert tuple(row) == METRICS_HEADER
    assert row["iter"] == 0 and tr.iteration == 1
    assert 0 <= row["discard_rate"] <= 1


def test_training_deterministic(mdp):
    a, b = _trainer(mdp, 5), _trainer(mdp, 5)
    for _ in range(2):
        ra, rb = a.train_iteration(), b.train_iteration()
        ra.pop("wall_s"), rb.pop("wall_s")
        assert repr(ra) == repr(rb)
    assert np.array_equal(a.policy.nets["init"].policy.get_flat(), b.policy.nets["init"].policy.get_flat())


def test_resume_continues_exactly(mdp, tmp_path):
    straight = _trainer(mdp, 2)
    straight.fit(3)
    ck = tmp_path / "ck.npz"
    first = _trainer(mdp, 2)
    first.fit(2, checkpoint_path=ck)
    resumed = _trainer(mdp, 2)
    resumed.load(ck)
    assert resumed.iteration == 2
    resumed.fit(3)
    for ph in ("init", "goal"):
        assert np.array_equal(straight.policy.nets[ph].policy.get_flat(), resumed.policy.nets[ph].policy.get_flat())


def test_metrics_file_resume(mdp, tmp_path):
    path = tmp_path / "m.csv"
    ck = tmp_path / "ck.npz"
    _trainer(mdp, 1).fit(2, metrics_path=path, checkpoint_path=ck)
    t = _trainer(mdp, 1)
    t.load(ck)
    t.fit(3, metrics_path=path)
    lines = path.read_text().splitlines()
    assert lines[0] == ",".join(METRICS_HEADER)
    assert [ln.split(",")[0] for ln in lines[1:]] == ["0", "1", "2"]


def test_config_validation():
    with pytest.raises(ValueError):
        PPOConfig(clip_eps=0)
    with pytest.raises(ValueError):
        PPOConfig(entropy_coeff_init=-0.1)
    with pytest.raises(ValueError):
        PPOConfig(gamma_difficulty=1.5)
