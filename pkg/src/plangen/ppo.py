"""End-to-end policy training for the two generation phases.

Each phase has a policy network and a critic network.  Episodes are sampled
from the current policies, finished problems are scored by the embedded
planners, and both pairs are updated with the clipped surrogate objective.
"""
from __future__ import annotations

import csv
import logging
import os
import time
from collections import defaultdict
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np

from .baseline import GenerationFailed, GenerationResult
from .encode import (
    ActionIndexMap,
    encode_goal_pair,
    encode_init,
    goal_action_map,
    goal_channel_counts,
    init_action_map,
    init_channel_counts,
    mask_goal,
    mask_init,
    stack,
)
from .evaluate import DEFAULT_BUDGET, DEFAULT_PLANNERS, EvaluationError, difficulty
from .genmdp import (
    TERMINATE,
    GenConfig,
    GenerationMDP,
    GenState,
    Phase,
    Trajectory,
    Transition,
    assign_rewards,
)
from .nlm import NLM, Adam, NLMConfig, autodiff as ad
from .nlm.model import load_into, read_checkpoint, save_checkpoint

log = logging.getLogger(__name__)

METRICS_HEADER = (
    "iter", "mean_reward", "mean_difficulty", "discard_rate",
    "entropy_init", "entropy_goal", "loss_init", "loss_goal", "wall_s",
)
PHASES = ("init", "goal")


class TrainingError(RuntimeError):
    pass


@dataclass(frozen=True)
class PPOConfig:
    clip_eps: float = 0.1
    epochs_per_iter: int = 1
    trajectories_per_iter: int = 25
    minibatch: int = 75
    lr: float = 1e-3
    entropy_coeff_init: float = 0.1
    entropy_coeff_goal: float = 0.0
    gamma_consistency: float = 0.9
    gamma_difficulty: float = 0.995
    value_coeff: float = 0.5
    iterations: int = 1500
    checkpoint_every: int = 50

    def __post_init__(self):
        for name in ("clip_eps", "epochs_per_iter", "trajectories_per_iter", "minibatch", "lr",
                     "gamma_consistency", "gamma_difficulty", "iterations", "checkpoint_every"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.entropy_coeff_init < 0 or self.entropy_coeff_goal < 0 or self.value_coeff < 0:
            raise ValueError("entropy and value coefficients must be >= 0")
        if self.gamma_consistency > 1 or self.gamma_difficulty > 1:
            raise ValueError("discount factors must be <= 1")


def anneal_entropy(cfg: PPOConfig, iteration: int, phase: str) -> float:
    """Entropy coefficient for ``phase`` at ``iteration`` (constant: no annealing)."""
    return cfg.entropy_coeff_init if phase == "init" else cfg.entropy_coeff_goal


# ---------------------------------------------------------------------------
# Returns, advantages, entropies


def discounted(rewards: Sequence[float], gamma: float) -> np.ndarray:
    out = np.zeros(len(rewards))
    acc = 0.0
    for t in range(len(rewards) - 1, -1, -1):
        acc = rewards[t] + gamma * acc
        out[t] = acc
    return out


def returns_two_channel(traj: Trajectory, cfg: PPOConfig) -> np.ndarray:
    """Consistency returns over the initial phase plus difficulty returns over the whole episode."""
    ts = traj.transitions
    init_idx = [i for i, t in enumerate(ts) if t.phase == "init"]
    out = discounted([t.r_difficulty for t in ts], cfg.gamma_difficulty)
    rc = discounted([ts[i].r_consistency for i in init_idx], cfg.gamma_consistency)
    out[init_idx] += rc
    return out


def advantages(returns: np.ndarray, values: np.ndarray, normalize: bool = True) -> np.ndarray:
    adv = np.asarray(returns, dtype=float) - np.asarray(values, dtype=float)
    if normalize and len(adv) > 1:
        adv = adv - adv.mean()
        std = adv.std()
        adv = adv / std if std > 1e-12 else np.zeros_like(adv)
    return adv


def lifted_distribution(probs: np.ndarray, amap: ActionIndexMap) -> np.ndarray:
    """Probability mass per predicate or action schema, termination last."""
    return np.bincount(amap.schema_of(), weights=probs, minlength=len(amap.arities) + 1)


def entropy(p: np.ndarray) -> float:
    p = np.asarray(p, dtype=float)
    nz = p[p > 0]
    return float(-(nz * np.log(nz)).sum())


def entropy_term(ground: np.ndarray, lifted: np.ndarray) -> float:
    return 0.5 * (entropy(ground) + entropy(lifted))


def _schema_matrix(amap: ActionIndexMap) -> np.ndarray:
    ids = amap.schema_of()
    m = np.zeros((amap.size, len(amap.arities) + 1))
    m[np.arange(amap.size), ids] = 1.0
    return m


def _entropy_graph(log_probs: ad.Tensor, mask: np.ndarray, schema: np.ndarray) -> ad.Tensor:
    """Per-row ``(H(ground) + H(lifted)) / 2`` as a differentiable tensor."""
    probs = ad.where_mask(mask, ad.exp(ad.where_mask(mask, log_probs, 0.0)), 0.0)
    h_ground = ad.neg(ad.sum(ad.xlogx(probs), axis=-1))
    lifted = ad.matmul(probs, schema)
    h_lifted = ad.neg(ad.sum(ad.xlogx(lifted), axis=-1))
    return ad.mul(ad.add(h_ground, h_lifted), 0.5)


# ---------------------------------------------------------------------------
# Policies


class PhaseNets:
    """Policy and critic networks for one generation phase."""

    def __init__(self, phase: str, mdp: GenerationMDP, cfg: NLMConfig, seed: int):
        self.phase = phase
        if phase == "init":
            channels = init_channel_counts(mdp, cfg.breadth)
            arities = [p.arity for p in mdp.domain.predicates]
        else:
            channels = goal_channel_counts(mdp, cfg.breadth)
            arities = [a.arity for a in mdp.domain.actions]
        self.policy = NLM(cfg, channels, head_arities=arities, seed=seed)
        self.critic = NLM(cfg, channels, value_head=True, seed=seed + 1)
        self.params = {f"policy.{k}": p for k, p in self.policy.params.items()}
        self.params.update({f"critic.{k}": p for k, p in self.critic.params.items()})

    def refresh(self):
        self.params = {f"policy.{k}": p for k, p in self.policy.params.items()}
        self.params.update({f"critic.{k}": p for k, p in self.critic.params.items()})


class GenerationPolicy:
    """Both phases' networks plus the sampling loop over the generation MDP."""

    def __init__(self, mdp: GenerationMDP, cfg: NLMConfig = NLMConfig(), seed: int = 0):
        self.mdp = mdp
        self.cfg = cfg
        self.nets = {"init": PhaseNets("init", mdp, cfg, seed * 4 + 1), "goal": PhaseNets("goal", mdp, cfg, seed * 4 + 3)}

    def network_dict(self):
        return {
            "init_policy": self.nets["init"].policy, "init_critic": self.nets["init"].critic,
            "goal_policy": self.nets["goal"].policy, "goal_critic": self.nets["goal"].critic,
        }

    def _encode(self, gs: GenState, mdp: GenerationMDP):
        b = self.cfg.breadth
        if gs.phase == Phase.INIT:
            legal = mdp.legal_atom_actions(gs)
            bundle = encode_init(gs, mdp, b)
            amap = init_action_map(mdp, bundle.n)
            return "init", bundle, amap, mask_init(gs, mdp, amap, legal)
        legal = mdp.legal_goal_actions(gs)
        bundle = encode_goal_pair(gs, mdp, b)
        amap = goal_action_map(mdp, bundle.n)
        return "goal", bundle, amap, mask_goal(gs, mdp, amap, legal)

    def episode(self, rng: np.random.Generator, mdp: Optional[GenerationMDP] = None, name=None) -> tuple[GenState, Trajectory]:
        """Sample one episode; every decision is recorded as a transition."""
        mdp = mdp or self.mdp
        gs = mdp.new_episode()
        traj = Trajectory()
        with ad.no_grad():
            while gs.phase in (Phase.INIT, Phase.GOAL):
                phase, bundle, amap, mask = self._encode(gs, mdp)
                logits = self.nets[phase].policy.logits(stack([bundle]))
                logp = ad.masked_log_softmax(logits, mask[None, :]).data[0]
                probs = np.where(mask, np.exp(logp), 0.0)
                idx = int(rng.choice(amap.size, p=probs / probs.sum()))
                traj.transitions.append(Transition(phase, bundle, mask, idx, float(logp[idx])))
                action = amap.decode(idx)
                if gs.phase == Phase.INIT:
                    gs = mdp.terminate_init(gs) if action is TERMINATE else mdp._add_atom(gs, action)
                elif action is TERMINATE:
                    gs = mdp.terminate_goal(gs, name)
                else:
                    gs = mdp.step_goal(gs, action)
        traj.status = gs.phase
        traj.problem = gs.problem
        traj.discard_reason = gs.discard_reason
        traj.goal_plan = gs.goal_plan
        return gs, traj

    def generate(
        self,
        mdp: GenerationMDP,
        seed: int,
        min_size_slack: Optional[int] = 2,
        retry_cap: int = 1000,
        name: Optional[str] = None,
    ) -> GenerationResult:
        """Sample until an episode yields a problem of acceptable size."""
        from collections import Counter

        rng = np.random.default_rng(seed)
        floor = mdp.config.max_init_atoms - min_size_slack if min_size_slack is not None else 0
        reasons: Counter = Counter()
        start = time.perf_counter()
        for attempt in range(1, retry_cap + 1):
            gs, _ = self.episode(rng, mdp, name)
            if gs.phase == Phase.DISCARDED:
                reasons[gs.discard_reason] += 1
                continue
            if len(gs.problem.init) < floor:
                reasons["too-small"] += 1
                continue
            return GenerationResult(gs.problem, attempt, time.perf_counter() - start, gs.goal_plan, reasons)
        raise GenerationFailed(f"no acceptable problem after {retry_cap} attempts: {dict(reasons)}", reasons)


# ---------------------------------------------------------------------------
# Losses


def _groups(items):
    """Indices grouped by object count, in first-appearance order."""
    out = defaultdict(list)
    for i, t in enumerate(items):
        out[t.encoding.n].append(i)
    return list(out.items())


def batch_values(net: NLM, transitions: Sequence[Transition]) -> np.ndarray:
    out = np.zeros(len(transitions))
    with ad.no_grad():
        for _, idx in _groups(transitions):
            v = net.value(stack([transitions[i].encoding for i in idx])).data
            out[idx] = v
    return out


@dataclass
class LossParts:
    loss: ad.Tensor
    surrogate: float
    value: float
    entropy: float


def ppo_loss(
    nets: PhaseNets,
    batch: Sequence[Transition],
    adv: np.ndarray,
    returns: np.ndarray,
    cfg: PPOConfig,
    entropy_coeff: float,
) -> LossParts:
    """Clipped surrogate + value regression - entropy bonus, averaged over ``batch``."""
    total = None
    sur_sum = val_sum = ent_sum = 0.0
    m = len(batch)
    for n, idx in _groups(batch):
        ts = [batch[i] for i in idx]
        x = stack([t.encoding for t in ts])
        mask = np.stack([t.mask for t in ts])
        actions = np.array([t.action for t in ts])
        old = np.array([t.log_prob for t in ts])
        a = adv[idx]
        r = returns[idx]
        logp = ad.masked_log_softmax(nets.policy.logits(x), mask)
        ratio = ad.exp(ad.add(ad.gather_rows(logp, actions), -old))
        unclipped = ad.mul(ratio, a)
        clipped = ad.mul(ad.clip(ratio, 1 - cfg.clip_eps, 1 + cfg.clip_eps), a)
        surrogate = ad.neg(ad.sum(ad.minimum(unclipped, clipped)))
        v = nets.critic.value(x)
        value_loss = ad.sum(ad.square(ad.add(v, -r)))
        part = ad.add(surrogate, ad.mul(value_loss, cfg.value_coeff))
        if entropy_coeff > 0:
            amap = ActionIndexMap(nets.policy.head_arities, n, "atom")
            ent = ad.sum(_entropy_graph(logp, mask, _schema_matrix(amap)))
            part = ad.add(part, ad.mul(ent, -entropy_coeff))
            ent_sum += float(ent.data)
        total = part if total is None else ad.add(total, part)
        sur_sum += float(surrogate.data)
        val_sum += float(value_loss.data)
    loss = ad.mul(total, 1.0 / m)
    if not np.isfinite(loss.data):
        raise TrainingError(
            f"non-finite loss (surrogate={sur_sum / m}, value={val_sum / m}, entropy={ent_sum / m})"
        )
    return LossParts(loss, sur_sum / m, val_sum / m, ent_sum / m)


def _mean_entropy(transitions: Sequence[Transition], nets: PhaseNets) -> float:
    """Average entropy term of the sampling distributions (from recorded masks and logits)."""
    vals = []
    with ad.no_grad():
        for n, idx in _groups(transitions):
            ts = [transitions[i] for i in idx]
            mask = np.stack([t.mask for t in ts])
            logp = ad.masked_log_softmax(nets.policy.logits(stack([t.encoding for t in ts])), mask).data
            amap = ActionIndexMap(nets.policy.head_arities, n, "atom")
            for row, mk in zip(logp, mask):
                p = np.where(mk, np.exp(row), 0.0)
                vals.append(entropy_term(p, lifted_distribution(p, amap)))
    return float(np.mean(vals)) if vals else float("nan")


# ---------------------------------------------------------------------------
# Training loop


@dataclass
class IterationStats:
    trajectories: list[Trajectory]
    dropped: int
    metrics: dict = field(default_factory=dict)


class Trainer:
    """Owns policies, optimizers and the iteration counter; resumable from checkpoints."""

    def __init__(
        self,
        mdp: GenerationMDP,
        nlm_config: NLMConfig = NLMConfig(),
        ppo_config: PPOConfig = PPOConfig(),
        norms: Optional[dict] = None,
        planners: Sequence[str] = DEFAULT_PLANNERS,
        budget: int = DEFAULT_BUDGET,
        seed: int = 0,
    ):
        self.mdp = mdp
        self.nlm_config = nlm_config
        self.cfg = ppo_config
        self.planners = tuple(planners)
        self.norms = dict(norms or {k: 1.0 for k in self.planners})
        self.budget = budget
        self.seed = seed
        self.policy = GenerationPolicy(mdp, nlm_config, seed)
        self.optims = {ph: Adam(self.policy.nets[ph].params, lr=ppo_config.lr) for ph in PHASES}
        self.iteration = 0

    # -- collection --------------------------------------------------------

    def _rng(self, *keys) -> np.random.Generator:
        return np.random.default_rng([self.seed, self.iteration, *keys])

    def collect_trajectories(self) -> IterationStats:
        trajs, dropped = [], 0
        for e in range(self.cfg.trajectories_per_iter):
            gs, traj = self.policy.episode(self._rng(0, e))
            diff = None
            if traj.status == Phase.DONE:
                try:
                    diff = difficulty(traj.problem, self.planners, self.norms, self.budget).aggregate
                except EvaluationError as exc:
                    log.info("iteration %d episode %d dropped: %s", self.iteration, e, exc)
                    dropped += 1
                    continue
            trajs.append(assign_rewards(traj, diff, self.mdp.config))
        if dropped:
            log.warning("iteration %d: %d episode(s) dropped after planner failure", self.iteration, dropped)
        return IterationStats(trajs, dropped)

    # -- update ------------------------------------------------------------

    def train_iteration(self) -> dict:
        start = time.perf_counter()
        stats = self.collect_trajectories()
        trajs = stats.trajectories
        per_phase = {ph: ([], []) for ph in PHASES}
        for traj in trajs:
            rets = returns_two_channel(traj, self.cfg)
            for t, r in zip(traj.transitions, rets):
                per_phase[t.phase][0].append(t)
                per_phase[t.phase][1].append(r)

        metrics = {"iter": self.iteration}
        for ph in PHASES:
            nets = self.policy.nets[ph]
            ts, rets = per_phase[ph]
            metrics[f"entropy_{ph}"] = _mean_entropy(ts, nets)
            metrics[f"loss_{ph}"] = self._update_phase(ph, ts, np.array(rets))

        done = [t for t in trajs if t.status == Phase.DONE]
        n_total = len(trajs) + stats.dropped
        metrics["mean_reward"] = float(np.mean([
            sum(t.r_consistency + t.r_difficulty for t in tr.transitions) for tr in trajs
        ])) if trajs else float("nan")
        metrics["mean_difficulty"] = float(np.mean([t.difficulty for t in done])) if done else float("nan")
        metrics["discard_rate"] = (sum(t.status == Phase.DISCARDED for t in trajs) / n_total) if n_total else float("nan")
        metrics["wall_s"] = time.perf_counter() - start
        self.iteration += 1
        stats.metrics = metrics
        return {k: metrics[k] for k in METRICS_HEADER}

    def _update_phase(self, phase: str, ts: list[Transition], rets: np.ndarray) -> float:
        if not ts:
            return float("nan")
        nets = self.policy.nets[phase]
        opt = self.optims[phase]
        coeff = anneal_entropy(self.cfg, self.iteration, phase)
        values = batch_values(nets.critic, ts)
        adv = advantages(rets, values)
        losses = []
        rng = self._rng(1, PHASES.index(phase))
        for _ in range(self.cfg.epochs_per_iter):
            order = rng.permutation(len(ts))
            for lo in range(0, len(ts), self.cfg.minibatch):
                idx = order[lo:lo + self.cfg.minibatch]
                parts = ppo_loss(nets, [ts[i] for i in idx], adv[idx], rets[idx], self.cfg, coeff)
                opt.zero_grad()
                parts.loss.backward()
                opt.step()
                losses.append(float(parts.loss.data))
        return float(np.mean(losses))

    # -- persistence -------------------------------------------------------

    def save(self, path):
        extra = {}
        for ph in PHASES:
            extra.update(self.optims[ph].state(f"adam_{ph}"))
        meta = {
            "iteration": self.iteration,
            "seed": self.seed,
            "domain": self.mdp.domain.name,
            "ppo": asdict(self.cfg),
            "norms": self.norms,
            "planners": list(self.planners),
        }
        tmp = f"{path}.tmp"
        save_checkpoint(tmp, self.policy.network_dict(), meta, extra)
        os.replace(tmp, path)

    def load(self, path):
        header, arrays = read_checkpoint(path)
        load_policy(self.policy, header, arrays)
        for ph in PHASES:
            self.optims[ph] = Adam(self.policy.nets[ph].params, lr=self.cfg.lr)
            self.optims[ph].load({k[len("extra/"):]: v for k, v in arrays.items() if k.startswith("extra/")}, f"adam_{ph}")
        self.iteration = int(header["meta"]["iteration"])
        self.norms = {k: float(v) for k, v in header["meta"]["norms"].items()}
        return header

    def fit(self, iterations: int, metrics_path=None, checkpoint_path=None, callback=None):
        """Run until ``iterations`` total iterations have completed."""
        writer = _MetricsWriter(metrics_path, self.iteration) if metrics_path else None
        try:
            while self.iteration < iterations:
                row = self.train_iteration()
                if writer:
                    writer.write(row)
                if callback:
                    callback(row)
                if checkpoint_path and (self.iteration % self.cfg.checkpoint_every == 0 or self.iteration == iterations):
                    self.save(checkpoint_path)
        finally:
            if writer:
                writer.close()
        return self


def load_policy(policy: GenerationPolicy, header, arrays):
    load_into(policy.network_dict(), header, arrays)
    for ph in PHASES:
        policy.nets[ph].refresh()


class _MetricsWriter:
    """Append-only CSV writer; on resume, rows past ``start_iter`` are dropped."""

    def __init__(self, path, start_iter: int):
        rows = []
        if start_iter > 0 and os.path.exists(path):
            with open(path, newline="") as f:
                rows = [r for r in csv.reader(f)][1:]
            rows = [r for r in rows if r and int(r[0]) < start_iter]
        self.f = open(path, "w", newline="")
        self.w = csv.writer(self.f)
        self.w.writerow(METRICS_HEADER)
        self.w.writerows(rows)
        self.f.flush()

    def write(self, row: dict):
        self.w.writerow([_fmt(row[k]) for k in METRICS_HEADER])
        self.f.flush()

    def close(self):
        self.f.close()


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return str(v)
