"""Estimator-style wrappers (``fit`` / ``sample`` / ``predict``, ``get_params``).

These follow scikit-learn conventions so generators and scorers can be
configured, cloned and compared uniformly.  "Fitting" a generator trains its
policies on a domain; "sampling" draws new problems.
"""
from __future__ import annotations

from typing import Optional, Sequence

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .baseline import random_generate
from .config import DEFAULT_GOALS
from .domains import BUILTIN_DOMAINS, load_builtin
from .evaluate import DEFAULT_BUDGET, DEFAULT_PLANNERS, compute_norms, difficulty
from .genmdp import GenConfig, GenerationMDP
from .nlm import NLMConfig
from .pddl import DomainModel, ProblemInstance
from .ppo import PPOConfig, Trainer


def check_domain(domain) -> DomainModel:
    """Accept a bundled domain name or a parsed :class:`DomainModel`."""
    if isinstance(domain, DomainModel):
        return domain
    if isinstance(domain, str) and domain in BUILTIN_DOMAINS:
        return load_builtin(domain)
    raise ValueError(f"expected a DomainModel or one of {BUILTIN_DOMAINS}, got {domain!r}")


def check_problems(problems) -> list[ProblemInstance]:
    problems = list(problems)
    if not problems:
        raise ValueError("expected at least one problem")
    for p in problems:
        if not isinstance(p, ProblemInstance):
            raise TypeError(f"expected ProblemInstance, got {type(p).__name__}")
    return problems


def _gen_config(domain: DomainModel, goal, max_init_atoms, max_goal_actions) -> GenConfig:
    goal = tuple(goal) if goal else DEFAULT_GOALS.get(domain.name, ())
    return GenConfig(max_init_atoms=max_init_atoms, max_goal_actions=max_goal_actions, goal_spec=goal)


def _validator(domain: DomainModel, validator):
    return validator or f"builtin:{domain.name}"


class RandomWalkGenerator(BaseEstimator):
    """Uniform random walk through the generation MDP."""

    def __init__(self, validator=None, goal=None, max_init_atoms=15, max_goal_actions=30,
                 min_atoms=4, min_size_slack=2, random_state=0):
        self.validator = validator
        self.goal = goal
        self.max_init_atoms = max_init_atoms
        self.max_goal_actions = max_goal_actions
        self.min_atoms = min_atoms
        self.min_size_slack = min_size_slack
        self.random_state = random_state

    def fit(self, domain, y=None):
        self.domain_ = check_domain(domain)
        self.config_ = _gen_config(self.domain_, self.goal, self.max_init_atoms, self.max_goal_actions)
        self.mdp_ = GenerationMDP(self.domain_, _validator(self.domain_, self.validator), self.config_)
        return self

    def sample(self, n: int, max_init_atoms: Optional[int] = None) -> list[ProblemInstance]:
        check_is_fitted(self, "mdp_")
        mdp = self.mdp_
        if max_init_atoms is not None and max_init_atoms != self.config_.max_init_atoms:
            cfg = _gen_config(self.domain_, self.goal, max_init_atoms, self.max_goal_actions)
            mdp = GenerationMDP(self.domain_, mdp.validator, cfg)
        return [
            random_generate(self.domain_, None, mdp.config, [self.random_state, i], self.min_atoms,
                            self.min_size_slack, mdp=mdp).problem
            for i in range(n)
        ]


class ProblemGenerator(BaseEstimator):
    """Policy-based generator trained with clipped policy-gradient updates."""

    def __init__(self, validator=None, goal=None, max_init_atoms=15, max_goal_actions=30,
                 iterations=1500, nlm_config=None, ppo_config=None, planners=DEFAULT_PLANNERS,
                 budget=DEFAULT_BUDGET, norm_corpus_size=50, min_size_slack=2, random_state=0):
        self.validator = validator
        self.goal = goal
        self.max_init_atoms = max_init_atoms
        self.max_goal_actions = max_goal_actions
        self.iterations = iterations
        self.nlm_config = nlm_config
        self.ppo_config = ppo_config
        self.planners = planners
        self.budget = budget
        self.norm_corpus_size = norm_corpus_size
        self.min_size_slack = min_size_slack
        self.random_state = random_state

    def _trainer(self, domain):
        self.domain_ = check_domain(domain)
        cfg = _gen_config(self.domain_, self.goal, self.max_init_atoms, self.max_goal_actions)
        self.mdp_ = GenerationMDP(self.domain_, _validator(self.domain_, self.validator), cfg)
        scorer = DifficultyScorer(self.planners, self.budget).fit(
            RandomWalkGenerator(self.mdp_.validator, self.goal, self.max_init_atoms, self.max_goal_actions,
                                min_size_slack=self.min_size_slack, random_state=self.random_state)
            .fit(self.domain_).sample(self.norm_corpus_size)
        )
        self.norms_ = scorer.norms_
        ppo = self.ppo_config or PPOConfig(iterations=self.iterations)
        return Trainer(self.mdp_, self.nlm_config or NLMConfig(), ppo, self.norms_, self.planners,
                       self.budget, self.random_state)

    def fit(self, domain, y=None):
        self.trainer_ = self._trainer(domain)
        self.trainer_.fit(self.iterations)
        return self

    def partial_fit(self, domain, y=None, iterations: int = 1):
        """Run ``iterations`` more training iterations (initializing on first call)."""
        if not hasattr(self, "trainer_"):
            self.trainer_ = self._trainer(domain)
        self.trainer_.fit(self.trainer_.iteration + iterations)
        return self

    def sample(self, n: int, max_init_atoms: Optional[int] = None, random_state=None) -> list[ProblemInstance]:
        check_is_fitted(self, "trainer_")
        mdp = self.mdp_
        if max_init_atoms is not None and max_init_atoms != mdp.config.max_init_atoms:
            cfg = _gen_config(self.domain_, self.goal, max_init_atoms, self.max_goal_actions)
            mdp = GenerationMDP(self.domain_, mdp.validator, cfg)
        seed = self.random_state if random_state is None else random_state
        policy = self.trainer_.policy
        return [policy.generate(mdp, [seed, 1, i], self.min_size_slack).problem for i in range(n)]


class DifficultyScorer(BaseEstimator):
    """Normalized planner difficulty; ``fit`` sets per-planner norms from a reference corpus."""

    def __init__(self, planners: Sequence[str] = DEFAULT_PLANNERS, budget: int = DEFAULT_BUDGET):
        self.planners = planners
        self.budget = budget

    def fit(self, problems, y=None):
        self.norms_ = compute_norms(check_problems(problems), self.planners, self.budget)
        return self

    def predict(self, problems) -> np.ndarray:
        check_is_fitted(self, "norms_")
        return np.array([difficulty(p, self.planners, self.norms_, self.budget).aggregate
                         for p in check_problems(problems)])

    def score(self, problems, y=None) -> float:
        return float(self.predict(problems).mean())
