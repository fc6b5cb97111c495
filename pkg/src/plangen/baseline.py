"""Random-walk problem generator over the generation MDP."""
from __future__ import annotations

import time
from collections import Counter
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .genmdp import TERMINATE, GenConfig, GenerationMDP, GenState, Phase
from .pddl import GroundAction, ProblemInstance


class GenerationFailed(RuntimeError):
    def __init__(self, message, discard_reasons: Counter):
        super().__init__(message)
        self.discard_reasons = discard_reasons


@dataclass
class GenerationResult:
    problem: ProblemInstance
    attempts: int
    gen_time_s: float
    goal_plan: tuple[GroundAction, ...] = ()
    discard_reasons: Counter = field(default_factory=Counter)

    @property
    def discarded_attempts(self) -> int:
        return self.attempts - 1


def legal_options(mdp: GenerationMDP, gs: GenState, min_atoms: int = 4) -> list:
    """Actions the random walk chooses from, termination included when offered."""
    if gs.phase == Phase.INIT:
        options = list(mdp.legal_atom_actions(gs))
        if not options or (mdp.can_terminate_init(gs) and len(gs.s_ic.atoms) >= min_atoms):
            options.append(TERMINATE)
        return options
    if gs.phase == Phase.GOAL:
        return list(mdp.legal_goal_actions(gs)) + [TERMINATE]
    raise ValueError(f"no actions in phase {gs.phase.name}")


def sample_step(mdp: GenerationMDP, gs: GenState, rng: np.random.Generator, min_atoms: int = 4):
    """Pick one action uniformly at random among :func:`legal_options`."""
    options = legal_options(mdp, gs, min_atoms)
    return options[int(rng.integers(len(options)))]


def step(mdp: GenerationMDP, gs: GenState, action, name: Optional[str] = None) -> GenState:
    """Apply an action or termination in whichever phase ``gs`` is in."""
    if gs.phase == Phase.INIT:
        return mdp.terminate_init(gs) if action is TERMINATE else mdp._add_atom(gs, action)
    if action is TERMINATE:
        return mdp.terminate_goal(gs, name)
    return mdp.step_goal(gs, action)


def random_episode(mdp: GenerationMDP, rng: np.random.Generator, min_atoms: int = 4, name: Optional[str] = None) -> GenState:
    gs = mdp.new_episode()
    while gs.phase in (Phase.INIT, Phase.GOAL):
        gs = step(mdp, gs, sample_step(mdp, gs, rng, min_atoms), name)
    return gs


def random_generate(
    domain,
    validator,
    config: GenConfig,
    seed: int,
    min_atoms: int = 4,
    min_size_slack: Optional[int] = 2,
    retry_cap: int = 1000,
    name: Optional[str] = None,
    mdp: Optional[GenerationMDP] = None,
) -> GenerationResult:
    """Sample one problem with a uniform random walk, retrying discarded episodes.

    With ``min_size_slack`` set, problems with fewer than
    ``max_init_atoms - min_size_slack`` initial atoms are also rejected.
    """
    mdp = mdp or GenerationMDP(domain, validator, config)
    rng = np.random.default_rng(seed)
    floor = config.max_init_atoms - min_size_slack if min_size_slack is not None else 0
    reasons: Counter = Counter()
    start = time.perf_counter()
    for attempt in range(1, retry_cap + 1):
        gs = random_episode(mdp, rng, min_atoms, name)
        if gs.phase == Phase.DISCARDED:
            reasons[gs.discard_reason] += 1
            continue
        if len(gs.problem.init) < floor:
            reasons["too-small"] += 1
            continue
        return GenerationResult(gs.problem, attempt, time.perf_counter() - start, gs.goal_plan, reasons)
    raise GenerationFailed(f"no acceptable problem after {retry_cap} attempts: {dict(reasons)}", reasons)
