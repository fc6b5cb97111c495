"""Two-phase generation MDP.

Phase one grows an initial state atom by atom.  Atoms may mention *virtual*
objects, placeholders that become real objects when an atom using them is
added.  Phase two starts from a copy of the finished initial state and
executes domain actions; the goal is then read off the final state through
a user-supplied goal specification.

Objects created during phase one are named ``o1, o2, ...`` in creation order.
"""
from __future__ import annotations

import enum
import re
from dataclasses import dataclass, field, replace
from itertools import product
from typing import NamedTuple, Optional

from .consistency import Validator, make_validator
from .pddl import (
    ROOT_TYPE,
    Atom,
    DomainModel,
    GroundAction,
    InapplicableActionError,
    Obj,
    ProblemInstance,
    State,
    applicable_ground_actions,
    apply,
)


class Phase(enum.IntEnum):
    INIT = 0
    GOAL = 1
    DONE = 2
    DISCARDED = 3


class AtomAction(NamedTuple):
    """Atom to add; ``args`` index the extended (real + virtual) object table."""

    pred: int
    args: tuple[int, ...]


class _Terminate:
    __slots__ = ()

    def __repr__(self):
        return "TERMINATE"


TERMINATE = _Terminate()


class IllegalActionError(ValueError):
    pass


class EmptyGoalError(ValueError):
    pass


_GOAL_RE = re.compile(r"^\s*([^\s(),]+)\s*\(\s*([^()]*)\)\s*$")


def parse_goal_entry(text: str) -> tuple[str, tuple[str, ...]]:
    """``"at(package, location)"`` -> ``("at", ("package", "location"))``."""
    m = _GOAL_RE.match(text.strip().strip('"').strip("'"))
    if not m:
        raise ValueError(f"bad goal entry {text!r}; expected pred(type, ...)")
    types = tuple(t.strip().lower() for t in m.group(2).split(",") if t.strip())
    return m.group(1).lower(), types


@dataclass(frozen=True)
class GenConfig:
    max_init_atoms: int = 15
    max_goal_actions: int = 30
    goal_spec: tuple[tuple[str, tuple[str, ...]], ...] = ()
    consistency_penalty: float = -1.0
    difficulty_rescale: float = 0.1

    def __post_init__(self):
        spec = tuple(parse_goal_entry(g) if isinstance(g, str) else (g[0], tuple(g[1])) for g in self.goal_spec)
        object.__setattr__(self, "goal_spec", spec)
        if self.max_init_atoms < 1 or self.max_goal_actions < 1:
            raise ValueError("max_init_atoms and max_goal_actions must be >= 1")
        if not self.goal_spec:
            raise ValueError("goal_spec must not be empty")

    def check_domain(self, domain: DomainModel):
        for name, types in self.goal_spec:
            if name not in domain.pred_index:
                raise ValueError(f"goal predicate {name!r} not in domain {domain.name!r}")
            schema = domain.predicates[domain.pred_index[name]]
            if len(types) != schema.arity:
                raise ValueError(f"goal entry {name}{types} has wrong arity (expected {schema.arity})")
            for t in types:
                if t not in domain.hierarchy:
                    raise ValueError(f"goal entry {name}{types} uses unknown type {t!r}")


@dataclass(frozen=True)
class GenState:
    phase: Phase
    s_ic: State
    s_gc: Optional[State] = None
    init_steps: int = 0
    goal_steps: int = 0
    goal_plan: tuple[GroundAction, ...] = ()
    problem: Optional[ProblemInstance] = None
    discard_reason: Optional[str] = None


def virtual_object_set(domain: DomainModel) -> dict[str, int]:
    """Virtual-object count per type.

    ``n_t`` is the largest number of parameters of one predicate that an
    object of type ``t`` could fill (declared type ``t`` or a supertype).
    """
    counts = {}
    for t in domain.hierarchy.types:
        counts[t] = max(
            (sum(domain.is_subtype(t, pt) for pt in p.param_types) for p in domain.predicates),
            default=0,
        )
    return counts


class GenerationMDP:
    """Transition logic of the generation MDP for one domain."""

    def __init__(self, domain: DomainModel, validator, config: GenConfig, problem_name: Optional[str] = None):
        config.check_domain(domain)
        self.domain = domain
        self.validator: Validator = make_validator(validator, domain)
        self.config = config
        self.problem_name = problem_name or f"{domain.name}_problem"
        counts = virtual_object_set(domain)
        self.virtual_types: list[str] = []
        for t in domain.hierarchy.types:
            self.virtual_types.extend([t] * counts[t])
        self.n_virtual = len(self.virtual_types)
        self.object_types = tuple(t for t in domain.hierarchy.types if t != ROOT_TYPE) or (ROOT_TYPE,)
        self._goal_spec = [(domain.pred_index[n], ts) for n, ts in config.goal_spec]

    # -- phase one ---------------------------------------------------------

    def new_episode(self) -> GenState:
        return GenState(Phase.INIT, State(tuple(self.domain.constants), frozenset()))

    def extended_state(self, gs: GenState) -> State:
        """``s_ic`` plus the full virtual-object set, appended after real objects."""
        virtual = tuple(
            Obj(f"?v{k}-{t}", t, True) for k, t in enumerate(self.virtual_types)
        )
        return State(gs.s_ic.objects + virtual, gs.s_ic.atoms)

    def _virtual_local(self, n_real: int):
        """Map extended index -> (type, local index among that type's slots)."""
        local, seen = {}, {}
        for k, t in enumerate(self.virtual_types):
            local[n_real + k] = (t, seen.get(t, 0))
            seen[t] = seen.get(t, 0) + 1
        return local

    def _canonical(self, args, local) -> bool:
        # Virtual slots of each type must be used in order 0, 1, 2, ...
        nxt: dict[str, int] = {}
        used = set()
        for a in args:
            if a not in local or a in used:
                continue
            t, k = local[a]
            if k != nxt.get(t, 0):
                return False
            nxt[t] = k + 1
            used.add(a)
        return True

    def candidate_atom_actions(self, gs: GenState) -> list[AtomAction]:
        """Typed, canonical atoms over real and virtual objects (no consistency check)."""
        ext = self.extended_state(gs)
        n_real = len(gs.s_ic.objects)
        local = self._virtual_local(n_real)
        out = []
        for pi, schema in enumerate(self.domain.predicates):
            pools = [
                [i for i, o in enumerate(ext.objects) if self.domain.is_subtype(o.type, t)]
                for t in schema.param_types
            ]
            for args in product(*pools):
                if self._canonical(args, local):
                    out.append(AtomAction(pi, args))
        return out

    def legal_atom_actions(self, gs: GenState) -> list[AtomAction]:
        if gs.phase != Phase.INIT:
            raise IllegalActionError("legal_atom_actions requires the INIT phase")
        if gs.init_steps >= self.config.max_init_atoms:
            return []
        ext = self.extended_state(gs)
        return [
            a for a in self.candidate_atom_actions(gs)
            if self.validator.continuous_ok(ext, Atom(a.pred, a.args)).ok
        ]

    def can_terminate_init(self, gs: GenState) -> bool:
        # An empty initial state can never become eventually consistent.
        return gs.phase == Phase.INIT and len(gs.s_ic.atoms) > 0

    def step_init(self, gs: GenState, action: AtomAction) -> GenState:
        if gs.phase != Phase.INIT:
            raise IllegalActionError("step_init requires the INIT phase")
        if action not in set(self.legal_atom_actions(gs)):
            raise IllegalActionError(f"atom action {action} is not legal here")
        return self._add_atom(gs, action)

    def _add_atom(self, gs: GenState, action: AtomAction) -> GenState:
        objects = list(gs.s_ic.objects)
        n_real = len(objects)
        n_named = n_real - len(self.domain.constants)
        remap = {}
        args = []
        for a in action.args:
            if a >= n_real:
                if a not in remap:
                    n_named += 1
                    remap[a] = len(objects)
                    objects.append(Obj(f"o{n_named}", self.virtual_types[a - n_real]))
                a = remap[a]
            args.append(a)
        s_ic = State(tuple(objects), gs.s_ic.atoms | {Atom(action.pred, tuple(args))})
        return replace(gs, s_ic=s_ic, init_steps=gs.init_steps + 1)

    def terminate_init(self, gs: GenState) -> GenState:
        if gs.phase != Phase.INIT:
            raise IllegalActionError("terminate_init requires the INIT phase")
        verdict = self.validator.eventual_ok(gs.s_ic)
        if verdict.ok:
            return replace(gs, phase=Phase.GOAL, s_gc=gs.s_ic)
        return replace(gs, phase=Phase.DISCARDED, discard_reason=verdict.violated_rule)

    # -- phase two ---------------------------------------------------------

    def legal_goal_actions(self, gs: GenState) -> list[GroundAction]:
        if gs.phase != Phase.GOAL:
            raise IllegalActionError("legal_goal_actions requires the GOAL phase")
        if gs.goal_steps >= self.config.max_goal_actions:
            return []
        return applicable_ground_actions(self.domain, gs.s_gc)

    def step_goal(self, gs: GenState, action: GroundAction) -> GenState:
        if gs.phase != Phase.GOAL:
            raise IllegalActionError("step_goal requires the GOAL phase")
        if gs.goal_steps >= self.config.max_goal_actions:
            raise IllegalActionError("goal-action budget exhausted")
        try:
            s_gc = apply(self.domain, gs.s_gc, action)
        except InapplicableActionError as exc:
            raise IllegalActionError(str(exc)) from exc
        return replace(gs, s_gc=s_gc, goal_steps=gs.goal_steps + 1, goal_plan=gs.goal_plan + (action,))

    def goal_atoms(self, gs: GenState) -> frozenset[Atom]:
        objs = gs.s_gc.objects
        sub = self.domain.is_subtype
        return frozenset(
            a for a in gs.s_gc.atoms
            if any(
                a.pred == p and all(sub(objs[o].type, t) for o, t in zip(a.args, types))
                for p, types in self._goal_spec
            )
        )

    def extract_goal(self, gs: GenState, name: Optional[str] = None) -> ProblemInstance:
        if gs.phase != Phase.GOAL:
            raise IllegalActionError("extract_goal requires the GOAL phase")
        goal = self.goal_atoms(gs)
        if not goal:
            raise EmptyGoalError("no atom of the final state matches the goal specification")
        objects = tuple(o._replace(virtual=False) for o in gs.s_ic.objects)
        return ProblemInstance(name or self.problem_name, self.domain, objects, gs.s_ic.atoms, goal)

    def terminate_goal(self, gs: GenState, name: Optional[str] = None) -> GenState:
        """End phase two: DONE with ``problem`` set, or DISCARDED on an empty goal."""
        try:
            problem = self.extract_goal(gs, name)
        except EmptyGoalError:
            return replace(gs, phase=Phase.DISCARDED, discard_reason="empty-goal")
        return replace(gs, phase=Phase.DONE, problem=problem)


# ---------------------------------------------------------------------------
# Trajectories and rewards


@dataclass
class Transition:
    phase: str  # "init" or "goal"
    encoding: object
    mask: object
    action: int
    log_prob: float
    value: float = 0.0
    r_consistency: float = 0.0
    r_difficulty: float = 0.0


@dataclass
class Trajectory:
    transitions: list[Transition] = field(default_factory=list)
    status: Phase = Phase.INIT
    difficulty: Optional[float] = None
    problem: Optional[ProblemInstance] = None
    discard_reason: Optional[str] = None
    goal_plan: tuple[GroundAction, ...] = ()


def assign_rewards(traj: Trajectory, difficulty: Optional[float], config: GenConfig) -> Trajectory:
    """Place the episode's terminal rewards; every other reward is zero.

    Done episodes get ``difficulty_rescale * difficulty`` on the difficulty
    channel of the last transition.  Discarded episodes get the consistency
    penalty on the last initial-state transition.
    """
    for t in traj.transitions:
        t.r_consistency = 0.0
        t.r_difficulty = 0.0
    if not traj.transitions:
        return traj
    if traj.status == Phase.DONE:
        traj.difficulty = difficulty
        traj.transitions[-1].r_difficulty = config.difficulty_rescale * float(difficulty or 0.0)
    elif traj.status == Phase.DISCARDED:
        init_steps = [t for t in traj.transitions if t.phase == "init"]
        (init_steps or traj.transitions)[-1].r_consistency = config.consistency_penalty
    return traj
