"""Grounding, applicability and successor computation."""
from __future__ import annotations

from dataclasses import dataclass
from itertools import product

from .errors import InapplicableActionError, PDDLError
from .model import Atom, DomainModel, Exists, GroundAction, Literal, ProblemInstance, State


def _resolve(arg, binding, names):
    if isinstance(arg, str):
        return names[arg]
    return binding.get(arg)


def _literal_atom(lit: Literal, binding, names) -> Atom:
    return Atom(lit.pred, tuple(_resolve(a, binding, names) for a in lit.args))


def _free_outer(cond) -> set[int]:
    """Variable slots referenced by ``cond`` that it does not bind itself."""
    if isinstance(cond, Literal):
        return {a for a in cond.args if isinstance(a, int)}
    inner = {v for v, _ in cond.vars}
    out = set()
    for c in cond.body:
        out |= _free_outer(c)
    return out - inner


def _objects_of(domain: DomainModel, objects, typ):
    return [i for i, o in enumerate(objects) if domain.is_subtype(o.type, typ)]


def holds(domain: DomainModel, cond, binding: dict, state: State, names=None) -> bool:
    """Evaluate a (bound) precondition element in ``state``."""
    names = state.name_index if names is None else names
    if isinstance(cond, Literal):
        atom = _literal_atom(cond, binding, names)
        return (atom in state.atoms) == cond.positive
    return _exists(domain, cond, 0, dict(binding), state, names)


def _exists(domain, cond: Exists, k, binding, state, names) -> bool:
    if k == len(cond.vars):
        return all(holds(domain, c, binding, state, names) for c in cond.body)
    slot, typ = cond.vars[k]
    for o in _objects_of(domain, state.objects, typ):
        binding[slot] = o
        if _exists(domain, cond, k + 1, binding, state, names):
            return True
    binding.pop(slot, None)
    return False


def precondition_holds(domain: DomainModel, action: GroundAction, state: State) -> bool:
    schema = domain.actions[action.schema]
    if len(action.args) != schema.arity:
        return False
    for i, typ in zip(action.args, schema.param_types):
        if not 0 <= i < len(state.objects) or not domain.is_subtype(state.objects[i].type, typ):
            return False
    binding = dict(enumerate(action.args))
    return all(holds(domain, c, binding, state) for c in schema.precondition)


def applicable_ground_actions(domain: DomainModel, state: State) -> list[GroundAction]:
    """All applicable ground actions, ordered by schema index then binding."""
    out = []
    names = state.name_index
    for si, schema in enumerate(domain.actions):
        candidates = [_objects_of(domain, state.objects, t) for t in schema.param_types]
        # Check each precondition element as soon as its variables are bound.
        pending = list(schema.precondition)
        checks: list[list] = [[] for _ in range(schema.arity + 1)]
        for cond in pending:
            need = _free_outer(cond)
            depth = max((v + 1 for v in need), default=0)
            checks[min(depth, schema.arity)].append(cond)
        if any(not holds(domain, c, {}, state, names) for c in checks[0]):
            continue
        binding: dict[int, int] = {}

        def rec(k):
            if k == schema.arity:
                out.append(GroundAction(si, tuple(binding[i] for i in range(k))))
                return
            for o in candidates[k]:
                binding[k] = o
                if all(holds(domain, c, binding, state, names) for c in checks[k + 1]):
                    rec(k + 1)
            binding.pop(k, None)

        rec(0)
    return out


def apply(domain: DomainModel, state: State, action: GroundAction) -> State:
    """Successor state; raises if ``action`` is not applicable."""
    if not precondition_holds(domain, action, state):
        raise InapplicableActionError(f"action {action} is not applicable")
    schema = domain.actions[action.schema]
    binding = dict(enumerate(action.args))
    names = state.name_index
    dels = {_literal_atom(l, binding, names) for l in schema.del_effects}
    adds = {_literal_atom(l, binding, names) for l in schema.add_effects}
    return State(state.objects, (state.atoms - dels) | adds)


# ---------------------------------------------------------------------------
# Propositional task used by the planners


@dataclass
class Operator:
    action: GroundAction
    pre: int  # bitmask of positive preconditions
    neg: int  # bitmask of negative preconditions
    add: int
    delete: int
    pre_facts: tuple[int, ...]
    add_facts: tuple[int, ...]


class GroundTask:
    """STRIPS task over fact bitmasks.

    Existential preconditions are compiled into one operator per witness; the
    ``action`` field keeps the original binding so plans read normally.
    """

    def __init__(self, problem: ProblemInstance):
        self.problem = problem
        domain = problem.domain
        self.facts: dict[Atom, int] = {}
        self.atoms: list[Atom] = []
        init = problem.init
        state = problem.init_state
        names = state.name_index
        statics = domain.static_predicates
        ops: dict[tuple, Operator] = {}
        for si, schema in enumerate(domain.actions):
            pools = [_objects_of(domain, state.objects, t) for t in schema.param_types]
            for args in _bindings(domain, schema, pools, state, statics, names):
                binding = dict(enumerate(args))
                for witness in _alternatives(domain, schema.precondition, binding, state, statics, names):
                    pos = frozenset(a for a, positive in witness if positive)
                    neg = frozenset(a for a, positive in witness if not positive)
                    adds = frozenset(_literal_atom(l, binding, names) for l in schema.add_effects)
                    dels = frozenset(_literal_atom(l, binding, names) for l in schema.del_effects)
                    key = (si, args, pos, neg)
                    if key in ops:
                        continue
                    ops[key] = Operator(
                        GroundAction(si, args),
                        self._mask(pos), self._mask(neg), self._mask(adds), self._mask(dels),
                        tuple(sorted(self.fact(a) for a in pos)),
                        tuple(sorted(self.fact(a) for a in adds)),
                    )
        self.operators = list(ops.values())
        self.init = self._mask(init)
        self.goal = self._mask(problem.goal)
        self.goal_facts = tuple(sorted(self.fact(a) for a in problem.goal))
        self.pre_of: list[list[int]] = [[] for _ in self.atoms]
        for k, op in enumerate(self.operators):
            for f in op.pre_facts:
                self.pre_of[f].append(k)

    def fact(self, atom: Atom) -> int:
        idx = self.facts.get(atom)
        if idx is None:
            idx = self.facts[atom] = len(self.atoms)
            self.atoms.append(atom)
        return idx

    def _mask(self, atoms) -> int:
        m = 0
        for a in atoms:
            m |= 1 << self.fact(a)
        return m

    @property
    def n_facts(self) -> int:
        return len(self.atoms)

    def applicable(self, state: int):
        for k, op in enumerate(self.operators):
            if op.pre & state == op.pre and not op.neg & state:
                yield k

    def successor(self, state: int, k: int) -> int:
        op = self.operators[k]
        return (state & ~op.delete) | op.add

    def is_goal(self, state: int) -> bool:
        return self.goal & state == self.goal

    def state_atoms(self, state: int) -> frozenset[Atom]:
        return frozenset(self.atoms[i] for i in range(len(self.atoms)) if state >> i & 1)


def _static_ok(domain, lit: Literal, binding, state, statics, names):
    if lit.pred not in statics or not all(isinstance(a, str) or a in binding for a in lit.args):
        return True
    return (_literal_atom(lit, binding, names) in state.atoms) == lit.positive


def _bindings(domain, schema, pools, state, statics, names):
    """Typed bindings that satisfy every static top-level literal."""
    top = [c for c in schema.precondition if isinstance(c, Literal) and c.pred in statics]
    binding: dict[int, int] = {}

    def rec(k):
        if k == schema.arity:
            yield tuple(binding[i] for i in range(k))
            return
        for o in pools[k]:
            binding[k] = o
            if all(_static_ok(domain, l, binding, state, statics, names) for l in top):
                yield from rec(k + 1)
        binding.pop(k, None)

    if schema.arity == 0:
        if all(_static_ok(domain, l, {}, state, statics, names) for l in top):
            yield ()
        return
    yield from rec(0)


def _alternatives(domain, conds, binding, state, statics, names):
    """Expand a conjunction with existentials into fluent-literal sets.

    Static literals are evaluated against the initial state (they never
    change); each yielded item is a frozenset of (atom, positive) pairs.
    """
    results = [frozenset()]
    for c in conds:
        if isinstance(c, Literal):
            if c.pred in statics:
                if (_literal_atom(c, binding, names) in state.atoms) != c.positive:
                    return []
                continue
            lit = (_literal_atom(c, binding, names), c.positive)
            results = [r | {lit} for r in results]
        else:
            options = []
            pools = [_objects_of(domain, state.objects, t) for _, t in c.vars]
            for witness in product(*pools):
                inner = dict(binding)
                inner.update({slot: o for (slot, _), o in zip(c.vars, witness)})
                options.extend(_alternatives(domain, c.body, inner, state, statics, names))
            options = list(dict.fromkeys(options))
            results = [r | o for r in results for o in options]
            if not results:
                return []
    consistent = []
    for r in results:
        pos = {a for a, p in r if p}
        if not any(a in pos for a, p in r if not p):
            consistent.append(r)
    return list(dict.fromkeys(consistent))


def validate_plan(problem: ProblemInstance, plan) -> bool:
    """Replay ``plan`` from the initial state; True iff it reaches the goal."""
    state = problem.init_state
    for action in plan:
        if not precondition_holds(problem.domain, action, state):
            return False
        state = apply(problem.domain, state, action)
    return problem.goal <= state.atoms


__all__ = [
    "GroundTask",
    "Operator",
    "PDDLError",
    "applicable_ground_actions",
    "apply",
    "holds",
    "precondition_holds",
    "validate_plan",
]
