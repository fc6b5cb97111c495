"""Immutable typed-STRIPS data model.

Objects are interned to dense integer indices; atoms and ground actions
refer to objects and schemas by index.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import NamedTuple, Union

from .errors import PDDLError

ROOT_TYPE = "object"


class Literal(NamedTuple):
    """A lifted literal. Each arg is a variable slot (int) or a constant name (str)."""

    pred: int
    args: tuple[Union[int, str], ...]
    positive: bool = True


class Exists(NamedTuple):
    """Existential quantification over ``vars`` (slot, type) of a conjunction."""

    vars: tuple[tuple[int, str], ...]
    body: tuple  # of Literal | Exists


class Obj(NamedTuple):
    name: str
    type: str
    virtual: bool = False


class Atom(NamedTuple):
    pred: int
    args: tuple[int, ...]


class GroundAction(NamedTuple):
    schema: int
    args: tuple[int, ...]


@dataclass(frozen=True)
class TypeHierarchy:
    """Single-inheritance type tree rooted at ``object``."""

    parent: tuple[tuple[str, str], ...] = ()

    def __post_init__(self):
        seen: dict[str, str] = {}
        for child, par in self.parent:
            if child == ROOT_TYPE:
                raise PDDLError("type 'object' cannot have a supertype")
            if child in seen and seen[child] != par:
                raise PDDLError(f"type {child!r} declared with two supertypes")
            seen[child] = par
        for t in seen:
            chain = {t}
            cur = t
            while cur in seen:
                cur = seen[cur]
                if cur in chain:
                    raise PDDLError(f"cyclic type hierarchy through {t!r}")
                chain.add(cur)
            if cur != ROOT_TYPE:
                raise PDDLError(f"unknown type {cur!r}")

    @cached_property
    def parents(self) -> dict[str, str]:
        return dict(self.parent)

    @cached_property
    def types(self) -> tuple[str, ...]:
        """All types in declaration order, root first."""
        out = [ROOT_TYPE]
        for child, _ in self.parent:
            if child not in out:
                out.append(child)
        return tuple(out)

    @cached_property
    def _ancestors(self) -> dict[str, frozenset[str]]:
        anc = {}
        for t in self.types:
            chain = [t]
            while chain[-1] in self.parents:
                chain.append(self.parents[chain[-1]])
            anc[t] = frozenset(chain)
        return anc

    def __contains__(self, t: str) -> bool:
        return t in self._ancestors

    def is_subtype(self, t1: str, t2: str) -> bool:
        """True iff ``t1 == t2`` or ``t2`` is an ancestor of ``t1``."""
        anc = self._ancestors
        for t in (t1, t2):
            if t not in anc:
                raise PDDLError(f"unknown type {t!r}")
        return t2 in anc[t1]

    def subtypes(self, t: str) -> tuple[str, ...]:
        return tuple(s for s in self.types if self.is_subtype(s, t))


def is_subtype(hierarchy: TypeHierarchy, t1: str, t2: str) -> bool:
    return hierarchy.is_subtype(t1, t2)


@dataclass(frozen=True)
class PredicateSchema:
    name: str
    param_types: tuple[str, ...]

    @property
    def arity(self) -> int:
        return len(self.param_types)


@dataclass(frozen=True)
class ActionSchema:
    name: str
    params: tuple[tuple[str, str], ...]  # (variable name, type)
    precondition: tuple = ()  # conjunction of Literal | Exists
    add_effects: tuple[Literal, ...] = ()
    del_effects: tuple[Literal, ...] = ()

    @property
    def arity(self) -> int:
        return len(self.params)

    @property
    def param_types(self) -> tuple[str, ...]:
        return tuple(t for _, t in self.params)


@dataclass(frozen=True)
class DomainModel:
    name: str
    hierarchy: TypeHierarchy
    predicates: tuple[PredicateSchema, ...]
    actions: tuple[ActionSchema, ...] = ()
    constants: tuple[Obj, ...] = ()

    def __post_init__(self):
        for kind, items in (("predicate", self.predicates), ("action", self.actions)):
            names = [x.name for x in items]
            if len(set(names)) != len(names):
                raise PDDLError(f"duplicate {kind} name in domain {self.name!r}")

    @cached_property
    def pred_index(self) -> dict[str, int]:
        return {p.name: i for i, p in enumerate(self.predicates)}

    @cached_property
    def action_index(self) -> dict[str, int]:
        return {a.name: i for i, a in enumerate(self.actions)}

    @cached_property
    def static_predicates(self) -> frozenset[int]:
        """Predicates that no action adds or deletes."""
        touched = {lit.pred for a in self.actions for lit in a.add_effects + a.del_effects}
        return frozenset(range(len(self.predicates))) - touched

    def is_subtype(self, t1: str, t2: str) -> bool:
        return self.hierarchy.is_subtype(t1, t2)


class _AtomIndex:
    """Per-predicate lookups used by consistency rules and encoders."""

    def __init__(self, atoms):
        self.by_pred: dict[int, set[tuple[int, ...]]] = {}
        self.by_pos: dict[tuple[int, int, int], int] = {}
        for a in atoms:
            self.by_pred.setdefault(a.pred, set()).add(a.args)
            for pos, o in enumerate(a.args):
                key = (a.pred, pos, o)
                self.by_pos[key] = self.by_pos.get(key, 0) + 1

    def count(self, pred: int) -> int:
        return len(self.by_pred.get(pred, ()))

    def has(self, pred: int, args: tuple[int, ...]) -> bool:
        return args in self.by_pred.get(pred, ())

    def any_at(self, pred: int, pos: int, obj: int) -> bool:
        """Whether some atom of ``pred`` has ``obj`` at argument ``pos``."""
        return (pred, pos, obj) in self.by_pos


@dataclass(frozen=True)
class State:
    objects: tuple[Obj, ...]
    atoms: frozenset[Atom] = field(default_factory=frozenset)

    def __post_init__(self):
        names = [o.name for o in self.objects]
        if len(set(names)) != len(names):
            raise PDDLError("duplicate object name in state")
        n = len(self.objects)
        for a in self.atoms:
            if any(not 0 <= i < n for i in a.args):
                raise PDDLError(f"atom {a} refers to an unknown object index")

    @cached_property
    def index(self) -> _AtomIndex:
        return _AtomIndex(self.atoms)

    @cached_property
    def name_index(self) -> dict[str, int]:
        return {o.name: i for i, o in enumerate(self.objects)}

    def with_atoms(self, atoms) -> "State":
        return State(self.objects, frozenset(atoms))


@dataclass(frozen=True)
class ProblemInstance:
    name: str
    domain: DomainModel
    objects: tuple[Obj, ...]
    init: frozenset[Atom]
    goal: frozenset[Atom]

    @property
    def init_state(self) -> State:
        return State(self.objects, self.init)

    def __eq__(self, other):
        if not isinstance(other, ProblemInstance):
            return NotImplemented
        return (
            self.name == other.name
            and self.domain.name == other.domain.name
            and self.objects == other.objects
            and self.init == other.init
            and self.goal == other.goal
        )

    def __hash__(self):
        return hash((self.name, self.domain.name, self.objects, self.init, self.goal))


def atom_str(domain: DomainModel, objects, atom: Atom) -> str:
    names = " ".join(objects[i].name for i in atom.args)
    pred = domain.predicates[atom.pred].name
    return f"({pred} {names})" if names else f"({pred})"


def action_str(domain: DomainModel, objects, action: GroundAction) -> str:
    names = " ".join(objects[i].name for i in action.args)
    return f"({domain.actions[action.schema].name} {names})".replace(" )", ")")
