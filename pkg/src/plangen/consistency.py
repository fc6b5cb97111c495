"""Consistency validators for partially and fully generated initial states.

A validator answers two questions:

* ``continuous_ok(state, atom)``: does adding ``atom`` keep ``state``
  continuous-consistent?  ``state.objects`` may contain entries flagged
  ``virtual``; those are candidate objects that are not (yet) part of the
  state, and ``atom`` may refer to them.
* ``eventual_ok(state)``: does a completed initial state satisfy the rules
  that only need to hold at the end of generation?

Blocksworld and logistics rule sets are built in.  Any other rule set can be
plugged in as an external process (see :class:`ExternalValidator`).
"""
from __future__ import annotations

import shlex
import subprocess
from dataclasses import dataclass
from typing import Optional

from .pddl import Atom, DomainModel, State, atom_str


class ValidatorError(RuntimeError):
    """The validator could not produce a verdict."""


@dataclass(frozen=True)
class ConsistencyVerdict:
    ok: bool
    violated_rule: Optional[str] = None

    def __post_init__(self):
        if self.ok == (self.violated_rule is not None):
            raise ValueError("violated_rule must be set exactly when ok is False")

    def __bool__(self):
        return self.ok


OK = ConsistencyVerdict(True)


def _fail(rule):
    return ConsistencyVerdict(False, rule)


@dataclass(frozen=True)
class ValidatorSpec:
    kind: str  # "builtin" or "external"
    target: str  # builtin domain id or command template

    @classmethod
    def parse(cls, text: str) -> "ValidatorSpec":
        kind, sep, target = text.strip().partition(":")
        if not sep or kind not in ("builtin", "external") or not target.strip():
            raise ValueError(f"bad validator spec {text!r}; use 'builtin:<domain>' or 'external:<command>'")
        if kind == "builtin" and target.strip() not in BUILTIN_VALIDATORS:
            raise ValueError(f"unknown builtin validator {target!r}; choose from {sorted(BUILTIN_VALIDATORS)}")
        return cls(kind, target.strip())

    def __str__(self):
        return f"{self.kind}:{self.target}"


class Validator:
    def __init__(self, domain: DomainModel):
        self.domain = domain

    def continuous_ok(self, state: State, atom: Atom) -> ConsistencyVerdict:
        raise NotImplementedError

    def eventual_ok(self, state: State) -> ConsistencyVerdict:
        raise NotImplementedError


class _BuiltinValidator(Validator):
    predicates: tuple[str, ...] = ()
    types: tuple[str, ...] = ()

    def __init__(self, domain: DomainModel):
        super().__init__(domain)
        missing = [p for p in self.predicates if p not in domain.pred_index]
        missing += [t for t in self.types if t not in domain.hierarchy]
        if missing:
            raise ValueError(f"domain {domain.name!r} lacks {missing} required by {type(self).__name__}")
        self.p = {name: domain.pred_index[name] for name in self.predicates}

    def _common(self, state: State, atom: Atom) -> Optional[str]:
        if len(set(atom.args)) != len(atom.args):
            return "repeated-objects"
        if atom in state.atoms:
            return "duplicate-atom"
        return None


class BlocksworldValidator(_BuiltinValidator):
    predicates = ("ontable", "on", "clear", "holding", "handempty")

    def continuous_ok(self, state, atom):
        rule = self._common(state, atom) or self._continuous(state, atom)
        return _fail("bw." + rule) if rule else OK

    def _continuous(self, state: State, atom: Atom) -> Optional[str]:
        p, idx, objs = self.p, state.index, state.objects

        def real(o):
            return not objs[o].virtual

        pred = atom.pred
        if pred == p["ontable"]:
            return "ontable.obj1-virtual" if real(atom.args[0]) else None
        if pred == p["on"]:
            x, y = atom.args
            if real(x):
                return "on.obj1-virtual"
            if not real(y):
                return "on.obj2-real"
            if idx.has(p["clear"], (y,)) or idx.has(p["holding"], (y,)):
                return "on.obj2-clear-or-held"
            if idx.any_at(p["on"], 1, y):
                return "on.obj2-covered"
            return None
        if pred == p["clear"]:
            (x,) = atom.args
            if not real(x):
                return "clear.obj1-real"
            if idx.has(p["holding"], (x,)):
                return "clear.obj1-held"
            if idx.any_at(p["on"], 1, x):
                return "clear.obj1-covered"
            return None
        if pred == p["holding"]:
            if real(atom.args[0]):
                return "holding.obj1-virtual"
            if idx.count(p["holding"]) or idx.count(p["handempty"]):
                return "holding.hand-busy"
            return None
        if pred == p["handempty"]:
            return "handempty.holding" if idx.count(p["holding"]) else None
        return "unknown-predicate"

    def eventual_ok(self, state):
        p, idx = self.p, state.index
        if not (idx.count(p["ontable"]) and idx.count(p["on"]) and idx.count(p["clear"])):
            return _fail("bw.missing-atom-types")
        for x, o in enumerate(state.objects):
            if o.virtual:
                continue
            placed = idx.has(p["ontable"], (x,)) or idx.any_at(p["on"], 0, x)
            if placed and not idx.any_at(p["on"], 1, x) and not idx.has(p["clear"], (x,)):
                return _fail("bw.tower-top-not-clear")
        if not (idx.count(p["holding"]) or idx.count(p["handempty"])):
            return _fail("bw.hand-unspecified")
        return OK


class LogisticsValidator(_BuiltinValidator):
    predicates = ("incity", "at", "in")
    types = ("city", "airport", "package", "truck", "airplane")

    def continuous_ok(self, state, atom):
        rule = self._common(state, atom) or self._continuous(state, atom)
        return _fail("lg." + rule) if rule else OK

    def _continuous(self, state: State, atom: Atom) -> Optional[str]:
        p, objs = self.p, state.objects
        pred = atom.pred
        if pred == p["incity"]:
            loc, city = atom.args
            if not objs[loc].virtual:
                return "incity.obj1-virtual"
            if objs[city].virtual and objs[loc].type != "airport":
                return "incity.first-location-airport"
            return None
        if pred == p["at"]:
            thing, loc = atom.args
            if not objs[thing].virtual:
                return "at.obj1-virtual"
            if objs[loc].virtual:
                return "at.obj2-real"
            kind = objs[thing].type
            if kind not in ("package", "truck", "airplane"):
                return "at.obj1-kind"
            if kind == "airplane" and objs[loc].type != "airport":
                return "at.airplane-at-airport"
            return None
        if pred == p["in"]:
            return "in.forbidden"
        return "unknown-predicate"

    def eventual_ok(self, state):
        p, idx = self.p, state.index
        objs = [(i, o) for i, o in enumerate(state.objects) if not o.virtual]
        kinds = [o.type for _, o in objs]
        if not (idx.count(p["incity"]) and idx.count(p["at"])):
            return _fail("lg.missing-atom-types")
        if "package" not in kinds or "airplane" not in kinds:
            return _fail("lg.missing-package-or-airplane")
        incity = idx.by_pred.get(p["incity"], set())
        at = idx.by_pred.get(p["at"], set())
        for c, o in objs:
            if o.type != "city":
                continue
            locations = {loc for loc, city in incity if city == c}
            if not any(l in locations and state.objects[t].type == "truck" for t, l in at):
                return _fail("lg.city-without-truck")
        if kinds.count("city") < 2:
            return _fail("lg.too-few-cities")
        return OK


BUILTIN_VALIDATORS = {"blocksworld": BlocksworldValidator, "logistics": LogisticsValidator}


def bw_continuous(domain, state, atom) -> bool:
    return BlocksworldValidator(domain).continuous_ok(state, atom).ok


def bw_eventual(domain, state) -> bool:
    return BlocksworldValidator(domain).eventual_ok(state).ok


def lg_continuous(domain, state, atom) -> bool:
    return LogisticsValidator(domain).continuous_ok(state, atom).ok


def lg_eventual(domain, state) -> bool:
    return LogisticsValidator(domain).eventual_ok(state).ok


def state_to_text(domain: DomainModel, state: State, mode: str, atom: Optional[Atom] = None) -> str:
    """Serialize a validator request.

    Line 1 is the mode (``continuous`` or ``eventual``), followed by
    ``(:objects ...)``, ``(:virtual ...)`` (candidate objects, possibly empty),
    ``(:init ...)`` and, in continuous mode, ``(:candidate <atom>)``.
    """
    real = [o for o in state.objects if not o.virtual]
    virt = [o for o in state.objects if o.virtual]
    lines = [
        mode,
        "(:objects " + " ".join(f"{o.name} - {o.type}" for o in real) + ")",
        "(:virtual " + " ".join(f"{o.name} - {o.type}" for o in virt) + ")",
        "(:init " + " ".join(atom_str(domain, state.objects, a) for a in sorted(state.atoms)) + ")",
    ]
    if atom is not None:
        lines.append(f"(:candidate {atom_str(domain, state.objects, atom)})")
    return "\n".join(lines) + "\n"


class ExternalValidator(Validator):
    """Runs ``command`` once per query.

    The request (see :func:`state_to_text`) goes to standard input; the
    process must print ``OK`` or ``FAIL <rule-id>`` and exit with status 0.
    """

    def __init__(self, domain: DomainModel, command: str, timeout: float = 30.0):
        super().__init__(domain)
        self.command = shlex.split(command)
        self.timeout = timeout

    def _ask(self, payload: str) -> ConsistencyVerdict:
        try:
            proc = subprocess.run(
                self.command, input=payload, capture_output=True, text=True, timeout=self.timeout
            )
        except subprocess.TimeoutExpired as exc:
            raise ValidatorError(f"validator timed out after {self.timeout}s") from exc
        except OSError as exc:
            raise ValidatorError(f"cannot run validator: {exc}") from exc
        if proc.returncode != 0:
            raise ValidatorError(f"validator exited with status {proc.returncode}: {proc.stderr.strip()}")
        words = proc.stdout.split()
        if words == ["OK"]:
            return OK
        if len(words) == 2 and words[0] == "FAIL":
            return _fail(words[1])
        raise ValidatorError(f"unparseable validator output {proc.stdout!r}")

    def continuous_ok(self, state, atom):
        return self._ask(state_to_text(self.domain, state, "continuous", atom))

    def eventual_ok(self, state):
        return self._ask(state_to_text(self.domain, state, "eventual"))


def make_validator(spec, domain: DomainModel) -> Validator:
    if isinstance(spec, Validator):
        return spec
    if isinstance(spec, str):
        spec = ValidatorSpec.parse(spec)
    if spec.kind == "builtin":
        return BUILTIN_VALIDATORS[spec.target](domain)
    return ExternalValidator(domain, spec.target)


def continuous_ok(validator: Validator, state: State, atom: Atom) -> ConsistencyVerdict:
    return validator.continuous_ok(state, atom)


def eventual_ok(validator: Validator, state: State) -> ConsistencyVerdict:
    return validator.eventual_ok(state)


def generation_order(validator: Validator, state: State, max_nodes: int = 100_000):
    """Find an order in which the atoms of a finished state could have been added.

    While replaying, an object counts as virtual until some already-added atom
    mentions it.  Returns ``(verdict, order)``: on success the verdict is the
    eventual check of the full state; otherwise it names the continuous rule
    that blocked the deepest partial order found.
    """
    atoms = sorted(state.atoms)
    nodes = 0
    failed: set = set()
    deepest = [-1, None]

    def view(added):
        mentioned = {o for a in added for o in a.args}
        objs = tuple(o._replace(virtual=i not in mentioned) for i, o in enumerate(state.objects))
        return State(objs, frozenset(added))

    def rec(added: list, chosen: frozenset):
        nonlocal nodes
        if len(added) == len(atoms):
            return list(added)
        if chosen in failed or nodes >= max_nodes:
            return None
        nodes += 1
        partial = view(added)
        for atom in atoms:
            if atom in chosen:
                continue
            verdict = validator.continuous_ok(partial, atom)
            if not verdict.ok:
                if len(added) > deepest[0]:
                    deepest[:] = [len(added), verdict.violated_rule]
                continue
            added.append(atom)
            found = rec(added, chosen | {atom})
            added.pop()
            if found is not None:
                return found
        failed.add(chosen)
        return None

    order = rec([], frozenset())
    if order is None:
        return _fail(deepest[1] or "no-generation-order"), None
    return validator.eventual_ok(state), order
