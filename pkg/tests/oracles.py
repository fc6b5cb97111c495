"""Independent reference implementations used as test oracles.

None of these reuse the package's evaluation code paths: they work on plain
strings and tuples and favour obviousness over speed.
"""
from __future__ import annotations

import itertools
import math

import numpy as np

# ---------------------------------------------------------------------------
# Blocksworld consistency rules evaluated directly on named atoms.
# A state is (real_objects: set[str], atoms: set[tuple]) with atoms like
# ("on", "o2", "o1"); objects not in real_objects are virtual.


def _any(atoms, pred, pos=None, obj=None):
    return any(a[0] == pred and (pos is None or a[1 + pos] == obj) for a in atoms)


def bw_continuous(real, atoms, atom) -> bool:
    args = atom[1:]
    if len(args) != len(set(args)):
        return False
    if atom in atoms:
        return False
    kind = atom[0]
    if kind == "ontable":
        return args[0] not in real
    if kind == "on":
        x, y = args
        if x in real or y not in real:
            return False
        if ("clear", y) in atoms or ("holding", y) in atoms:
            return False
        return not _any(atoms, "on", 1, y)
    if kind == "clear":
        (x,) = args
        if x not in real or ("holding", x) in atoms:
            return False
        return not _any(atoms, "on", 1, x)
    if kind == "holding":
        if args[0] in real:
            return False
        return not _any(atoms, "holding") and ("handempty",) not in atoms
    if kind == "handempty":
        return not _any(atoms, "holding")
    return False


def bw_eventual(real, atoms) -> bool:
    if not (_any(atoms, "ontable") and _any(atoms, "on") and _any(atoms, "clear")):
        return False
    for x in real:
        placed = ("ontable", x) in atoms or _any(atoms, "on", 0, x)
        if placed and not _any(atoms, "on", 1, x) and ("clear", x) not in atoms:
            return False
    return _any(atoms, "holding") or ("handempty",) in atoms


def lg_continuous(real, types, atoms, atom) -> bool:
    """``types`` maps every object name (real or virtual) to its type."""
    args = atom[1:]
    if len(args) != len(set(args)) or atom in atoms:
        return False
    kind = atom[0]
    if kind == "incity":
        a, b = args
        if a in real:
            return False
        return types[a] == "airport" if b not in real else True
    if kind == "at":
        a, b = args
        if a in real or b not in real:
            return False
        if types[a] not in ("package", "truck", "airplane"):
            return False
        return types[b] == "airport" if types[a] == "airplane" else True
    return False


def lg_eventual(real, types, atoms) -> bool:
    kinds = [types[o] for o in real]
    if not (_any(atoms, "incity") and _any(atoms, "at")):
        return False
    if "package" not in kinds or "airplane" not in kinds:
        return False
    for city in (o for o in real if types[o] == "city"):
        locs = {a[1] for a in atoms if a[0] == "incity" and a[2] == city}
        if not any(a[0] == "at" and a[2] in locs and types[a[1]] == "truck" for a in atoms):
            return False
    return kinds.count("city") >= 2


# ---------------------------------------------------------------------------
# Brute-force grounding over named objects


def brute_applicable(problem_domain, objects, atoms):
    """All (schema_name, args) whose precondition holds, by full enumeration.

    ``objects`` is a list of (name, type); ``atoms`` a set of tuples of names.
    The precondition is evaluated from the domain's lifted structure, reading
    literal arguments through a name binding (never the package's grounder).
    """
    from plangen.pddl.model import Literal

    hier = problem_domain.hierarchy
    names = [n for n, _ in objects]
    otype = dict(objects)

    def fits(name, t):
        return hier.is_subtype(otype[name], t)

    def arg(a, binding):
        return a if isinstance(a, str) else binding[a]

    def sat(conds, binding):
        for c in conds:
            if isinstance(c, Literal):
                pred = problem_domain.predicates[c.pred].name
                tup = (pred,) + tuple(arg(a, binding) for a in c.args)
                if (tup in atoms) != c.positive:
                    return False
            else:
                ok = False
                for combo in itertools.product(names, repeat=len(c.vars)):
                    if not all(fits(o, t) for o, (_, t) in zip(combo, c.vars)):
                        continue
                    inner = dict(binding)
                    inner.update({slot: o for (slot, _), o in zip(c.vars, combo)})
                    if sat(c.body, inner):
                        ok = True
                        break
                if not ok:
                    return False
        return True

    out = []
    for schema in problem_domain.actions:
        for combo in itertools.product(names, repeat=schema.arity):
            if not all(fits(o, t) for o, t in zip(combo, schema.param_types)):
                continue
            if sat(schema.precondition, dict(enumerate(combo))):
                out.append((schema.name, combo))
    return sorted(out)


# ---------------------------------------------------------------------------
# Relaxed costs by plain Bellman-Ford iteration


def hadd_fixpoint(operators, state_facts, goal_facts):
    """``operators``: list of (pre_facts, add_facts). Iterate to the fixpoint."""
    cost = {f: 0.0 for f in state_facts}
    changed = True
    while changed:
        changed = False
        for pre, add in operators:
            if all(p in cost for p in pre):
                c = 1 + sum(cost[p] for p in pre)
                for f in add:
                    if c < cost.get(f, math.inf):
                        cost[f] = c
                        changed = True
    total = 0.0
    for g in goal_facts:
        if g not in cost:
            return math.inf
        total += cost[g]
    return total


# ---------------------------------------------------------------------------
# Diversity by explicit double loop


def diversity_bruteforce(rows):
    x = np.asarray(rows, dtype=float)
    keep = [j for j in range(x.shape[1]) if len(set(x[:, j])) > 1]
    x = x[:, keep]
    if x.shape[1] == 0:
        return 0.0
    lo, hi = x.min(axis=0), x.max(axis=0)
    x = (x - lo) / (hi - lo)
    n = len(x)
    per = []
    for i in range(n):
        acc = 0.0
        for j in range(n):
            if i != j:
                acc += math.sqrt(sum((x[i, k] - x[j, k]) ** 2 for k in range(x.shape[1])))
        per.append(acc / (n - 1))
    return sum(per) / n


# ---------------------------------------------------------------------------
# Finite differences


def central_difference(f, theta, direction, eps=1e-4):
    return (f(theta + eps * direction) - f(theta - eps * direction)) / (2 * eps)


def relative_error(a, b):
    denom = max(abs(a), abs(b))
    return 0.0 if denom == 0 else abs(a - b) / denom
