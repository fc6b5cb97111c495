"""Reader for typed STRIPS with negative and existential preconditions.

Anything outside that fragment is rejected with
:class:`UnsupportedFeatureError` instead of being silently ignored.
"""
from __future__ import annotations

import re

from .errors import PDDLError, PDDLSyntaxError, UnsupportedFeatureError
from .model import (
    ROOT_TYPE,
    ActionSchema,
    Atom,
    DomainModel,
    Exists,
    Literal,
    Obj,
    PredicateSchema,
    ProblemInstance,
    TypeHierarchy,
)

SUPPORTED_REQUIREMENTS = {
    ":strips",
    ":typing",
    ":negative-preconditions",
    ":existential-preconditions",
}

_TOKEN = re.compile(r"\s*(?:(;[^\n]*)|([()])|([^\s()]+))")


class Tok(str):
    line: int
    col: int

    def __new__(cls, text, line, col):
        s = super().__new__(cls, text)
        s.line, s.col = line, col
        return s


class SList(list):
    line = col = None


def tokenize(text: str):
    line_starts = [0] + [m.end() for m in re.finditer("\n", text)]

    def position(offset):
        lo, hi = 0, len(line_starts) - 1
        while lo < hi:
            mid = (lo + hi + 1) // 2
            if line_starts[mid] <= offset:
                lo = mid
            else:
                hi = mid - 1
        return lo + 1, offset - line_starts[lo] + 1

    pos = 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if not m or m.end() == pos:
            break
        pos = m.end()
        if m.group(1):
            continue
        tok = m.group(2) or m.group(3)
        if tok is None:
            continue
        start = m.start(2) if m.group(2) else m.start(3)
        yield Tok(tok.lower(), *position(start))


def read_sexpr(text: str) -> SList:
    stack: list[SList] = []
    result = None
    for tok in tokenize(text):
        if tok == "(":
            lst = SList()
            lst.line, lst.col = tok.line, tok.col
            if stack:
                stack[-1].append(lst)
            elif result is not None:
                raise PDDLSyntaxError("unexpected content after top-level expression", tok.line, tok.col)
            stack.append(lst)
        elif tok == ")":
            if not stack:
                raise PDDLSyntaxError("unbalanced ')'", tok.line, tok.col)
            done = stack.pop()
            if not stack:
                result = done
        else:
            if not stack:
                raise PDDLSyntaxError(f"unexpected token {tok!r} outside parentheses", tok.line, tok.col)
            stack[-1].append(tok)
    if stack:
        raise PDDLSyntaxError("unbalanced '(' (missing ')')", stack[-1].line, stack[-1].col)
    if result is None:
        raise PDDLSyntaxError("empty input")
    return result


def _where(x):
    return getattr(x, "line", None), getattr(x, "col", None)


def _expect_list(x, what):
    if not isinstance(x, list):
        raise PDDLSyntaxError(f"expected {what}", *_where(x))
    return x


def _typed_list(items, hierarchy_types=None, variables=False):
    """Parse ``a b - t c`` into [(name, type)]; untyped names get ``object``."""
    out, pending = [], []
    i = 0
    while i < len(items):
        tok = items[i]
        if isinstance(tok, list):
            if tok and tok[0] == "either":
                raise UnsupportedFeatureError("either", *_where(tok))
            raise PDDLSyntaxError("unexpected list in typed list", *_where(tok))
        if tok == "-":
            if i + 1 >= len(items) or isinstance(items[i + 1], list):
                raise PDDLSyntaxError("missing type after '-'", *_where(tok))
            typ = items[i + 1]
            if hierarchy_types is not None and typ not in hierarchy_types:
                raise PDDLError(f"unknown type {str(typ)!r} at line {typ.line}, column {typ.col}")
            out.extend((name, str(typ)) for name in pending)
            pending = []
            i += 2
            continue
        if variables and not tok.startswith("?"):
            raise PDDLSyntaxError(f"expected variable, got {str(tok)!r}", *_where(tok))
        pending.append(str(tok))
        i += 1
    out.extend((name, ROOT_TYPE) for name in pending)
    return out


def _check_define(expr, kind):
    if not expr or expr[0] != "define" or len(expr) < 2:
        raise PDDLSyntaxError("expected (define ...)", *_where(expr))
    head = _expect_list(expr[1], f"({kind} name)")
    if len(head) != 2 or head[0] != kind:
        raise PDDLSyntaxError(f"expected ({kind} <name>)", *_where(head))
    return str(head[1])


def parse_domain(text: str) -> DomainModel:
    expr = read_sexpr(text)
    name = _check_define(expr, "domain")
    parents: list[tuple[str, str]] = []
    predicates: list[PredicateSchema] = []
    raw_actions = []
    constants_raw = []
    type_names = {ROOT_TYPE}
    for section in expr[2:]:
        section = _expect_list(section, "domain section")
        if not section:
            raise PDDLSyntaxError("empty section", *_where(section))
        key = section[0]
        if key == ":requirements":
            for req in section[1:]:
                if req not in SUPPORTED_REQUIREMENTS:
                    raise UnsupportedFeatureError(str(req), *_where(req))
        elif key == ":types":
            declared = _typed_list(section[1:])
            for child, par in declared:
                type_names.add(child)
                type_names.add(par)
                if child != ROOT_TYPE:
                    parents.append((child, par))
        elif key == ":constants":
            constants_raw = section[1:]
        elif key == ":predicates":
            for p in section[1:]:
                p = _expect_list(p, "predicate declaration")
                if not p or isinstance(p[0], list):
                    raise PDDLSyntaxError("malformed predicate declaration", *_where(p))
                params = _typed_list(p[1:], type_names, variables=True)
                predicates.append(PredicateSchema(str(p[0]), tuple(t for _, t in params)))
        elif key == ":action":
            raw_actions.append(section)
        elif key in (":functions", ":derived", ":durative-action", ":constraints"):
            raise UnsupportedFeatureError(str(key), *_where(key))
        else:
            raise PDDLSyntaxError(f"unknown domain section {str(key)!r}", *_where(key))
    children = {c for c, _ in parents}
    for par in list(dict.fromkeys(p for _, p in parents)):
        if par != ROOT_TYPE and par not in children:
            parents.append((par, ROOT_TYPE))
    hierarchy = TypeHierarchy(tuple(parents))
    constants = tuple(Obj(n, t) for n, t in _typed_list(constants_raw, hierarchy.types))
    pred_index = {p.name: i for i, p in enumerate(predicates)}
    const_types = {o.name: o.type for o in constants}
    actions = tuple(
        _parse_action(sec, hierarchy, predicates, pred_index, const_types) for sec in raw_actions
    )
    return DomainModel(name, hierarchy, tuple(predicates), actions, constants)


class _Scope:
    def __init__(self, params):
        self.slots = {}
        self.types = []
        for var, typ in params:
            self.add(var, typ)

    def add(self, var, typ):
        if var in self.slots:
            raise PDDLError(f"variable {var} declared twice")
        self.slots[var] = len(self.types)
        self.types.append(typ)
        return self.slots[var]


def _parse_action(section, hierarchy, predicates, pred_index, const_types):
    if len(section) < 2 or isinstance(section[1], list):
        raise PDDLSyntaxError("action without name", *_where(section))
    name = str(section[1])
    fields = {}
    rest = section[2:]
    if len(rest) % 2:
        raise PDDLSyntaxError(f"malformed action {name!r}", *_where(section))
    for key, val in zip(rest[::2], rest[1::2]):
        if key not in (":parameters", ":precondition", ":effect"):
            raise UnsupportedFeatureError(str(key), *_where(key))
        fields[str(key)] = val
    params = _typed_list(_expect_list(fields.get(":parameters", SList()), "parameter list"),
                         hierarchy.types, variables=True)
    scope = _Scope(params)
    ctx = (hierarchy, predicates, pred_index, const_types)
    pre = fields.get(":precondition")
    precondition = tuple(_parse_condition(pre, scope, ctx)) if pre is not None else ()
    adds, dels = [], []
    eff = fields.get(":effect")
    if eff is not None:
        for lit in _conjuncts(eff):
            if isinstance(lit, list) and lit and lit[0] == "not":
                if len(lit) != 2:
                    raise PDDLSyntaxError("malformed (not ...)", *_where(lit))
                dels.append(_parse_atom(lit[1], scope, ctx, allow_exists_vars=False))
            else:
                adds.append(_parse_atom(lit, scope, ctx, allow_exists_vars=False))
    return ActionSchema(name, tuple(params), precondition, tuple(adds), tuple(dels))


_UNSUPPORTED_HEADS = {
    "or": "disjunctive precondition",
    "imply": "implication",
    "forall": "universal quantification",
    "when": "conditional effect",
    "=": "equality",
    "increase": "numeric fluent",
    "decrease": "numeric fluent",
    "assign": "numeric fluent",
    "scale-up": "numeric fluent",
    "scale-down": "numeric fluent",
    "<": "numeric fluent",
    ">": "numeric fluent",
    "<=": "numeric fluent",
    ">=": "numeric fluent",
}


def _conjuncts(expr):
    expr = _expect_list(expr, "formula")
    if not expr:
        return []
    if expr[0] == "and":
        out = []
        for sub in expr[1:]:
            out.extend(_conjuncts(sub))
        return out
    if isinstance(expr[0], str) and expr[0] in _UNSUPPORTED_HEADS:
        raise UnsupportedFeatureError(_UNSUPPORTED_HEADS[expr[0]], *_where(expr))
    return [expr]


def _parse_condition(expr, scope, ctx):
    for c in _conjuncts(expr):
        head = c[0]
        if head == "not":
            if len(c) != 2:
                raise PDDLSyntaxError("malformed (not ...)", *_where(c))
            inner = _expect_list(c[1], "atom")
            if inner and inner[0] in ("and", "exists", "not") or inner and inner[0] in _UNSUPPORTED_HEADS:
                raise UnsupportedFeatureError("negation of a compound formula", *_where(c))
            yield _parse_atom(inner, scope, ctx)._replace(positive=False)
        elif head == "exists":
            if len(c) != 3:
                raise PDDLSyntaxError("malformed (exists ...)", *_where(c))
            hierarchy = ctx[0]
            decl = _typed_list(_expect_list(c[1], "variable list"), hierarchy.types, variables=True)
            inner_scope = _Scope([])
            inner_scope.slots = dict(scope.slots)
            inner_scope.types = scope.types  # shared so slot numbers stay unique per action
            vars_ = tuple((inner_scope.add(v, t), t) for v, t in decl)
            body = tuple(_parse_condition(c[2], inner_scope, ctx))
            yield Exists(vars_, body)
        else:
            yield _parse_atom(c, scope, ctx)


def _parse_atom(expr, scope, ctx, allow_exists_vars=True):
    hierarchy, predicates, pred_index, const_types = ctx
    expr = _expect_list(expr, "atom")
    if not expr or isinstance(expr[0], list):
        raise PDDLSyntaxError("malformed atom", *_where(expr))
    head = expr[0]
    if head in _UNSUPPORTED_HEADS:
        raise UnsupportedFeatureError(_UNSUPPORTED_HEADS[head], *_where(expr))
    if head in ("and", "not", "exists"):
        raise UnsupportedFeatureError(f"nested {head} in effect", *_where(expr))
    if head not in pred_index:
        raise PDDLError(f"unknown predicate {str(head)!r} at line {head.line}, column {head.col}")
    schema = predicates[pred_index[head]]
    if len(expr) - 1 != schema.arity:
        raise PDDLError(
            f"predicate {schema.name!r} expects {schema.arity} arguments, got {len(expr) - 1}"
            f" at line {head.line}"
        )
    args = []
    for tok, want in zip(expr[1:], schema.param_types):
        if isinstance(tok, list):
            raise UnsupportedFeatureError("function term", *_where(tok))
        if tok.startswith("?"):
            if tok not in scope.slots:
                raise PDDLError(f"undeclared variable {str(tok)} at line {tok.line}")
            slot = scope.slots[tok]
            typ = scope.types[slot]
            args.append(slot)
        else:
            if tok not in const_types:
                raise PDDLError(f"unknown constant {str(tok)!r} at line {tok.line}")
            typ = const_types[tok]
            args.append(str(tok))
        if not hierarchy.is_subtype(typ, want):
            raise PDDLError(
                f"argument {str(tok)} of type {typ!r} does not conform to {want!r}"
                f" in {schema.name!r} at line {tok.line}"
            )
    return Literal(pred_index[head], tuple(args))


def _ground_atom(expr, domain: DomainModel, names: dict[str, int], objects):
    expr = _expect_list(expr, "atom")
    if not expr or isinstance(expr[0], list):
        raise PDDLSyntaxError("malformed atom", *_where(expr))
    head = expr[0]
    if head in _UNSUPPORTED_HEADS or head in ("not", "exists"):
        raise UnsupportedFeatureError(_UNSUPPORTED_HEADS.get(head, str(head)), *_where(expr))
    if head not in domain.pred_index:
        raise PDDLError(f"unknown predicate {str(head)!r} at line {head.line}")
    pred = domain.pred_index[head]
    schema = domain.predicates[pred]
    if len(expr) - 1 != schema.arity:
        raise PDDLError(
            f"atom arity mismatch for {schema.name!r}: expected {schema.arity},"
            f" got {len(expr) - 1} at line {head.line}"
        )
    args = []
    for tok, want in zip(expr[1:], schema.param_types):
        if isinstance(tok, list) or tok not in names:
            raise PDDLError(f"undeclared object {str(tok)!r} at line {getattr(tok, 'line', '?')}")
        idx = names[tok]
        if not domain.is_subtype(objects[idx].type, want):
            raise PDDLError(f"object {str(tok)!r} does not conform to type {want!r} in {schema.name!r}")
        args.append(idx)
    return Atom(pred, tuple(args))


def parse_problem(text: str, domain: DomainModel) -> ProblemInstance:
    expr = read_sexpr(text)
    name = _check_define(expr, "problem")
    objects = list(domain.constants)
    init, goal = set(), set()
    seen_domain = False
    goal_expr = init_expr = None
    for section in expr[2:]:
        section = _expect_list(section, "problem section")
        if not section:
            raise PDDLSyntaxError("empty section", *_where(section))
        key = section[0]
        if key == ":domain":
            if len(section) != 2 or section[1] != domain.name:
                raise PDDLError(f"problem is for domain {section[1:]!r}, not {domain.name!r}")
            seen_domain = True
        elif key == ":objects":
            for n, t in _typed_list(section[1:], domain.hierarchy.types):
                objects.append(Obj(n, t))
        elif key == ":init":
            init_expr = section[1:]
        elif key == ":goal":
            goal_expr = section[1:]
        elif key == ":requirements":
            for req in section[1:]:
                if req not in SUPPORTED_REQUIREMENTS:
                    raise UnsupportedFeatureError(str(req), *_where(req))
        elif key in (":metric", ":constraints"):
            raise UnsupportedFeatureError(str(key), *_where(key))
        else:
            raise PDDLSyntaxError(f"unknown problem section {str(key)!r}", *_where(key))
    if not seen_domain:
        raise PDDLError("problem does not declare its domain")
    names: dict[str, int] = {}
    for i, o in enumerate(objects):
        if o.name in names:
            raise PDDLError(f"duplicate object {o.name!r}")
        names[o.name] = i
    for a in init_expr or ():
        init.add(_ground_atom(a, domain, names, objects))
    # Accept both "(:goal (and a b))" and the bare "(:goal a b)" form.
    for g in goal_expr or ():
        for lit in _conjuncts(g):
            if lit and lit[0] == "not":
                raise UnsupportedFeatureError("negative goal", *_where(lit))
            goal.add(_ground_atom(lit, domain, names, objects))
    if not init:
        raise PDDLError(f"problem {name!r} has an empty initial state")
    return ProblemInstance(name, domain, tuple(objects), frozenset(init), frozenset(goal))


def load_domain(path) -> DomainModel:
    with open(path) as f:
        return parse_domain(f.read())


def load_problem(path, domain: DomainModel) -> ProblemInstance:
    with open(path) as f:
        return parse_problem(f.read(), domain)
