"""Typed-STRIPS PDDL front end."""
from .emit import emit_problem
from .errors import (
    InapplicableActionError,
    PDDLError,
    PDDLSyntaxError,
    UnsupportedFeatureError,
)
from .ground import (
    GroundTask,
    applicable_ground_actions,
    apply,
    holds,
    precondition_holds,
    validate_plan,
)
from .model import (
    ROOT_TYPE,
    ActionSchema,
    Atom,
    DomainModel,
    Exists,
    GroundAction,
    Literal,
    Obj,
    PredicateSchema,
    ProblemInstance,
    State,
    TypeHierarchy,
    action_str,
    atom_str,
    is_subtype,
)
from .parser import load_domain, load_problem, parse_domain, parse_problem

__all__ = [name for name in dir() if not name.startswith("_")]
