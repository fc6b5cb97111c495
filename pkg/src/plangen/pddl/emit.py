"""PDDL problem writer."""
from __future__ import annotations

from .model import ProblemInstance, atom_str


def _sorted_atoms(atoms):
    return sorted(atoms, key=lambda a: (a.pred, a.args))


def emit_problem(instance: ProblemInstance, wrap_goal: bool = False) -> str:
    """Render ``instance`` as PDDL text, one clause per line.

    By default a multi-atom goal is written as a bare sequence of atoms, the
    layout produced by the generator's reference output.  ``wrap_goal=True``
    writes a conjunction ``(and ...)`` for consumers that insist on one
    goal formula (external planners).
    """
    domain = instance.domain
    objs = instance.objects
    n_const = len(domain.constants)
    groups: list[tuple[list[str], str]] = []
    for o in objs[n_const:]:
        if groups and groups[-1][1] == o.type:
            groups[-1][0].append(o.name)
        else:
            groups.append(([o.name], o.type))
    obj_text = " ".join(f"{' '.join(names)} - {typ}" for names, typ in groups)
    init = " ".join(atom_str(domain, objs, a) for a in _sorted_atoms(instance.init))
    goal_atoms = [atom_str(domain, objs, a) for a in _sorted_atoms(instance.goal)]
    if wrap_goal and len(goal_atoms) > 1:
        goal = f"(and {' '.join(goal_atoms)})"
    else:
        goal = " ".join(goal_atoms)
    return (
        f"(define (problem {instance.name})\n"
        f"(:domain {domain.name})\n"
        f"(:objects {obj_text})\n"
        f"(:init {init})\n"
        f"(:goal {goal})\n"
        ")\n"
    ).replace("(:objects )", "(:objects)").replace("(:goal )", "(:goal)")
