"""Bundled domain files."""
from importlib import resources

BUILTIN_DOMAINS = ("blocksworld", "logistics")


def domain_text(name: str) -> str:
    if name not in BUILTIN_DOMAINS:
        raise KeyError(f"no bundled domain {name!r}")
    return resources.files(__package__).joinpath(f"{name}.pddl").read_text()


def load_builtin(name: str):
    from ..pddl import parse_domain

    return parse_domain(domain_text(name))
