"""Run configuration: flat ``key = value`` text with ``[section]`` headers.

Example::

    [run]
    domain = blocksworld          # bundled name or path to a .pddl file
    validator = builtin:blocksworld
    seed = 0
    out = runs/bw

    [generation]
    max_init_atoms = 15
    goal = on(block, block)       # several entries: one per line, or ';'-separated

    [nlm]
    depth = 7

    [ppo]
    iterations = 1500

    [evaluate]
    planners = gbfs_hadd, gbfs_hff
    budget = 100000
"""
from __future__ import annotations

import configparser
import os
from dataclasses import dataclass, field, fields
from typing import Optional

from .consistency import BUILTIN_VALIDATORS, ValidatorSpec
from .domains import BUILTIN_DOMAINS, load_builtin
from .evaluate import DEFAULT_BUDGET, DEFAULT_PATTERN, DEFAULT_PLANNERS, PlannerKind
from .genmdp import GenConfig
from .nlm import NLMConfig
from .pddl import DomainModel, load_domain
from .ppo import PPOConfig

DEFAULT_GOALS = {
    "blocksworld": ("on(block, block)",),
    "logistics": ("at(package, location)",),
}


class ConfigError(ValueError):
    pass


@dataclass
class EvalSettings:
    planners: tuple[str, ...] = DEFAULT_PLANNERS
    budget: int = DEFAULT_BUDGET
    norm_corpus_size: int = 50
    norm_cache: Optional[str] = None
    external_command: Optional[str] = None
    external_pattern: str = DEFAULT_PATTERN
    external_timeout: float = 600.0


@dataclass
class RunConfig:
    domain: str
    domain_file: Optional[str]
    validator: str
    gen: GenConfig
    nlm: NLMConfig = field(default_factory=NLMConfig)
    ppo: PPOConfig = field(default_factory=PPOConfig)
    evaluation: EvalSettings = field(default_factory=EvalSettings)
    out: str = "."
    seed: int = 0
    min_size_slack: Optional[int] = 2
    baseline_min_atoms: int = 4
    retry_cap: int = 1000

    def load_domain(self) -> DomainModel:
        if self.domain_file is None:
            return load_builtin(self.domain)
        return load_domain(self.domain_file)

    def norm_cache_path(self) -> str:
        if self.evaluation.norm_cache:
            return self.evaluation.norm_cache
        return os.path.join(self.out, f"norms_{self.gen.max_init_atoms}.txt")


_RUN_KEYS = {"domain", "validator", "seed", "out"}
_GEN_KEYS = {"max_init_atoms", "max_goal_actions", "goal", "consistency_penalty", "difficulty_rescale",
             "min_size_slack", "baseline_min_atoms", "retry_cap"}
_EVAL_KEYS = {f.name for f in fields(EvalSettings)}


def _convert(value: str, kind):
    value = value.strip()
    if kind is bool:
        low = value.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"expected a boolean, got {value!r}")
    return kind(value)


def _dataclass_from(section, cls, name):
    kwargs = {}
    types = {f.name: f.type for f in fields(cls)}
    for key, raw in section.items():
        if key not in types:
            raise ConfigError(f"unknown key {key!r} in [{name}]")
        kind = {"int": int, "float": float, "bool": bool}.get(str(types[key]), str)
        try:
            kwargs[key] = _convert(raw, kind)
        except ValueError as exc:
            raise ConfigError(f"[{name}] {key}: {exc}") from None
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"[{name}]: {exc}") from None


def _split_list(raw: str) -> tuple[str, ...]:
    parts = []
    for line in raw.replace(";", "\n").splitlines():
        line = line.strip()
        if line:
            parts.append(line)
    return tuple(parts)


def _resolve(base: str, path: str) -> str:
    path = os.path.expanduser(path)
    return path if os.path.isabs(path) else os.path.normpath(os.path.join(base, path))


def load_config(path) -> RunConfig:
    if not os.path.isfile(path):
        raise ConfigError(f"config file not found: {path}")
    parser = configparser.ConfigParser(inline_comment_prefixes=("#",), interpolation=None)
    try:
        parser.read(path)
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from None
    base = os.path.dirname(os.path.abspath(path))
    known = {"run", "generation", "nlm", "ppo", "evaluate"}
    for s in parser.sections():
        if s not in known:
            raise ConfigError(f"unknown section [{s}]")
    sect = {s: dict(parser[s]) if parser.has_section(s) else {} for s in known}
    return build_config(sect, base)


def build_config(sect: dict, base: str = ".") -> RunConfig:
    run = sect.get("run", {})
    for key in run:
        if key not in _RUN_KEYS:
            raise ConfigError(f"unknown key {key!r} in [run]")
    domain = run.get("domain", "").strip()
    if not domain:
        raise ConfigError("[run] domain is required")
    domain_file = None
    if domain not in BUILTIN_DOMAINS:
        domain_file = _resolve(base, domain)
        if not os.path.isfile(domain_file):
            raise ConfigError(f"domain file not found: {domain_file}")
    try:
        dm = load_builtin(domain) if domain_file is None else load_domain(domain_file)
    except ValueError as exc:
        raise ConfigError(f"cannot load domain: {exc}") from None
    validator = run.get("validator", "").strip()
    if not validator:
        if dm.name not in BUILTIN_VALIDATORS:
            raise ConfigError(f"[run] validator is required for domain {dm.name!r}")
        validator = f"builtin:{dm.name}"
    try:
        ValidatorSpec.parse(validator)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None

    gen = dict(sect.get("generation", {}))
    for key in gen:
        if key not in _GEN_KEYS:
            raise ConfigError(f"unknown key {key!r} in [generation]")
    goals = _split_list(gen.pop("goal", "")) or DEFAULT_GOALS.get(dm.name, ())
    extras = {}
    try:
        slack = gen.pop("min_size_slack", "2").strip()
        extras["min_size_slack"] = None if slack.lower() in ("none", "off", "") else int(slack)
        extras["baseline_min_atoms"] = int(gen.pop("baseline_min_atoms", "4"))
        extras["retry_cap"] = int(gen.pop("retry_cap", "1000"))
        gen_cfg = GenConfig(
            max_init_atoms=int(gen.pop("max_init_atoms", "15")),
            max_goal_actions=int(gen.pop("max_goal_actions", "30")),
            consistency_penalty=float(gen.pop("consistency_penalty", "-1.0")),
            difficulty_rescale=float(gen.pop("difficulty_rescale", "0.1")),
            goal_spec=goals,
        )
        gen_cfg.check_domain(dm)
    except ValueError as exc:
        raise ConfigError(f"[generation]: {exc}") from None
    if extras["retry_cap"] < 1:
        raise ConfigError("[generation] retry_cap must be >= 1")

    nlm = _dataclass_from(sect.get("nlm", {}), NLMConfig, "nlm")
    ppo = _dataclass_from(sect.get("ppo", {}), PPOConfig, "ppo")

    ev_raw = dict(sect.get("evaluate", {}))
    for key in ev_raw:
        if key not in _EVAL_KEYS:
            raise ConfigError(f"unknown key {key!r} in [evaluate]")
    try:
        ev = EvalSettings(
            planners=tuple(p.strip() for p in ev_raw.get("planners", ",".join(DEFAULT_PLANNERS)).split(",") if p.strip()),
            budget=int(ev_raw.get("budget", DEFAULT_BUDGET)),
            norm_corpus_size=int(ev_raw.get("norm_corpus_size", 50)),
            norm_cache=_resolve(base, ev_raw["norm_cache"]) if ev_raw.get("norm_cache") else None,
            external_command=ev_raw.get("external_command") or None,
            external_pattern=ev_raw.get("external_pattern", DEFAULT_PATTERN),
            external_timeout=float(ev_raw.get("external_timeout", 600.0)),
        )
        for p in ev.planners:
            PlannerKind(p)
    except ValueError as exc:
        raise ConfigError(f"[evaluate]: {exc}") from None
    if not ev.planners or ev.budget < 1 or ev.norm_corpus_size < 1:
        raise ConfigError("[evaluate] needs at least one planner, budget >= 1 and norm_corpus_size >= 1")

    try:
        seed = int(run.get("seed", "0"))
    except ValueError:
        raise ConfigError("[run] seed must be an integer") from None
    return RunConfig(
        domain=domain if domain_file is None else dm.name,
        domain_file=domain_file,
        validator=validator,
        gen=gen_cfg,
        nlm=nlm,
        ppo=ppo,
        evaluation=ev,
        out=_resolve(base, run.get("out", ".")),
        seed=seed,
        **extras,
    )
