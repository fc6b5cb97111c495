"""Normalized node-expansion difficulty."""
from __future__ import annotations

import os
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from ..pddl import GroundTask
from .search import DEFAULT_BUDGET, PlannerKind, plan

DEFAULT_PLANNERS = ("gbfs_hadd", "gbfs_hff")


class EvaluationError(RuntimeError):
    """A planner failed to solve a problem within budget."""

    def __init__(self, planner, result):
        super().__init__(f"{planner} returned {result.status.value} after {result.nodes_expanded} expansions")
        self.planner = planner
        self.result = result


@dataclass(frozen=True)
class DifficultyReport:
    raw: dict[str, int]
    normalized: dict[str, float]
    aggregate: float


def raw_nodes(problem, kinds: Sequence[str] = DEFAULT_PLANNERS, budget: int = DEFAULT_BUDGET) -> dict[str, int]:
    """Expanded-node counts per planner; raises EvaluationError on any failure."""
    task = GroundTask(problem)
    out = {}
    for kind in kinds:
        kind = PlannerKind(kind).value
        res = plan(problem, kind, budget, task=task)
        if not res.solved:
            raise EvaluationError(kind, res)
        out[kind] = res.nodes_expanded
    return out


def normalize(raw: Mapping[str, int], norms: Mapping[str, float]) -> DifficultyReport:
    normalized = {}
    for k, v in raw.items():
        if norms.get(k, 0) <= 0:
            raise ValueError(f"norm for planner {k!r} must be positive")
        normalized[k] = v / norms[k]
    return DifficultyReport(dict(raw), normalized, float(np.mean(list(normalized.values()))))


def difficulty(problem, kinds: Sequence[str], norms: Mapping[str, float], budget: int = DEFAULT_BUDGET) -> DifficultyReport:
    return normalize(raw_nodes(problem, kinds, budget), norms)


def compute_norms(corpus, kinds: Sequence[str] = DEFAULT_PLANNERS, budget: int = DEFAULT_BUDGET) -> dict[str, float]:
    """Mean expansions per planner over a reference corpus."""
    rows = [raw_nodes(p, kinds, budget) for p in corpus]
    if not rows:
        raise ValueError("reference corpus is empty")
    return {PlannerKind(k).value: float(np.mean([r[PlannerKind(k).value] for r in rows])) for k in kinds}


def save_norms(path, norms: Mapping[str, float], meta: Mapping[str, object] = ()):
    lines = [f"# {k}={v}" for k, v in dict(meta).items()]
    lines.append("planner,mean_nodes")
    lines.extend(f"{k},{v!r}" for k, v in norms.items())
    tmp = f"{path}.tmp"
    with open(tmp, "w") as f:
        f.write("\n".join(lines) + "\n")
    os.replace(tmp, path)


def load_norms(path) -> tuple[dict[str, float], dict[str, str]]:
    norms, meta = {}, {}
    with open(path) as f:
        for line in f:
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                k, _, v = line[1:].strip().partition("=")
                meta[k] = v
            elif line != "planner,mean_nodes":
                k, _, v = line.partition(",")
                norms[k] = float(v)
    return norms, meta
