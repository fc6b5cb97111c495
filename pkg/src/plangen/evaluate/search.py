"""Embedded planners: lazy greedy best-first search and blind uniform-cost search."""
from __future__ import annotations

import enum
import heapq
import time
from collections import deque
from dataclasses import dataclass
from math import inf
from typing import Optional

from ..pddl import GroundAction, GroundTask, ProblemInstance
from .heuristics import RelaxedExploration, h_add, h_ff

DEFAULT_BUDGET = 100_000


class PlannerKind(str, enum.Enum):
    GBFS_HADD = "gbfs_hadd"
    GBFS_HFF = "gbfs_hff"
    ASTAR_BLIND = "astar_blind"


class Status(str, enum.Enum):
    SOLVED = "solved"
    UNSOLVABLE = "unsolvable"
    BUDGET_EXCEEDED = "budget_exceeded"


@dataclass(frozen=True)
class PlanResult:
    status: Status
    plan: Optional[tuple[GroundAction, ...]]
    nodes_expanded: int
    wall_s: float

    @property
    def solved(self) -> bool:
        return self.status == Status.SOLVED


def _extract(parents, task, node):
    plan = []
    while parents[node] is not None:
        prev, k = parents[node]
        plan.append(task.operators[k].action)
        node = prev
    return tuple(reversed(plan))


def _successors(task: GroundTask, state: int):
    for k in task.applicable(state):
        yield k, task.successor(state, k)


def lazy_gbfs(task: GroundTask, heuristic, budget: int = DEFAULT_BUDGET):
    """Lazy greedy best-first search.

    Successors are queued with their parent's heuristic value and evaluated
    only when popped; ties break by insertion order.  Returns
    ``(status, plan, expanded)``; ``expanded`` counts distinct popped states.
    """
    counter = 0
    heap = [(0.0, counter, task.init)]
    parents = {task.init: None}
    closed = set()
    expanded = 0
    while heap:
        _, _, state = heapq.heappop(heap)
        if state in closed:
            continue
        if expanded >= budget:
            return Status.BUDGET_EXCEEDED, None, expanded
        closed.add(state)
        expanded += 1
        if task.is_goal(state):
            return Status.SOLVED, _extract(parents, task, state), expanded
        h = heuristic(state)
        if h == inf:
            continue
        for k, succ in _successors(task, state):
            if succ in closed:
                continue
            if succ not in parents:
                parents[succ] = (state, k)
            counter += 1
            heapq.heappush(heap, (h, counter, succ))
    return Status.UNSOLVABLE, None, expanded


def uniform_cost(task: GroundTask, budget: int = DEFAULT_BUDGET):
    """Blind search with unit costs (breadth-first order, goal test on pop)."""
    queue = deque([task.init])
    parents = {task.init: None}
    expanded = 0
    while queue:
        if expanded >= budget:
            return Status.BUDGET_EXCEEDED, None, expanded
        state = queue.popleft()
        expanded += 1
        if task.is_goal(state):
            return Status.SOLVED, _extract(parents, task, state), expanded
        for k, succ in _successors(task, state):
            if succ not in parents:
                parents[succ] = (state, k)
                queue.append(succ)
    return Status.UNSOLVABLE, None, expanded


def plan(problem, kind="gbfs_hadd", budget: int = DEFAULT_BUDGET, task: Optional[GroundTask] = None) -> PlanResult:
    """Solve ``problem`` with an embedded planner."""
    if budget < 1:
        raise ValueError("budget must be >= 1")
    kind = PlannerKind(kind)
    start = time.perf_counter()
    task = task or GroundTask(problem)
    if kind == PlannerKind.ASTAR_BLIND:
        status, steps, expanded = uniform_cost(task, budget)
    else:
        exploration = RelaxedExploration(task)
        fn = h_add if kind == PlannerKind.GBFS_HADD else h_ff
        status, steps, expanded = lazy_gbfs(task, lambda s: fn(task, s, exploration), budget)
    return PlanResult(status, steps, expanded, time.perf_counter() - start)
