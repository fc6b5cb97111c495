"""Delete-relaxation heuristics over a :class:`GroundTask`."""
from __future__ import annotations

import heapq
from math import inf

from ..pddl import GroundTask


class RelaxedExploration:
    """Generalized Dijkstra over facts with additive operator costs.

    Each operator costs ``1 + sum(cost of its positive preconditions)``; a fact
    costs the cheapest operator adding it.  Negative preconditions are ignored,
    as in the usual delete relaxation.
    """

    def __init__(self, task: GroundTask):
        self.task = task
        self.n_pre = [len(op.pre_facts) for op in task.operators]
        self.free_ops = [k for k, n in enumerate(self.n_pre) if n == 0]

    def run(self, state: int, goal_facts):
        task = self.task
        cost = {}
        supporter = {}
        remaining = list(self.n_pre)
        op_cost = [0] * len(task.operators)
        heap = []
        for f in range(task.n_facts):
            if state >> f & 1:
                heap.append((0, f, -1))
        for k in self.free_ops:
            for f in task.operators[k].add_facts:
                heap.append((1, f, k))
        heapq.heapify(heap)
        pending = set(goal_facts)
        while heap and pending:
            c, f, k = heapq.heappop(heap)
            if f in cost:
                continue
            cost[f] = c
            supporter[f] = k
            pending.discard(f)
            for j in task.pre_of[f]:
                op_cost[j] += c
                remaining[j] -= 1
                if remaining[j] == 0:
                    oc = 1 + op_cost[j]
                    for g in task.operators[j].add_facts:
                        if g not in cost:
                            heapq.heappush(heap, (oc, g, j))
        return cost, supporter


def h_add(task: GroundTask, state: int, exploration: RelaxedExploration = None) -> float:
    """Additive heuristic; ``inf`` when some goal fact is relaxed-unreachable."""
    exploration = exploration or RelaxedExploration(task)
    cost, _ = exploration.run(state, task.goal_facts)
    total = 0
    for g in task.goal_facts:
        if g not in cost:
            return inf
        total += cost[g]
    return float(total)


def h_ff(task: GroundTask, state: int, exploration: RelaxedExploration = None) -> float:
    """Size of the relaxed plan read back from h_add best supporters."""
    exploration = exploration or RelaxedExploration(task)
    cost, supporter = exploration.run(state, task.goal_facts)
    if any(g not in cost for g in task.goal_facts):
        return inf
    plan = set()
    stack = [g for g in task.goal_facts]
    seen = set()
    while stack:
        f = stack.pop()
        if f in seen:
            continue
        seen.add(f)
        k = supporter[f]
        if k < 0 or k in plan:
            continue
        plan.add(k)
        stack.extend(task.operators[k].pre_facts)
    return float(len(plan))
