"""Adapter for planners run as external processes."""
from __future__ import annotations

import os
import re
import shlex
import subprocess
import tempfile
import time

from ..pddl import emit_problem
from .search import PlanResult, Status

DEFAULT_PATTERN = r"Expanded (\d+) state\(s\)"


class ExternalPlannerError(RuntimeError):
    pass


def external_plan(problem, command: str, domain_file, pattern: str = DEFAULT_PATTERN, timeout: float = 600.0) -> PlanResult:
    """Run ``command`` with ``{domain}``/``{problem}`` filled in and parse expansions.

    The result carries no plan: only the expansion count is read back.
    """
    if "{problem}" not in command:
        raise ValueError("command template must contain {problem}")
    with tempfile.TemporaryDirectory(prefix="plangen-") as tmp:
        prob_path = os.path.join(tmp, "problem.pddl")
        with open(prob_path, "w") as f:
            f.write(emit_problem(problem, wrap_goal=True))
        argv = shlex.split(command.format(domain=shlex.quote(str(domain_file)), problem=shlex.quote(prob_path)))
        start = time.perf_counter()
        try:
            proc = subprocess.run(argv, capture_output=True, text=True, timeout=timeout, cwd=tmp)
        except FileNotFoundError as exc:
            raise ExternalPlannerError(f"cannot start planner: {exc}") from exc
        except subprocess.TimeoutExpired as exc:
            raise ExternalPlannerError(f"planner timed out after {timeout}s") from exc
        wall = time.perf_counter() - start
    if proc.returncode != 0:
        raise ExternalPlannerError(f"planner exited with status {proc.returncode}: {proc.stderr.strip()[-500:]}")
    matches = re.findall(pattern, proc.stdout)
    if not matches:
        raise ExternalPlannerError(f"no expansion count matching {pattern!r} in planner output")
    return PlanResult(Status.SOLVED, None, int(matches[-1]), wall)
