"""Solver backends: external subprocess bridge and the internal exact search.

The external path is solver-agnostic: write an LP file, run a user-supplied
command with {lp} and {sol} placeholders, parse the solution file, then
re-verify every constraint and recompute the objective. Nothing a solver
claims is trusted without that check.

The internal path wraps the exact searches in oracle.py and answers in the
same SolveResult shape, with the assignment expressed over the encoder's
variables.
"""

from __future__ import annotations

import os
import shlex
import subprocess
import tempfile
import time
from dataclasses import dataclass
from pathlib import Path

from .encode import MilpInstance, Mpmf, FixedSchedule, MinAccess, assignment_from_plan, encode
from .errors import InvalidParams, SolverError, SolverTimeout
from .graph import DataflowGraph, TimestepWindows
from .lp import SolveResult, read_solution, write_lp
from .oracle import oracle_fixed_schedule, oracle_min_access, oracle_mpmf

ENV_SOLVER_CMD = "COSMA_SOLVER_CMD"


@dataclass
class SolverConfig:
    backend: str = "internal"            # "external" | "internal"
    command_template: str = ""
    time_limit: float = 60.0
    tolerance: float = 1e-6
    max_ops: int = 8
    max_cells: int = 64

    def __post_init__(self):
        if self.backend not in ("external", "internal"):
            raise InvalidParams(f"unknown backend {self.backend!r}")
        if self.backend == "external":
            if "{lp}" not in self.command_template or "{sol}" not in self.command_template:
                raise InvalidParams(
                    "external backend needs a command template with {lp} and {sol}")

    @staticmethod
    def from_env(env=None) -> "SolverConfig | None":
        env = os.environ if env is None else env
        cmd = env.get(ENV_SOLVER_CMD, "").strip()
        if not cmd:
            return None
        return SolverConfig(backend="external", command_template=cmd)


def verify_assignment(m: MilpInstance, assignment: dict, tolerance: float) -> None:
    """Raise SolverError naming the first violated constraint."""
    for i, con in enumerate(m.constraints):
        lhs = sum(c * assignment.get(n, 0) for n, c in con.terms.items())
        if con.sense == "<=":
            gap = lhs - con.rhs
        elif con.sense == ">=":
            gap = con.rhs - lhs
        else:
            gap = abs(lhs - con.rhs)
        if gap > tolerance:
            raise SolverError(f"solution violates c{i} ({con.name}) by {gap}")


def solve_external(m: MilpInstance, cfg: SolverConfig) -> SolveResult:
    if cfg.backend != "external":
        raise InvalidParams("solve_external requires an external backend config")
    started = time.perf_counter()
    with tempfile.TemporaryDirectory(prefix="cosma_") as tmp:
        lp_path = Path(tmp) / "problem.lp"
        sol_path = Path(tmp) / "solution.txt"
        with open(lp_path, "wb") as fh:
            write_lp(m, fh)
        cmd = [tok.replace("{lp}", str(lp_path)).replace("{sol}", str(sol_path))
               for tok in shlex.split(cfg.command_template)]
        try:
            proc = subprocess.run(cmd, capture_output=True, timeout=cfg.time_limit)
        except subprocess.TimeoutExpired:
            raise SolverTimeout(
                f"solver exceeded {cfg.time_limit}s: {' '.join(cmd)}") from None
        if not sol_path.exists():
            tail = proc.stderr.decode("utf-8", "replace")[-500:]
            raise SolverError(
                f"solver exited {proc.returncode} without a solution file: {tail}")
        with open(sol_path, "rb") as fh:
            result = read_solution(fh, m, tolerance=cfg.tolerance)
    result.solve_seconds = time.perf_counter() - started
    if result.status == "timeout":
        raise SolverTimeout("solver reported a time limit")
    if result.status in ("infeasible", "error"):
        return result
    verify_assignment(m, result.assignment, cfg.tolerance)
    result.objective = round(m.evaluate_objective(result.assignment))
    return result


def solve_internal(g: DataflowGraph, w: TimestepWindows, mode,
                   cfg: SolverConfig, alignment: int = 1,
                   instance: MilpInstance | None = None) -> SolveResult:
    started = time.perf_counter()
    if isinstance(mode, Mpmf):
        objective, plan = oracle_mpmf(g, max_ops=cfg.max_ops)
    elif isinstance(mode, FixedSchedule):
        schedule = sorted(mode.order, key=mode.order.get)
        objective, plan = oracle_fixed_schedule(
            g, mode.budget, schedule, alignment=alignment,
            max_ops=cfg.max_ops, max_cells=cfg.max_cells)
    elif isinstance(mode, MinAccess):
        objective, plan = oracle_min_access(
            g, mode.budget, alignment=alignment,
            max_ops=cfg.max_ops, max_cells=cfg.max_cells)
    else:
        raise InvalidParams(f"unknown mode {mode!r}")
    inst = instance if instance is not None else encode(g, w, mode, alignment)
    assignment = assignment_from_plan(inst, g, plan)
    verify_assignment(inst, assignment, cfg.tolerance)
    encoded_obj = round(inst.evaluate_objective(assignment))
    if encoded_obj != objective:
        raise SolverError(
            f"internal solver objective {objective} disagrees with its own "
            f"assignment ({encoded_obj})")
    return SolveResult(status="optimal", objective=objective,
                       assignment=assignment,
                       solve_seconds=time.perf_counter() - started)


def solve(g: DataflowGraph, w: TimestepWindows, mode, cfg: SolverConfig,
          alignment: int = 1, instance: MilpInstance | None = None) -> SolveResult:
    if cfg.backend == "external":
        inst = instance if instance is not None else encode(g, w, mode, alignment)
        return solve_external(inst, cfg)
    return solve_internal(g, w, mode, cfg, alignment=alignment, instance=instance)
