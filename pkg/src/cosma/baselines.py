"""Comparison schemes: fixed schedules, an online first-fit arena
allocator, and Belady / greedy tensor replacement.

All schemes run through one timestep simulation (run_baseline) that emits
a normal ExecutionPlan, so results are checked by the same independent
validator as solver plans. Replacement semantics mirror the planner's
cost model: evicting a tensor that has a host copy (it was spilled
before) is free, evicting a live tensor without one writes it back and
is charged, and a tensor is never written back twice.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

from .errors import InvalidParams, NoSpace, Stuck
from .graph import DataflowGraph, compute_min_budget, compute_windows
from .plan import ExecutionPlan, PlanEvent

log = logging.getLogger(__name__)

GREEDY_CAP = 20


@dataclass(frozen=True)
class ReplacementPolicy:
    kind: str  # "belady" | "greedy"

    def __post_init__(self):
        if self.kind not in ("belady", "greedy"):
            raise InvalidParams(f"unknown replacement policy {self.kind!r}")


@dataclass
class AllocatorState:
    budget: int
    live: dict = field(default_factory=dict)  # tensor -> (base, size)

    def holes(self):
        spans = sorted(self.live.values())
        out = []
        cur = 0
        for base, size in spans:
            if base > cur:
                out.append((cur, base))
            cur = max(cur, base + size)
        if cur < self.budget:
            out.append((cur, self.budget))
        return out

    def free_bytes(self):
        return self.budget - sum(s for _, s in self.live.values())


def linear_allocate(state: AllocatorState, tensor: str, size: int) -> int:
    """First fit at the lowest feasible base address."""
    for lo, hi in state.holes():
        if hi - lo >= size:
            state.live[tensor] = (lo, size)
            return lo
    raise NoSpace(f"no hole of {size} for {tensor}")


def default_schedule(g: DataflowGraph) -> list:
    return [op.id for op in g.operators]


def mpmf_schedule(g: DataflowGraph, solver_cfg=None) -> list:
    """Operator order with the smallest peak resident footprint."""
    from .encode import Mpmf, decode
    from .solvers import SolverConfig, solve

    cfg = solver_cfg if solver_cfg is not None else SolverConfig()
    w = compute_windows(g)
    res = solve(g, w, Mpmf(), cfg)
    plan = decode(g, w, Mpmf(), res.assignment)
    return list(plan.schedule)


# ---------------------------------------------------------------- running

def _next_use(tid, consumers_pos, t):
    future = [p for p in consumers_pos.get(tid, ()) if p > t]
    return min(future) if future else None


def run_baseline(g: DataflowGraph, schedule: list, budget: int,
                 policy: ReplacementPolicy) -> ExecutionPlan:
    plan, _ = run_baseline_with_cost(g, schedule, budget, policy)
    return plan


def run_baseline_with_cost(g: DataflowGraph, schedule: list, budget: int,
                           policy: ReplacementPolicy):
    """Simulate the fixed schedule; returns (plan, charged bytes).

    Per timestep: free tensors whose last use has passed, retrieve absent
    inputs, allocate outputs; on NoSpace the policy evicts resident
    tensors that are not operands of the running operator until the
    pending allocation fits.
    """
    m_r = compute_min_budget(g)
    if budget < m_r:
        raise InvalidParams(f"budget {budget} < minimum {m_r}")
    if sorted(schedule) != sorted(g.op_index):
        raise InvalidParams("schedule is not a permutation of the operators")

    pos = {oid: t for t, oid in enumerate(schedule)}
    consumers_pos = {
        tid: sorted(pos[c] for c in g.consumers[tid]) for tid in g.tensors
    }
    last_use = {
        tid: (consumers_pos[tid][-1] if consumers_pos[tid]
              else pos[g.producer[tid]])
        for tid in g.tensors
    }

    state = AllocatorState(budget=budget)
    host: set = set()       # tensors with a host copy (spilled earlier)
    charged = 0
    events: list = []

    for t, oid in enumerate(schedule):
        op = g.op_index[oid]
        step: list = []
        operands = set(dict.fromkeys(op.inputs)) | set(op.outputs)

        # eager free of tensors dead by now
        for tid in sorted(state.live):
            if last_use[tid] < t:
                del state.live[tid]
                step.append(PlanEvent(tid, "drop"))

        def evict_for(size, step=step, t=t):
            nonlocal charged
            evictable = [tid for tid in state.live if tid not in operands]
            if policy.kind == "greedy":
                victims = _greedy_victims(state, evictable, size, host,
                                          g, consumers_pos, t)
            else:
                victims = _belady_victims(state, evictable, size, g,
                                          consumers_pos, t)
            for tid in victims:
                del state.live[tid]
                if tid in host:
                    step.append(PlanEvent(tid, "drop"))
                else:
                    host.add(tid)
                    charged += g.size(tid)
                    step.append(PlanEvent(tid, "spill"))

        def place(tid, step=step):
            nonlocal charged
            size = g.size(tid)
            try:
                return linear_allocate(state, tid, size)
            except NoSpace:
                evict_for(size)
                return linear_allocate(state, tid, size)

        for tid in dict.fromkeys(op.inputs):
            if tid in state.live:
                step.append(PlanEvent(tid, "preserve", state.live[tid][0]))
            else:
                base = place(tid)
                charged += g.size(tid)
                step.append(PlanEvent(tid, "retrieve", base))
        for tid in op.outputs:
            base = place(tid)
            step.append(PlanEvent(tid, "create", base))
        for tid in sorted(state.live):
            if tid not in operands and all(e.tensor != tid for e in step):
                step.append(PlanEvent(tid, "preserve", state.live[tid][0]))
        events.append(step)

    plan = ExecutionPlan(budget=budget, schedule=list(schedule), events=events)
    return plan, charged


def _fits_after(state: AllocatorState, removed, size) -> bool:
    spans = sorted(v for k, v in state.live.items() if k not in removed)
    cur = 0
    for base, sz in spans:
        if base - cur >= size:
            return True
        cur = max(cur, base + sz)
    return state.budget - cur >= size


def _belady_victims(state, evictable, size, g, consumers_pos, t):
    """Evict the tensor used furthest in the future, repeatedly, until a
    hole fits. Ties: larger size first, then id."""
    chosen: list = []
    remaining = list(evictable)
    while not _fits_after(state, set(chosen), size):
        if not remaining:
            raise Stuck(f"t={t}: no eviction frees a hole of {size}")
        remaining.sort(
            key=lambda tid: (
                -(len(consumers_pos[tid]) and 0),  # placeholder, replaced below
            ))
        def rank(tid):
            nxt = _next_use(tid, consumers_pos, t)
            return (-(nxt if nxt is not None else float("inf")),
                    -g.size(tid), tid)
        remaining.sort(key=rank)
        chosen.append(remaining.pop(0))
    return chosen


def _greedy_victims(state, evictable, size, host, g, consumers_pos, t):
    """Exact subset search: cheapest eviction set (write-back now plus
    later re-reads of evicted live tensors) that opens a fitting hole."""
    if len(evictable) > GREEDY_CAP:
        log.warning("greedy victim search over %d tensors capped; "
                    "falling back to furthest-next-use", len(evictable))
        return _belady_victims(state, evictable, size, g, consumers_pos, t)

    def cost_of(tid):
        write = 0 if tid in host else g.size(tid)
        reread = g.size(tid) if _next_use(tid, consumers_pos, t) is not None else 0
        return write + reread

    order = sorted(evictable)
    best: tuple | None = None

    def search(idx, subset, cost):
        nonlocal best
        if best is not None and (cost, len(subset)) >= best[:2]:
            return
        if _fits_after(state, set(subset), size):
            cand = (cost, len(subset), tuple(subset))
            if best is None or cand < best:
                best = cand
            return
        if idx == len(order):
            return
        search(idx + 1, subset + [order[idx]], cost + cost_of(order[idx]))
        search(idx + 1, subset, cost)

    search(0, [], 0)
    if best is None:
        raise Stuck(f"t={t}: no eviction frees a hole of {size}")
    return list(best[2])
