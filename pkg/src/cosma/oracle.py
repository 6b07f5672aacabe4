"""Exact combinatorial solver for tiny instances.

Enumerates dependency-respecting schedules jointly with per-timestep
replacement and placement decisions, with branch-and-bound on accumulated
traffic. Serves as the ground-truth optimum the MILP path is tested
against, so exactness beats speed everywhere in this file.

Completeness notes, since several prunings look aggressive:

* Base addresses for newly placed tensors are enumerated over every
  feasible aligned cell, not just hole boundaries. Placements interact
  with future preserves, and optimal packings exist whose base addresses
  touch neither 0 nor the end of any allocated neighbor.
* Dead resident tensors (no unexecuted consumer) are dropped eagerly.
  Keeping one changes no cost term and only shrinks free space, so every
  completion of the keeping branch exists in the dropping branch too.
* Retrieves happen only at a consuming step. A retrieve at a non-consuming
  step can be postponed to the next consumption at equal cost and strictly
  more free space in between.
* A resident tensor relocates (retrieve onto a new address) only when it
  is an input of the current operator and has a host copy. Relocating a
  non-input costs the same as dropping it now and retrieving it at its
  next use, but holds space for longer.
* Only never-spilled tensors are spill candidates: a tensor with a host
  copy is evicted for free by dropping, and a second spill is forbidden
  anyway. Residency of a never-spilled tensor is a create/preserve chain,
  which is exactly what makes its spill legal, so no per-step action
  history is needed in the search state.
"""

from __future__ import annotations

from itertools import combinations

from .errors import Infeasible, TooLarge
from .graph import DataflowGraph, compute_min_budget, compute_windows, enumerate_schedules
from .plan import ExecutionPlan, PlanEvent


def _scaled(g: DataflowGraph, budget: int, alignment: int):
    units = {}
    for tid, t in g.tensors.items():
        if t.size % alignment:
            raise Infeasible(
                f"size of {tid} ({t.size}) not a multiple of alignment {alignment}")
        units[tid] = t.size // alignment
    return units, budget // alignment


class _Search:
    def __init__(self, g: DataflowGraph, budget: int, alignment: int,
                 max_ops: int, max_cells: int, schedule: list | None):
        if len(g.operators) > max_ops:
            raise TooLarge(f"{len(g.operators)} operators exceeds cap {max_ops}")
        m_r = compute_min_budget(g)
        if budget < m_r:
            raise Infeasible(f"budget {budget} < minimum {m_r}")
        self.units, self.budget_u = _scaled(g, budget, alignment)
        if self.budget_u > max_cells:
            raise TooLarge(f"{self.budget_u} address cells exceeds cap {max_cells}")
        self.g = g
        self.budget = budget
        self.alignment = alignment
        self.size_b = {tid: t.size for tid, t in g.tensors.items()}
        self.consumer_ops = {tid: frozenset(g.consumers[tid]) for tid in g.tensors}
        self.t_count = g.timestep_count
        if schedule is None:
            w = compute_windows(g)
            self.candidates = [
                [op.id for op in g.operators
                 if w.asap[op.id] <= t <= w.alap[op.id]]
                for t in range(self.t_count)
            ]
        else:
            self.candidates = [[oid] for oid in schedule]
        self.best_cost: int | None = None
        self.best_events: list | None = None
        self.best_schedule: list | None = None
        self.memo: dict = {}

    # ---------------------------------------------------------------- run

    def run(self):
        self._dfs(0, frozenset(), {}, frozenset(), 0, [], [])
        if self.best_cost is None:
            raise Infeasible("no feasible plan under this budget")
        events = [
            [PlanEvent(tid, action, addr) for tid, action, addr in step]
            for step in self.best_events
        ]
        plan = ExecutionPlan(budget=self.budget, schedule=self.best_schedule,
                             events=events)
        return self.best_cost, plan

    def _lower_bound(self, executed, layout, spilled):
        lb = 0
        for a in spilled:
            if a not in layout and not self.consumer_ops[a] <= executed:
                lb += self.size_b[a]
        return lb

    def _dfs(self, t, executed, layout, spilled, cost, events, schedule):
        if self.best_cost is not None and cost >= self.best_cost:
            return
        live = {a for a in self.g.tensors
                if not self.consumer_ops[a] <= executed and a in spilled}
        if self.best_cost is not None and \
                cost + self._lower_bound(executed, layout, spilled) >= self.best_cost:
            return
        key = (executed, frozenset(layout.items()), frozenset(live))
        prev = self.memo.get(key)
        if prev is not None and prev <= cost:
            return
        self.memo[key] = cost
        if t == self.t_count:
            self.best_cost = cost
            self.best_events = [list(step) for step in events]
            self.best_schedule = list(schedule)
            return

        for oid in self.candidates[t]:
            if oid in executed:
                continue
            op = self.g.op_index[oid]
            if not set(self.g.op_preds[oid]) <= executed:
                continue
            self._step(t, op, executed, layout, spilled, cost, events, schedule)

    # ------------------------------------------------------------- one step

    def _step(self, t, op, executed, layout, spilled, cost, events, schedule):
        inputs = list(dict.fromkeys(op.inputs))
        outputs = list(op.outputs)

        dead = [a for a in layout
                if self.consumer_ops[a] <= executed]
        base_kept = {a: addr for a, addr in layout.items() if a not in dead}
        absent = [a for a in inputs if a not in base_kept]
        # search-state invariant: a live tensor is resident or has a host copy
        assert all(a in spilled for a in absent)

        evictable = sorted(a for a in base_kept if a not in inputs)
        movable = sorted(a for a in inputs if a in base_kept and a in spilled)

        for n_evict in range(len(evictable) + 1):
            for evict in combinations(evictable, n_evict):
                evict_cost = sum(self.size_b[a] for a in evict if a not in spilled)
                for n_move in range(len(movable) + 1):
                    for moved in combinations(movable, n_move):
                        kept = {a: addr for a, addr in base_kept.items()
                                if a not in evict and a not in moved}
                        fresh = outputs + absent + list(moved)
                        used = sum(self.units[a] for a in kept)
                        need = sum(self.units[a] for a in fresh)
                        if used + need > self.budget_u:
                            continue
                        step_cost = (evict_cost
                                     + sum(self.size_b[a] for a in absent)
                                     + sum(self.size_b[a] for a in moved))
                        if self.best_cost is not None and \
                                cost + step_cost >= self.best_cost:
                            continue
                        self._place(t, op, executed, spilled, cost + step_cost,
                                    events, schedule, dead, evict, moved,
                                    kept, fresh, absent)

    def _place(self, t, op, executed, spilled, cost, events, schedule,
               dead, evict, moved, kept, fresh, absent):
        occupied = sorted((addr, addr + self.units[a]) for a, addr in kept.items())

        def cells(size, placed):
            spans = sorted(occupied + [(ad, ad + self.units[x]) for x, ad in placed])
            out = []
            for base in range(self.budget_u - size + 1):
                end = base + size
                if all(e <= base or end <= s for s, e in spans):
                    out.append(base)
            return out

        def assign(idx, placed):
            if idx == len(fresh):
                self._commit(t, op, executed, spilled, cost, events, schedule,
                             dead, evict, moved, kept, dict(placed), absent)
                return
            a = fresh[idx]
            for base in cells(self.units[a], placed):
                placed.append((a, base))
                assign(idx + 1, placed)
                placed.pop()

        assign(0, [])

    def _commit(self, t, op, executed, spilled, cost, events, schedule,
                dead, evict, moved, kept, placed, absent):
        al = self.alignment
        step = []
        for a in op.outputs:
            step.append((a, "create", placed[a] * al))
        for a in absent:
            step.append((a, "retrieve", placed[a] * al))
        for a in moved:
            step.append((a, "retrieve", placed[a] * al))
        for a in sorted(kept):
            step.append((a, "preserve", kept[a] * al))
        for a in evict:
            step.append((a, "spill" if a not in spilled else "drop", None))
        for a in sorted(dead):
            step.append((a, "drop", None))

        new_layout = dict(kept)
        for a, base in placed.items():
            new_layout[a] = base
        new_spilled = spilled | {a for a in evict if a not in spilled}
        events.append(step)
        schedule.append(op.id)
        self._dfs(t + 1, executed | {op.id}, new_layout, new_spilled,
                  cost, events, schedule)
        schedule.pop()
        events.pop()


# ---------------------------------------------------------------- fronts

def oracle_min_access(g: DataflowGraph, budget: int, alignment: int = 1,
                      max_ops: int = 8, max_cells: int = 64):
    """Exact minimum spill/retrieve bytes and one optimal plan."""
    return _Search(g, budget, alignment, max_ops, max_cells, None).run()


def oracle_fixed_schedule(g: DataflowGraph, budget: int, schedule: list,
                          alignment: int = 1, max_ops: int = 8,
                          max_cells: int = 64):
    """Exact optimum when the operator order is pinned."""
    return _Search(g, budget, alignment, max_ops, max_cells, list(schedule)).run()


def schedule_peak(g: DataflowGraph, schedule: list) -> int:
    """Peak resident bytes for one schedule with keep-until-last-use
    residency and immediate deallocation afterwards."""
    order = {oid: t for t, oid in enumerate(schedule)}
    peak = 0
    for t in range(len(schedule)):
        tot = 0
        for tid in g.tensors:
            first = order[g.producer[tid]]
            uses = [order[c] for c in g.consumers[tid]]
            last = max(uses) if uses else first
            if first <= t <= last:
                tot += g.size(tid)
        peak = max(peak, tot)
    return peak


def oracle_mpmf(g: DataflowGraph, max_ops: int = 8, limit: int = 2_000_000):
    """Exact minimum-peak footprint over every dependency-respecting
    schedule, with one witness plan laid out on disjoint static offsets."""
    if len(g.operators) > max_ops:
        raise TooLarge(f"{len(g.operators)} operators exceeds cap {max_ops}")
    best_peak = None
    best_schedule = None
    for schedule in enumerate_schedules(g, limit=limit):
        peak = schedule_peak(g, schedule)
        if best_peak is None or peak < best_peak:
            best_peak, best_schedule = peak, list(schedule)
    if best_peak is None:
        raise Infeasible("graph admits no schedule")

    offs, acc = {}, 0
    for tid in g.tensors:
        offs[tid] = acc
        acc += g.size(tid)
    order = {oid: t for t, oid in enumerate(best_schedule)}
    events = []
    resident_prev: set = set()
    for t, oid in enumerate(best_schedule):
        step = []
        resident_now = set()
        for tid in g.tensors:
            first = order[g.producer[tid]]
            uses = [order[c] for c in g.consumers[tid]]
            last = max(uses) if uses else first
            if t == first:
                step.append(PlanEvent(tid, "create", offs[tid]))
                resident_now.add(tid)
            elif first < t <= last:
                step.append(PlanEvent(tid, "preserve", offs[tid]))
                resident_now.add(tid)
            elif tid in resident_prev:
                step.append(PlanEvent(tid, "drop"))
        events.append(step)
        resident_prev = resident_now
    plan = ExecutionPlan(budget=acc, schedule=best_schedule, events=events)
    return best_peak, plan
