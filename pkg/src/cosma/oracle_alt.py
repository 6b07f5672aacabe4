"""Second exact solver, coded independently of oracle.py for cross-checks.

Strategy differs on purpose: outer loop enumerates complete schedules,
inner pass is a layered dynamic program over timesteps whose states are
(residency layout, host-copy set). No branch-and-bound, no lower bounds,
no memo sharing across schedules; address candidates are tried from the
top of the arena downward. Costs must nevertheless agree exactly with
oracle.py on every instance both can handle.
"""

from __future__ import annotations

from .errors import Infeasible, TooLarge
from .graph import DataflowGraph, compute_min_budget, enumerate_schedules


def _actions(g, op, state, units, size_b, budget_u, executed):
    """Yield (next_state, step_cost) for executing op from state."""
    layout, host = state
    layout = dict(layout)
    inputs = list(dict.fromkeys(op.inputs))

    alive_after = {a for a in g.tensors
                   if any(c not in executed and c != op.id for c in g.consumers[a])}
    resident = {a: ad for a, ad in layout.items()
                if a in alive_after or a in inputs}

    absent = [a for a in inputs if a not in resident]
    if any(a not in host for a in absent):
        return
    stay = [a for a in sorted(resident) if a not in inputs]
    here = [a for a in sorted(resident) if a in inputs]

    def evictions(idx, kept, cost, spilled_now):
        if idx == len(stay):
            yield kept, cost, spilled_now
            return
        a = stay[idx]
        if a in host:
            yield from evictions(idx + 1, kept, cost, spilled_now)  # drop, free
        else:
            yield from evictions(idx + 1, kept, cost + size_b[a], spilled_now | {a})
        yield from evictions(idx + 1, {**kept, a: resident[a]}, cost, spilled_now)

    def moves(idx, pinned, floating, cost):
        if idx == len(here):
            yield pinned, floating, cost
            return
        a = here[idx]
        yield from moves(idx + 1, {**pinned, a: resident[a]}, floating, cost)
        if a in host:
            yield from moves(idx + 1, pinned, floating + [a], cost + size_b[a])

    for kept, cost1, spilled_now in evictions(0, {}, 0, frozenset()):
        for pinned, floating, cost2 in moves(0, {}, [], 0):
            fixed = {**kept, **pinned}
            fresh = list(op.outputs) + absent + floating
            if sum(units[a] for a in fixed) + sum(units[a] for a in fresh) > budget_u:
                continue
            cost3 = cost1 + cost2 + sum(size_b[a] for a in absent)
            for placement in _packings(fixed, fresh, units, budget_u):
                final = {a: ad for a, ad in placement.items() if a in alive_after}
                yield (frozenset(final.items()), host | spilled_now), cost3


def _packings(fixed, fresh, units, budget_u):
    taken = sorted((ad, ad + units[a]) for a, ad in fixed.items())

    def rec(idx, placed):
        if idx == len(fresh):
            yield {**fixed, **dict(placed)}
            return
        a = fresh[idx]
        size = units[a]
        spans = taken + sorted((ad, ad + units[x]) for x, ad in placed)
        for base in range(budget_u - size, -1, -1):
            if all(e <= base or base + size <= s for s, e in spans):
                yield from rec(idx + 1, placed + [(a, base)])

    yield from rec(0, [])


def alt_min_access(g: DataflowGraph, budget: int, alignment: int = 1,
                   max_ops: int = 8, max_cells: int = 64,
                   schedule_limit: int = 500_000) -> int:
    """Exact minimum spill/retrieve bytes; objective only, no plan."""
    if len(g.operators) > max_ops:
        raise TooLarge(f"{len(g.operators)} operators exceeds cap {max_ops}")
    m_r = compute_min_budget(g)
    if budget < m_r:
        raise Infeasible(f"budget {budget} < minimum {m_r}")
    units = {}
    for tid, t in g.tensors.items():
        if t.size % alignment:
            raise Infeasible(f"size of {tid} not aligned to {alignment}")
        units[tid] = t.size // alignment
    budget_u = budget // alignment
    if budget_u > max_cells:
        raise TooLarge(f"{budget_u} cells exceeds cap {max_cells}")
    size_b = {tid: t.size for tid, t in g.tensors.items()}

    best = None
    for schedule in enumerate_schedules(g, limit=schedule_limit):
        layer = {(frozenset(), frozenset()): 0}
        executed: set = set()
        for oid in schedule:
            op = g.op_index[oid]
            nxt: dict = {}
            for state, cost in layer.items():
                if best is not None and cost >= best:
                    continue
                for nstate, delta in _actions(g, op, state, units, size_b,
                                              budget_u, executed):
                    total = cost + delta
                    if best is not None and total >= best:
                        continue
                    if nstate not in nxt or nxt[nstate] > total:
                        nxt[nstate] = total
            executed.add(oid)
            layer = nxt
            if not layer:
                break
        if layer:
            low = min(layer.values())
            if best is None or low < best:
                best = low
    if best is None:
        raise Infeasible("no feasible plan under this budget")
    return best
