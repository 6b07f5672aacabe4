"""MILP construction for scratchpad planning, and decoding solutions back
into execution plans.

Three modes share one variable vocabulary per (tensor, timestep):

    C  create       producer runs at t
    P  preserve     stays resident, same address
    S  spill        written to host, at most once per tensor
    R  retrieve     read back after a spill
    L  base address (integer, address units)
    V  persistence  marks "resident at t-1 and preserved at t"
    u/d order bits  relative placement of an overlapping pair

Residency at t is C+P+R. Variables exist only inside the tensor's
liveness window, everything outside is identically zero and never
materialized. Modes:

    MinAccess      joint schedule + allocation + replacement; minimizes
                   spill/retrieve traffic under a byte budget
    Mpmf           schedule only, no spills allowed; minimizes the peak
                   resident footprint (variable Mpeak)
    FixedSchedule  like MinAccess but the operator order is given, so all
                   C values are folded in as constants

Addresses can be coarsened: with alignment k, sizes and the budget are
divided by k before encoding and every size must divide evenly.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

from .errors import (
    BudgetTooSmall,
    DuplicateId,
    InconsistentAssignment,
    InvalidOrder,
    InvalidParams,
    NonIntegralSolution,
)
from .graph import DataflowGraph, TimestepWindows
from .plan import ExecutionPlan, PlanEvent, validate


# ---------------------------------------------------------------- modes

@dataclass(frozen=True)
class MinAccess:
    budget: int


@dataclass(frozen=True)
class Mpmf:
    pass


@dataclass(frozen=True)
class FixedSchedule:
    budget: int
    order: dict  # operator id -> timestep


def _mode_name(mode) -> str:
    return type(mode).__name__


# ---------------------------------------------------------------- instance

@dataclass(frozen=True)
class VarDef:
    name: str
    lo: int
    hi: int
    binary: bool


@dataclass(frozen=True)
class Constraint:
    name: str
    terms: dict  # var name -> int coefficient
    sense: str   # "<=", ">=", "="
    rhs: int


@dataclass
class MilpInstance:
    mode: str
    graph_name: str
    budget: int | None
    alignment: int
    variables: dict         # name -> VarDef, creation order
    objective: dict         # name -> int coefficient (minimize)
    constraints: list       # of Constraint
    key_of: dict            # name -> structured key tuple
    name_of: dict           # key tuple -> name
    # decode support
    schedule_const: list | None   # FixedSchedule operator order, else None
    tensor_window: dict           # tensor -> (first, last) as encoded
    size_units: dict
    budget_units: int | None

    def var(self, *key) -> str | None:
        return self.name_of.get(tuple(key))

    def evaluate_objective(self, assignment: dict) -> float:
        return sum(c * assignment.get(n, 0) for n, c in self.objective.items())

    def violations(self, assignment: dict, tol: float = 1e-6) -> list:
        """(constraint name, slack) for every constraint broken by > tol."""
        out = []
        for con in self.constraints:
            lhs = sum(c * assignment.get(n, 0) for n, c in con.terms.items())
            if con.sense == "<=":
                gap = lhs - con.rhs
            elif con.sense == ">=":
                gap = con.rhs - lhs
            else:
                gap = abs(lhs - con.rhs)
            if gap > tol:
                out.append((con.name, gap))
        return out


def instance_stats(m: MilpInstance) -> tuple:
    return (len(m.variables), len(m.constraints))


# ---------------------------------------------------------------- naming

_SANITIZE = re.compile(r"[^A-Za-z0-9_]")


def sanitize_ids(ids) -> dict:
    """Map raw ids to names restricted to [A-Za-z0-9_]; reject collisions."""
    out: dict = {}
    taken: dict = {}
    for raw in ids:
        clean = _SANITIZE.sub("_", raw)
        if clean in taken and taken[clean] != raw:
            raise DuplicateId(f"ids {taken[clean]!r} and {raw!r} collide as {clean!r}")
        taken[clean] = raw
        out[raw] = clean
    return out


# ---------------------------------------------------------------- builder

class _Builder:
    def __init__(self):
        self.variables: dict = {}
        self.key_of: dict = {}
        self.name_of: dict = {}
        self.constraints: list = []
        self.objective: dict = {}

    def add_var(self, key, name, lo, hi, binary):
        self.variables[name] = VarDef(name, lo, hi, binary)
        self.key_of[name] = tuple(key)
        self.name_of[tuple(key)] = name
        return name

    def row(self, name, terms, sense, rhs, min_vars=1):
        """Add a constraint from (coef, var-name-or-None) pairs.

        None entries are pruned (a variable fixed at zero); integer entries
        are constants folded into the rhs. Rows that end up with fewer than
        min_vars variables are emitted only if they could still bind.
        """
        coeffs: dict = {}
        acc = rhs
        for coef, sym in terms:
            if sym is None:
                continue
            if isinstance(sym, int):
                acc -= coef * sym
                continue
            coeffs[sym] = coeffs.get(sym, 0) + coef
        coeffs = {n: c for n, c in coeffs.items() if c != 0}
        if not coeffs:
            # all variable terms vanished; the row is a constant statement
            if (sense == "<=" and 0 > acc) or (sense == ">=" and 0 < acc) \
                    or (sense == "=" and acc != 0):
                raise InconsistentAssignment(f"constraint {name} is constant-false")
            return
        if len(coeffs) < min_vars:
            # single-variable row: keep only if it can actually bind
            if sense == "<=":
                ub = sum(max(c * self._lo(n), c * self._hi(n)) for n, c in coeffs.items())
                if ub <= acc:
                    return
            elif sense == ">=":
                lb = sum(min(c * self._lo(n), c * self._hi(n)) for n, c in coeffs.items())
                if lb >= acc:
                    return
        self.constraints.append(Constraint(name, coeffs, sense, acc))

    def _lo(self, n):
        return self.variables[n].lo

    def _hi(self, n):
        return self.variables[n].hi


# ---------------------------------------------------------------- encode

def _scaled_sizes(g: DataflowGraph, alignment: int) -> dict:
    if alignment < 1:
        raise InvalidParams(f"alignment must be >= 1, got {alignment}")
    units = {}
    for tid, t in g.tensors.items():
        if t.size % alignment:
            raise BudgetTooSmall(
                f"size of {tid} ({t.size}) is not a multiple of alignment {alignment}")
        units[tid] = t.size // alignment
    return units


def _fixed_windows(g: DataflowGraph, order: dict) -> TimestepWindows:
    """Exact per-tensor windows once the operator order is pinned."""
    ops = set(g.op_index)
    if set(order) != ops or sorted(order.values()) != list(range(len(ops))):
        raise InvalidOrder("order must map every operator onto 0..T-1 exactly once")
    for op in g.operators:
        for dep in g.op_preds[op.id]:
            if order[dep] >= order[op.id]:
                raise InvalidOrder(f"{op.id} ordered before its producer {dep}")
    asap = dict(order)
    alap = dict(order)
    window = {}
    for tid in g.tensors:
        first = order[g.producer[tid]]
        uses = [order[c] for c in g.consumers[tid]]
        last = max(uses) if uses else first
        window[tid] = (first, last)
    pairs = []
    ids = sorted(g.tensors)
    for i, a in enumerate(ids):
        for b in ids[i + 1:]:
            if window[a][0] <= window[b][1] and window[b][0] <= window[a][1]:
                pairs.append((a, b))
    return TimestepWindows(asap=asap, alap=alap, tensor_window=window,
                           overlap_pairs=tuple(pairs))


def encode(g: DataflowGraph, w: TimestepWindows, mode,
           alignment: int = 1) -> MilpInstance:
    """Build the MILP for the given mode. Pure; deterministic output."""
    from .graph import compute_min_budget

    t_count = g.timestep_count
    m_r = compute_min_budget(g)
    size_b = {tid: t.size for tid, t in g.tensors.items()}

    fixed = isinstance(mode, FixedSchedule)
    alloc = fixed or isinstance(mode, MinAccess)
    if alloc:
        if mode.budget < m_r:
            raise BudgetTooSmall(f"budget {mode.budget} < minimum {m_r}")
        size_u = _scaled_sizes(g, alignment)
        budget_u = mode.budget // alignment
    else:
        size_u = dict(size_b)
        budget_u = None

    if fixed:
        w = _fixed_windows(g, mode.order)
    win = w.tensor_window

    names = sanitize_ids(list(g.tensors))
    b = _Builder()

    def cwin(a):
        p = g.producer[a]
        return (w.asap[p], w.alap[p])

    # --- variables, tensor-major then timestep
    for a in g.tensors:
        first, last = win[a]
        clo, chi = cwin(a)
        for t in range(clo, chi + 1):
            if not fixed:
                b.add_var(("C", a, t), f"C_{names[a]}_{t}", 0, 1, True)
        for t in range(first + 1, last + 1):
            b.add_var(("P", a, t), f"P_{names[a]}_{t}", 0, 1, True)
        if alloc:
            for t in range(first + 1, last + 1):
                b.add_var(("S", a, t), f"S_{names[a]}_{t}", 0, 1, True)
            for t in range(first + 2, last + 1):
                b.add_var(("R", a, t), f"R_{names[a]}_{t}", 0, 1, True)
            for t in range(first, last + 1):
                b.add_var(("L", a, t), f"L_{names[a]}_{t}", 0, budget_u, False)
            for t in range(first + 1, last + 1):
                b.add_var(("V", a, t), f"V_{names[a]}_{t}", 0, 1, True)
    if alloc:
        for a, bb in w.overlap_pairs:
            lo = max(win[a][0], win[bb][0])
            hi = min(win[a][1], win[bb][1])
            for t in range(lo, hi + 1):
                b.add_var(("u", a, bb, t), f"u_{names[a]}__{names[bb]}_{t}", 0, 1, True)
                b.add_var(("d", a, bb, t), f"d_{names[a]}__{names[bb]}_{t}", 0, 1, True)
    if isinstance(mode, Mpmf):
        total = sum(size_b.values())
        b.add_var(("Mpeak",), "Mpeak", m_r, total, False)

    def C(a, t):
        if fixed:
            return 1 if w.asap[g.producer[a]] == t else 0
        return b.name_of.get(("C", a, t))

    def V_(kind, a, t):
        return b.name_of.get((kind, a, t))

    def res_terms(a, t, sign=1):
        return [(sign, C(a, t)), (sign, V_("P", a, t)),
                (sign, V_("R", a, t) if alloc else None)]

    # --- single action per tensor-timestep
    for a in g.tensors:
        first, last = win[a]
        clo, chi = cwin(a)
        for t in range(first, last + 1):
            terms = [(1, C(a, t)) if clo <= t <= chi else (1, None),
                     (1, V_("P", a, t))]
            if alloc:
                terms += [(1, V_("S", a, t)), (1, V_("R", a, t))]
            b.row(f"single_action[{a},{t}]", terms, "<=", 1, min_vars=2)

    # --- preserve continues residency; spill leaves a resident tensor
    for a in g.tensors:
        first, last = win[a]
        for t in range(first + 1, last + 1):
            p = V_("P", a, t)
            if p is not None:
                b.row(f"preserve_chain[{a},{t}]",
                      [(1, p)] + res_terms(a, t - 1, -1), "<=", 0)
            if alloc:
                s = V_("S", a, t)
                if s is not None:
                    b.row(f"spill_chain[{a},{t}]",
                          [(1, s), (-1, C(a, t - 1)), (-1, V_("P", a, t - 1))],
                          "<=", 0)
                r = V_("R", a, t)
                if r is not None:
                    b.row(f"retrieve_after_spill[{a},{t}]",
                          [(1, r)] + [(-1, V_("S", a, k))
                                      for k in range(first + 1, t + 1)],
                          "<=", 0)

    # --- consuming operator needs its inputs resident
    for op in g.operators:
        ins = list(dict.fromkeys(op.inputs))
        if not ins:
            continue
        for a in op.outputs:
            clo, chi = cwin(a)
            for t in range(clo, chi + 1):
                for inp in ins:
                    b.row(f"dep[{a},{inp},{t}]",
                          [(1, C(a, t)), (-1, V_("P", inp, t)),
                           (-1, V_("R", inp, t) if alloc else None)],
                          "<=", 0)

    # --- sibling outputs appear together
    for op in g.operators:
        if len(op.outputs) > 1:
            lead = op.outputs[0]
            clo, chi = cwin(lead)
            for sib in op.outputs[1:]:
                for t in range(clo, chi + 1):
                    b.row(f"siblings[{lead},{sib},{t}]",
                          [(1, C(lead, t)), (-1, C(sib, t))], "=", 0)

    # --- every tensor created exactly once; spilled at most once
    for a in g.tensors:
        clo, chi = cwin(a)
        b.row(f"create_once[{a}]",
              [(1, C(a, t)) for t in range(clo, chi + 1)], "=", 1)
        if alloc:
            first, last = win[a]
            b.row(f"spill_once[{a}]",
                  [(1, V_("S", a, t)) for t in range(first + 1, last + 1)],
                  "<=", 1, min_vars=2)

    # --- one operator per timestep, via each operator's first output
    if not fixed:
        for t in range(t_count):
            terms = []
            for op in g.operators:
                lead = op.outputs[0]
                clo, chi = cwin(lead)
                if clo <= t <= chi:
                    terms.append((1, C(lead, t)))
            b.row(f"one_op[{t}]", terms, "=", 1, min_vars=0)

    # --- allocation geometry
    if alloc:
        big_m = budget_u
        for a in g.tensors:
            first, last = win[a]
            for t in range(first, last + 1):
                b.row(f"fits[{a},{t}]", [(1, V_("L", a, t))],
                      "<=", budget_u - size_u[a], min_vars=0)
        for a, bb in w.overlap_pairs:
            lo = max(win[a][0], win[bb][0])
            hi = min(win[a][1], win[bb][1])
            for t in range(lo, hi + 1):
                u = b.name_of[("u", a, bb, t)]
                d = b.name_of[("d", a, bb, t)]
                la, lb = b.name_of[("L", a, t)], b.name_of[("L", bb, t)]
                b.row(f"pair_excl[{a},{bb},{t}]", [(1, u), (1, d)], "<=", 1)
                b.row(f"pair_req[{a},{bb},{t}]",
                      [(1, u), (1, d)] + res_terms(a, t, -1) + res_terms(bb, t, -1),
                      ">=", -1)
                b.row(f"above[{a},{bb},{t}]",
                      [(1, lb), (-1, la), (big_m, u)], "<=", big_m - size_u[bb])
                b.row(f"below[{a},{bb},{t}]",
                      [(1, la), (-1, lb), (big_m, d)], "<=", big_m - size_u[a])
        for a in g.tensors:
            first, last = win[a]
            for t in range(first + 1, last + 1):
                v = V_("V", a, t)
                lt, lp = b.name_of[("L", a, t)], b.name_of[("L", a, t - 1)]
                b.row(f"move_ub[{a},{t}]", [(1, lt), (-1, lp), (big_m, v)],
                      "<=", big_m)
                b.row(f"move_lb[{a},{t}]", [(1, lp), (-1, lt), (big_m, v)],
                      "<=", big_m)
                b.row(f"persist_req[{a},{t}]",
                      res_terms(a, t - 1) + [(1, V_("P", a, t)), (-1, v)],
                      "<=", 1)
                b.row(f"persist_res[{a},{t}]",
                      [(1, v)] + res_terms(a, t - 1, -1), "<=", 0)
                b.row(f"persist_pres[{a},{t}]",
                      [(1, v), (-1, V_("P", a, t))], "<=", 0)

    # --- objective
    if alloc:
        for name, key in b.key_of.items():
            if key[0] in ("S", "R"):
                b.objective[name] = size_b[key[1]]
    else:
        mpk = b.name_of[("Mpeak",)]
        for t in range(t_count):
            terms = []
            for a in g.tensors:
                first, last = win[a]
                if first <= t <= last:
                    c = C(a, t)
                    if c is not None:
                        terms.append((size_b[a], c))
                    p = V_("P", a, t)
                    if p is not None:
                        terms.append((size_b[a], p))
            b.row(f"peak[{t}]", terms + [(-1, mpk)], "<=", 0, min_vars=0)
        b.objective[mpk] = 1

    return MilpInstance(
        mode=_mode_name(mode),
        graph_name=g.name,
        budget=mode.budget if alloc else None,
        alignment=alignment,
        variables=b.variables,
        objective=b.objective,
        constraints=b.constraints,
        key_of=b.key_of,
        name_of=b.name_of,
        schedule_const=_order_to_schedule(g, mode.order) if fixed else None,
        tensor_window=dict(win),
        size_units=size_u,
        budget_units=budget_u,
    )


def _order_to_schedule(g: DataflowGraph, order: dict) -> list:
    by_t = sorted(order, key=order.get)
    return list(by_t)


# ---------------------------------------------------------------- decode

def _rounded(inst: MilpInstance, assignment: dict, tol: float) -> dict:
    vals = {}
    for name, vd in inst.variables.items():
        if name not in assignment:
            raise InconsistentAssignment(f"assignment missing variable {name}")
        raw = assignment[name]
        r = round(raw)
        if abs(raw - r) > tol:
            raise NonIntegralSolution(f"{name} = {raw} is not integral within {tol}")
        if vd.binary and r not in (0, 1):
            raise NonIntegralSolution(f"{name} = {raw} outside binary domain")
        vals[name] = int(r)
    return vals


def decode(g: DataflowGraph, w: TimestepWindows, mode, assignment: dict,
           alignment: int = 1, instance: MilpInstance | None = None,
           tol: float = 1e-6) -> ExecutionPlan:
    """Round an assignment, re-check every constraint, and rebuild the plan.

    The returned plan is run through the independent validator before being
    handed back, so a successful decode is end-to-end consistent.
    """
    inst = instance if instance is not None else encode(g, w, mode, alignment)
    vals = _rounded(inst, assignment, tol)
    bad = inst.violations(vals, tol=0)
    if bad:
        name, gap = bad[0]
        raise InconsistentAssignment(f"constraint {name} violated by {gap}")

    fixed = inst.schedule_const is not None
    alloc = inst.mode in ("MinAccess", "FixedSchedule")

    def val(*key):
        n = inst.name_of.get(tuple(key))
        return vals[n] if n is not None else 0

    if fixed:
        schedule = list(inst.schedule_const)
    else:
        schedule = []
        for t in range(g.timestep_count):
            running = [op.id for op in g.operators if val("C", op.outputs[0], t) == 1]
            if len(running) != 1:
                raise InconsistentAssignment(
                    f"{len(running)} operators scheduled at timestep {t}")
            schedule.append(running[0])
    order = {oid: t for t, oid in enumerate(schedule)}

    if alloc:
        budget = inst.budget

        def addr(a, t):
            return val("L", a, t) * inst.alignment
    else:
        offs, acc = {}, 0
        for a in g.tensors:
            offs[a] = acc
            acc += g.size(a)
        budget = acc

        def addr(a, t):
            return offs[a]

    events: list = []
    resident_prev: set = set()
    for t in range(g.timestep_count):
        step: list = []
        resident_now: set = set()
        for a in g.tensors:
            c = 1 if (fixed and order[g.producer[a]] == t) else val("C", a, t)
            p = val("P", a, t)
            s = val("S", a, t) if alloc else 0
            r = val("R", a, t) if alloc else 0
            if c:
                step.append(PlanEvent(a, "create", addr(a, t)))
            elif p:
                step.append(PlanEvent(a, "preserve", addr(a, t)))
            elif r:
                step.append(PlanEvent(a, "retrieve", addr(a, t)))
            elif s:
                step.append(PlanEvent(a, "spill"))
            elif a in resident_prev:
                step.append(PlanEvent(a, "drop"))
            if c or p or r:
                resident_now.add(a)
        events.append(step)
        resident_prev = resident_now

    plan = ExecutionPlan(budget=budget, schedule=schedule, events=events)
    validate(g, plan)
    return plan


# ------------------------------------------------- plan -> assignment

def assignment_from_plan(inst: MilpInstance, g: DataflowGraph,
                         plan: ExecutionPlan) -> dict:
    """Express a validated plan as a value for every instance variable.

    Raises InvalidParams when the plan keeps a tensor alive outside its
    encoded window and therefore cannot be represented.
    """
    t_count = len(plan.schedule)
    placed: list = [dict() for _ in range(t_count)]   # t -> tensor -> addr
    act: list = [dict() for _ in range(t_count)]      # t -> tensor -> action
    for t, step in enumerate(plan.events):
        for ev in step:
            act[t][ev.tensor] = ev.action
            if ev.action in ("create", "preserve", "retrieve"):
                placed[t][ev.tensor] = ev.addr
    peak = max((sum(g.size(a) for a in placed[t]) for t in range(t_count)),
               default=0)

    out: dict = {}
    align = inst.alignment
    for name, key in inst.key_of.items():
        kind = key[0]
        if kind in ("C", "P", "S", "R"):
            _, a, t = key
            want = {"C": "create", "P": "preserve", "S": "spill",
                    "R": "retrieve"}[kind]
            out[name] = 1 if act[t].get(a) == want else 0
        elif kind == "L":
            _, a, t = key
            out[name] = placed[t].get(a, 0) // align if a in placed[t] else 0
        elif kind == "V":
            _, a, t = key
            out[name] = 1 if (a in placed[t - 1] and act[t].get(a) == "preserve") else 0
        elif kind == "u":
            _, a, bb, t = key
            if a in placed[t] and bb in placed[t]:
                out[name] = 1 if placed[t][a] > placed[t][bb] else 0
            else:
                out[name] = 0
        elif kind == "d":
            _, a, bb, t = key
            if a in placed[t] and bb in placed[t]:
                out[name] = 1 if placed[t][a] < placed[t][bb] else 0
            else:
                out[name] = 0
        elif kind == "Mpeak":
            out[name] = peak
        else:  # pragma: no cover
            raise InvalidParams(f"unknown variable kind {kind!r}")

    # representability check: every residency/traffic event must map onto
    # an existing variable (or a folded constant for FixedSchedule)
    fixed = inst.schedule_const is not None
    for t in range(t_count):
        for a, action in act[t].items():
            kind = {"create": "C", "preserve": "P", "spill": "S",
                    "retrieve": "R", "drop": None}[action]
            if kind is None:
                continue
            if kind == "C" and fixed:
                if plan.schedule[t] != g.producer[a]:
                    raise InvalidParams(f"create of {a} at t={t} not representable")
                continue
            if inst.name_of.get((kind, a, t)) is None:
                raise InvalidParams(
                    f"{action} of {a} at t={t} is outside the encoded window")
    return out
