"""Execution plans, the independent plan validator and memory-map rendering.

A plan is self-describing: a schedule (one operator per timestep), the
memory budget, and per-timestep tensor events. The validator replays the
plan against a graph and either raises a typed violation or returns traffic
metrics. Every plan produced anywhere in this package must pass validation;
the simulator deliberately shares no code with the optimizer.

Per timestep a tensor has at most one action:

    create    producer executes here; addr required
    preserve  stays resident at the same addr
    spill     written back to host; deallocated; at most once per tensor;
              only from a created/preserved state
    retrieve  re-read from host after a spill; addr required; repeatable
    drop      deallocated without transfer

A previously resident tensor with no event is treated as an implicit drop.
Spill and retrieve are the only charged actions.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from .errors import (
    AddressDrift,
    BudgetViolation,
    DanglingReference,
    DepViolation,
    LostTensor,
    MultiCreate,
    MultiSpill,
    OverlapViolation,
    ParseError,
    ResidencyViolation,
)
from .graph import HOST_BOUND_KINDS, DataflowGraph

ACTIONS = ("create", "preserve", "spill", "retrieve", "drop")
ADDR_ACTIONS = ("create", "preserve", "retrieve")


@dataclass(frozen=True)
class PlanEvent:
    tensor: str
    action: str
    addr: int | None = None


@dataclass
class ExecutionPlan:
    budget: int
    schedule: list[str]
    events: list[list[PlanEvent]]

    def to_json(self) -> str:
        doc = {
            "budget": self.budget,
            "schedule": list(self.schedule),
            "events": [
                [
                    {"tensor": e.tensor, "action": e.action}
                    if e.addr is None
                    else {"tensor": e.tensor, "action": e.action, "addr": e.addr}
                    for e in step
                ]
                for step in self.events
            ],
        }
        return json.dumps(doc, indent=2) + "\n"


def plan_from_json(source) -> ExecutionPlan:
    if isinstance(source, (bytes, bytearray)):
        source = source.decode("utf-8")
    elif hasattr(source, "read"):
        data = source.read()
        source = data.decode("utf-8") if isinstance(data, bytes) else data
    try:
        doc = json.loads(source)
    except json.JSONDecodeError as e:
        raise ParseError(f"invalid plan JSON: {e}") from None
    if not isinstance(doc, dict) or set(doc) != {"budget", "schedule", "events"}:
        raise ParseError("plan must be an object with budget, schedule, events")
    if not isinstance(doc["budget"], int) or isinstance(doc["budget"], bool):
        raise ParseError("plan budget must be an integer")
    if not isinstance(doc["schedule"], list) or not all(isinstance(x, str) for x in doc["schedule"]):
        raise ParseError("plan schedule must be an array of operator ids")
    events: list[list[PlanEvent]] = []
    if not isinstance(doc["events"], list):
        raise ParseError("plan events must be an array")
    for step in doc["events"]:
        if not isinstance(step, list):
            raise ParseError("plan events must be an array of arrays")
        row = []
        for item in step:
            if not isinstance(item, dict) or not set(item) <= {"tensor", "action", "addr"}:
                raise ParseError(f"bad plan event {item!r}")
            if "tensor" not in item or "action" not in item:
                raise ParseError(f"plan event missing tensor/action: {item!r}")
            action = item["action"]
            if action not in ACTIONS:
                raise ParseError(f"unknown plan action {action!r}")
            addr = item.get("addr")
            if action in ADDR_ACTIONS:
                if not isinstance(addr, int) or isinstance(addr, bool):
                    raise ParseError(f"action {action!r} requires an integer addr")
            elif addr is not None:
                raise ParseError(f"action {action!r} must not carry an addr")
            row.append(PlanEvent(item["tensor"], action, addr))
        events.append(row)
    return ExecutionPlan(doc["budget"], list(doc["schedule"]), events)


@dataclass
class TrafficMetrics:
    non_compulsory_bytes: int
    compulsory_bytes: int
    peak_footprint: int
    event_log: list[tuple[int, str, str, int]] = field(default_factory=list)


# ---------------------------------------------------------------- validate

def validate(g: DataflowGraph, p: ExecutionPlan) -> TrafficMetrics:
    """Replay the plan; raise a typed violation or return metrics.

    Checks: schedule validity, data dependencies, residency chains,
    address stability, bounds, pairwise non-overlap, single creation,
    single spill, and loss of live tensors.
    """
    t_count = g.timestep_count
    if len(p.schedule) != t_count or sorted(p.schedule) != sorted(g.op_index):
        raise ParseError("plan schedule is not a permutation of the graph's operators")
    if len(p.events) != t_count:
        raise ParseError("plan events must have one entry per timestep")
    pos = {oid: t for t, oid in enumerate(p.schedule)}
    for op in g.operators:
        for dep in g.op_preds[op.id]:
            if pos[dep] >= pos[op.id]:
                raise DepViolation(pos[op.id], (op.id,), f"runs before its producer {dep}")

    resident: dict[str, int] = {}        # tensor -> base addr
    last_action: dict[str, str] = {}
    created: set[str] = set()
    spilled_ever: set[str] = set()
    dropped_live_unspilled: set[str] = set()

    spilled_bytes = 0
    retrieved_bytes = 0
    peak = 0
    log: list[tuple[int, str, str, int]] = []

    for t, oid in enumerate(p.schedule):
        op = g.op_index[oid]
        step = p.events[t]
        seen_here: set[str] = set()
        next_resident: dict[str, int] = {}
        acted: set[str] = set()

        for ev in step:
            if ev.tensor not in g.tensors:
                raise DanglingReference(f"plan event references unknown tensor {ev.tensor!r}")
            if ev.tensor in seen_here:
                raise ResidencyViolation(t, (ev.tensor,), "more than one event this timestep")
            seen_here.add(ev.tensor)
            size = g.size(ev.tensor)
            if ev.action in ADDR_ACTIONS and not isinstance(ev.addr, int):
                raise ParseError(f"{ev.action} of {ev.tensor} needs an integer addr")

            if ev.action == "create":
                if ev.tensor in created:
                    raise MultiCreate(t, (ev.tensor,))
                if ev.tensor not in op.outputs:
                    raise DepViolation(t, (ev.tensor,), f"not an output of {oid}")
                created.add(ev.tensor)
                next_resident[ev.tensor] = ev.addr
            elif ev.action == "preserve":
                if ev.tensor not in resident:
                    raise ResidencyViolation(t, (ev.tensor,), "preserve of a non-resident tensor")
                if ev.addr != resident[ev.tensor]:
                    raise AddressDrift(t, (ev.tensor,),
                                       f"addr {resident[ev.tensor]} -> {ev.addr}")
                next_resident[ev.tensor] = ev.addr
            elif ev.action == "spill":
                if last_action.get(ev.tensor) not in ("create", "preserve"):
                    raise ResidencyViolation(
                        t, (ev.tensor,),
                        "spill requires a created/preserved tensor at the previous timestep")
                if ev.tensor in spilled_ever:
                    raise MultiSpill(t, (ev.tensor,))
                spilled_ever.add(ev.tensor)
                spilled_bytes += size
                log.append((t, ev.tensor, "spill", size))
            elif ev.action == "retrieve":
                if ev.tensor not in created:
                    raise DepViolation(t, (ev.tensor,), "retrieve before creation")
                if ev.tensor not in spilled_ever:
                    raise LostTensor(t, (ev.tensor,), "retrieve without a prior spill")
                retrieved_bytes += size
                next_resident[ev.tensor] = ev.addr
                log.append((t, ev.tensor, "retrieve", size))
            elif ev.action == "drop":
                if ev.tensor not in resident:
                    raise ResidencyViolation(t, (ev.tensor,), "drop of a non-resident tensor")
            acted.add(ev.tensor)
            last_action[ev.tensor] = ev.action

        # missing event == implicit drop
        for tid in resident:
            if tid not in acted:
                last_action[tid] = "drop"
                log.append((t, tid, "drop", 0))
                if tid not in spilled_ever:
                    dropped_live_unspilled.add(tid)
        for ev in step:
            if ev.action == "drop":
                log.append((t, ev.tensor, "drop", 0))
                if ev.tensor not in spilled_ever:
                    dropped_live_unspilled.add(ev.tensor)

        # the operator's outputs must all be created now
        for out in op.outputs:
            creates = [e for e in step if e.tensor == out and e.action == "create"]
            if not creates:
                raise DepViolation(t, (out,), f"output of {oid} not created at its timestep")
        # and its inputs must be resident via preserve/retrieve
        for inp in dict.fromkeys(op.inputs):
            ev = next((e for e in step if e.tensor == inp), None)
            if ev is None or ev.action not in ("preserve", "retrieve"):
                if inp in dropped_live_unspilled:
                    raise LostTensor(t, (inp,), f"consumed by {oid} after a lossy drop")
                raise DepViolation(t, (inp,), f"input of {oid} not resident")

        # geometry checks on the new residency set
        placed = sorted(next_resident.items(), key=lambda kv: (kv[1], kv[0]))
        for tid, addr in placed:
            if addr < 0 or addr + g.size(tid) > p.budget:
                raise BudgetViolation(t, (tid,), f"[{addr}, {addr + g.size(tid)}) outside budget {p.budget}")
        for (a, abase), (b, bbase) in zip(placed, placed[1:]):
            if abase + g.size(a) > bbase:
                raise OverlapViolation(t, (a, b))

        peak = max(peak, sum(g.size(tid) for tid in next_resident))
        resident = next_resident

    compulsory = sum(t.size for t in g.tensors.values() if t.kind in HOST_BOUND_KINDS)
    return TrafficMetrics(
        non_compulsory_bytes=spilled_bytes + retrieved_bytes,
        compulsory_bytes=compulsory,
        peak_footprint=peak,
        event_log=log,
    )


# ---------------------------------------------------------------- rendering

_PALETTE = (
    "#4c78a8", "#f58518", "#54a24b", "#e45756", "#72b7b2", "#eeca3b",
    "#b279a2", "#ff9da6", "#9d755d", "#bab0ac", "#6b8e23", "#8c6bb1",
)


def _residency_runs(g: DataflowGraph, p: ExecutionPlan):
    """Maximal (tensor, t_start, t_end, addr) rectangles at a fixed address.
    A retrieve starts a new run even when the tensor stayed resident."""
    runs = []
    open_run: dict[str, list] = {}
    for t, step in enumerate(p.events):
        acted = {e.tensor: e for e in step}
        for tid in list(open_run):
            ev = acted.get(tid)
            if ev is not None and ev.action == "preserve":
                open_run[tid][2] = t
            elif ev is not None and ev.action == "retrieve":
                runs.append(tuple(open_run.pop(tid)))
            else:
                runs.append(tuple(open_run.pop(tid)))
        for tid, ev in acted.items():
            if ev.action in ("create", "retrieve"):
                open_run[tid] = [tid, t, t, ev.addr]
    runs.extend(tuple(v) for v in open_run.values())
    runs.sort(key=lambda r: (r[1], r[3], r[0]))
    return runs


def render_memory_map(g: DataflowGraph, p: ExecutionPlan, fmt: str = "svg",
                      cell: int = 1) -> str:
    """Render the plan's address-space occupancy over time.

    fmt="svg" draws one rectangle per maximal residency run plus markers
    for spills and retrieves; fmt="ascii" draws a budget x timestep grid,
    one character per `cell` address units. Output is deterministic byte
    for byte for a given (graph, plan).
    """
    validate(g, p)
    runs = _residency_runs(g, p)
    tensor_order = [tid for tid in g.tensors]
    if fmt == "ascii":
        return _render_ascii(g, p, runs, tensor_order, cell)
    if fmt == "svg":
        return _render_svg(g, p, runs, tensor_order)
    raise ValueError(f"unknown render format {fmt!r}")


def _glyph(i: int) -> str:
    alphabet = "abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789"
    return alphabet[i % len(alphabet)]


def _render_ascii(g, p, runs, tensor_order, cell):
    t_count = len(p.schedule)
    rows = -(-p.budget // cell)
    grid = [["." for _ in range(t_count)] for _ in range(rows)]
    glyph = {tid: _glyph(i) for i, tid in enumerate(tensor_order)}
    for tid, t0, t1, addr in runs:
        lo = addr // cell
        hi = -(-(addr + g.size(tid)) // cell)
        for r in range(lo, hi):
            for t in range(t0, t1 + 1):
                grid[r][t] = glyph[tid]
    lines = ["".join(grid[r]) for r in range(rows - 1, -1, -1)]
    used = [tid for tid in tensor_order if any(r[0] == tid for r in runs)]
    legend = ["", "legend: " + " ".join(f"{glyph[t]}={t}" for t in used)]
    marks = []
    for t, step in enumerate(p.events):
        for ev in step:
            if ev.action in ("spill", "retrieve"):
                marks.append(f"t={t} {ev.action} {ev.tensor}")
    if marks:
        legend.append("traffic: " + "; ".join(marks))
    return "\n".join(lines + legend) + "\n"


def _render_svg(g, p, runs, tensor_order):
    cw, ch, mx, my = 30, 14, 46, 22
    t_count = len(p.schedule)
    width = mx + t_count * cw + 10
    height = my + p.budget * ch + 26
    color = {tid: _PALETTE[i % len(_PALETTE)] for i, tid in enumerate(tensor_order)}

    def y(addr):  # address 0 at the bottom
        return my + (p.budget - addr) * ch

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'font-family="monospace" font-size="10">',
        f'<rect class="arena" x="{mx}" y="{my}" width="{t_count * cw}" '
        f'height="{p.budget * ch}" fill="#f7f7f7" stroke="#333"/>',
    ]
    for t in range(t_count):
        out.append(f'<text x="{mx + t * cw + cw // 2}" y="{my + p.budget * ch + 14}" '
                   f'text-anchor="middle">{t}</text>')
    step = max(1, p.budget // 8)
    for addr in range(0, p.budget + 1, step):
        out.append(f'<text x="{mx - 4}" y="{y(addr) + 3}" text-anchor="end">{addr}</text>')
    for tid, t0, t1, addr in runs:
        size = g.size(tid)
        out.append(
            f'<rect class="tensor" x="{mx + t0 * cw}" y="{y(addr + size)}" '
            f'width="{(t1 - t0 + 1) * cw}" height="{size * ch}" '
            f'fill="{color[tid]}" fill-opacity="0.8" stroke="#222">'
            f"<title>{tid} t=[{t0},{t1}] addr=[{addr},{addr + size})</title></rect>"
        )
        out.append(f'<text x="{mx + t0 * cw + 3}" y="{y(addr + size) + 11}" '
                   f'fill="#000">{tid}</text>')
    for t, events in enumerate(p.events):
        for ev in events:
            if ev.action == "spill":
                x0 = mx + t * cw
                out.append(f'<path class="spill" d="M{x0} {my - 8} l8 0 l-4 8 z" '
                           f'fill="#d62728"><title>spill {ev.tensor} at t={t}</title></path>')
            elif ev.action == "retrieve":
                x0 = mx + t * cw + 10
                out.append(f'<path class="retrieve" d="M{x0} {my} l8 0 l-4 -8 z" '
                           f'fill="#2ca02c"><title>retrieve {ev.tensor} at t={t}</title></path>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
