"""Dataflow graph model, JSON i/o and schedule-window analyses.

A graph is a DAG of operators over named tensors. Every tensor has exactly
one producer once loading has inserted a virtual source operator for each
producer-less tensor (graph inputs and parameters). One operator executes
per timestep, so timestep_count == len(operators).

Graph JSON schema (strict, unknown fields rejected):

    {"name": str,
     "tensors":   [{"id": str, "size": int >= 1, "kind": str}, ...],
     "operators": [{"id": str, "inputs": [str], "outputs": [str],
                    "order": int}, ...]}

kind is one of: activation, parameter, graph_input, graph_output.
"order" values must form a permutation of 0..n-1 over the file's operators
and must respect data dependencies.
"""

from __future__ import annotations

import io
import json
from dataclasses import dataclass, field

from .errors import (
    CycleError,
    DanglingReference,
    DuplicateId,
    ParseError,
    TooManySchedules,
)

TENSOR_KINDS = ("activation", "parameter", "graph_input", "graph_output")

# kinds whose first host<->scratchpad transfer is compulsory traffic
HOST_BOUND_KINDS = ("graph_input", "parameter", "graph_output")

VIRTUAL_SOURCE_PREFIX = "src_"


@dataclass(frozen=True)
class Tensor:
    id: str
    size: int
    kind: str


@dataclass(frozen=True)
class Operator:
    id: str
    inputs: tuple[str, ...]
    outputs: tuple[str, ...]
    default_order: int
    is_virtual_source: bool = False


@dataclass
class DataflowGraph:
    """Operator DAG with per-tensor producer/consumer indexes.

    `operators` is kept sorted by default_order and includes virtual
    sources. Indexes are derived once at construction.
    """

    name: str
    tensors: dict[str, Tensor]
    operators: list[Operator]

    op_index: dict[str, Operator] = field(init=False, repr=False)
    producer: dict[str, str] = field(init=False, repr=False)
    consumers: dict[str, tuple[str, ...]] = field(init=False, repr=False)
    op_preds: dict[str, frozenset[str]] = field(init=False, repr=False)
    op_succs: dict[str, frozenset[str]] = field(init=False, repr=False)

    def __post_init__(self):
        self.operators = sorted(self.operators, key=lambda o: o.default_order)
        self.op_index = {o.id: o for o in self.operators}
        self.producer = {}
        for op in self.operators:
            for t in op.outputs:
                if t in self.producer:
                    raise ParseError(
                        f"tensor {t!r} produced by both {self.producer[t]!r} and {op.id!r}"
                    )
                self.producer[t] = op.id
        cons: dict[str, list[str]] = {t: [] for t in self.tensors}
        for op in self.operators:
            for t in dict.fromkeys(op.inputs):
                cons[t].append(op.id)
        self.consumers = {t: tuple(v) for t, v in cons.items()}
        # direct dependency edges between operators
        dpred: dict[str, set[str]] = {o.id: set() for o in self.operators}
        dsucc: dict[str, set[str]] = {o.id: set() for o in self.operators}
        for op in self.operators:
            for t in op.inputs:
                p = self.producer[t]
                if p != op.id:
                    dpred[op.id].add(p)
                    dsucc[p].add(op.id)
        self.op_preds = {k: frozenset(v) for k, v in dpred.items()}
        self.op_succs = {k: frozenset(v) for k, v in dsucc.items()}

    @property
    def timestep_count(self) -> int:
        return len(self.operators)

    @property
    def real_operators(self) -> list[Operator]:
        return [o for o in self.operators if not o.is_virtual_source]

    def size(self, tensor_id: str) -> int:
        return self.tensors[tensor_id].size


@dataclass(frozen=True)
class TimestepWindows:
    """Feasible execution/residency ranges under any valid schedule.

    asap[o]  = number of transitive predecessors of o
    alap[o]  = timestep_count - 1 - number of transitive successors
    tensor_window[a] = (asap(producer), max over consumers of alap(c));
    consumer-less tensors extend to the last timestep.
    overlap_pairs holds every unordered tensor pair whose windows
    intersect, i.e. every pair that can be co-resident in some plan.
    """

    asap: dict[str, int]
    alap: dict[str, int]
    tensor_window: dict[str, tuple[int, int]]
    overlap_pairs: tuple[tuple[str, str], ...]


@dataclass(frozen=True)
class BudgetTriple:
    """The three evaluation budgets: m_r (minimum feasible), m_p (peak of
    the footprint-minimizing schedule) and the halfway point m_h."""

    m_r: int
    m_h: int
    m_p: int


# ---------------------------------------------------------------- loading

def _require_keys(obj: dict, allowed: tuple[str, ...], what: str):
    unknown = set(obj) - set(allowed)
    if unknown:
        raise ParseError(f"unknown field(s) {sorted(unknown)} in {what}")
    missing = set(allowed) - set(obj)
    if missing:
        raise ParseError(f"missing field(s) {sorted(missing)} in {what}")


def _check_id(value, what: str) -> str:
    if not isinstance(value, str) or not value:
        raise ParseError(f"{what} id must be a non-empty string, got {value!r}")
    return value


def load_graph(source) -> DataflowGraph:
    """Parse graph JSON from bytes, str or a file-like object.

    Inserts one virtual source operator per producer-less tensor, placed
    immediately before the tensor's first consumer (file order preserved
    among sources), then renumbers default_order densely.
    """
    if isinstance(source, (bytes, bytearray)):
        text = source.decode("utf-8")
    elif isinstance(source, str):
        text = source
    elif isinstance(source, io.IOBase) or hasattr(source, "read"):
        data = source.read()
        text = data.decode("utf-8") if isinstance(data, bytes) else data
    else:
        raise ParseError(f"unsupported graph source type {type(source).__name__}")
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise ParseError(f"invalid JSON: {e}") from None
    if not isinstance(doc, dict):
        raise ParseError("graph document must be a JSON object")
    _require_keys(doc, ("name", "tensors", "operators"), "graph")
    if not isinstance(doc["name"], str):
        raise ParseError("graph name must be a string")
    if not isinstance(doc["tensors"], list) or not isinstance(doc["operators"], list):
        raise ParseError("tensors and operators must be arrays")
    if not doc["operators"]:
        raise ParseError("graph has no operators")

    tensors: dict[str, Tensor] = {}
    for item in doc["tensors"]:
        if not isinstance(item, dict):
            raise ParseError("tensor entries must be objects")
        _require_keys(item, ("id", "size", "kind"), "tensor")
        tid = _check_id(item["id"], "tensor")
        if tid in tensors:
            raise DuplicateId(f"duplicate tensor id {tid!r}")
        size = item["size"]
        if not isinstance(size, int) or isinstance(size, bool) or size < 1:
            raise ParseError(f"tensor {tid!r} size must be an integer >= 1")
        kind = item["kind"]
        if kind not in TENSOR_KINDS:
            raise ParseError(f"tensor {tid!r} has unknown kind {kind!r}")
        tensors[tid] = Tensor(tid, size, kind)

    raw_ops = []
    op_ids = set()
    for item in doc["operators"]:
        if not isinstance(item, dict):
            raise ParseError("operator entries must be objects")
        _require_keys(item, ("id", "inputs", "outputs", "order"), "operator")
        oid = _check_id(item["id"], "operator")
        if oid in op_ids:
            raise DuplicateId(f"duplicate operator id {oid!r}")
        op_ids.add(oid)
        for key in ("inputs", "outputs"):
            if not isinstance(item[key], list) or not all(isinstance(x, str) for x in item[key]):
                raise ParseError(f"operator {oid!r} {key} must be an array of tensor ids")
            for ref in item[key]:
                if ref not in tensors:
                    raise DanglingReference(f"operator {oid!r} references unknown tensor {ref!r}")
        if not item["outputs"]:
            raise ParseError(f"operator {oid!r} has no outputs")
        if len(set(item["outputs"])) != len(item["outputs"]):
            raise ParseError(f"operator {oid!r} lists a duplicate output")
        order = item["order"]
        if not isinstance(order, int) or isinstance(order, bool):
            raise ParseError(f"operator {oid!r} order must be an integer")
        raw_ops.append((oid, tuple(item["inputs"]), tuple(item["outputs"]), order))

    orders = sorted(o[3] for o in raw_ops)
    if orders != list(range(len(raw_ops))):
        raise ParseError("operator order values must be a permutation of 0..n-1")

    produced = {t for _, _, outs, _ in raw_ops for t in outs}
    for _, _, outs, _ in raw_ops:
        for t in outs:
            if sum(t in o[2] for o in raw_ops) > 1:
                raise ParseError(f"tensor {t!r} has more than one producer")

    # producer-less tensors get virtual sources; they must be host-provided
    sourced = [t for t in tensors.values() if t.id not in produced]
    for t in sourced:
        if t.kind not in ("graph_input", "parameter"):
            raise ParseError(
                f"producer-less tensor {t.id!r} must be graph_input or parameter, got {t.kind!r}"
            )
    for t in tensors.values():
        if t.id in produced and t.kind in ("graph_input", "parameter"):
            raise ParseError(f"tensor {t.id!r} of kind {t.kind!r} must not have a producer")

    by_order = sorted(raw_ops, key=lambda o: o[3])
    # dependency check on the declared order, before inserting sources
    seen: set[str] = set(t.id for t in sourced)
    for oid, ins, outs, _ in by_order:
        for t in ins:
            if t not in seen:
                raise ParseError(
                    f"default order violates a dependency: {oid!r} consumes {t!r} before it exists"
                )
        seen.update(outs)

    # merge virtual sources in, each before its first consumer
    merged: list[tuple[str, tuple[str, ...], tuple[str, ...], bool]] = [
        (oid, ins, outs, False) for oid, ins, outs, _ in by_order
    ]
    tail: list[tuple[str, tuple[str, ...], tuple[str, ...], bool]] = []
    for t in sourced:  # file order among sources
        src_id = VIRTUAL_SOURCE_PREFIX + t.id
        if src_id in op_ids:
            raise DuplicateId(f"virtual source id {src_id!r} collides with an operator")
        op_ids.add(src_id)
        entry = (src_id, (), (t.id,), True)
        pos = next((i for i, (_, ins, _, _) in enumerate(merged) if t.id in ins), None)
        if pos is None:
            tail.append(entry)  # unconsumed input: schedule it last
        else:
            merged.insert(pos, entry)
    merged.extend(tail)

    ops = [
        Operator(oid, ins, outs, i, is_virtual_source=virt)
        for i, (oid, ins, outs, virt) in enumerate(merged)
    ]
    g = DataflowGraph(doc["name"], tensors, ops)
    _check_acyclic(g)
    return g


def load_graph_path(path) -> DataflowGraph:
    with open(path, "rb") as fh:
        return load_graph(fh)


def _check_acyclic(g: DataflowGraph):
    state: dict[str, int] = {}

    def visit(oid: str, trail: list[str]):
        mark = state.get(oid, 0)
        if mark == 1:
            raise CycleError("operator dependency cycle: " + " -> ".join(trail + [oid]))
        if mark == 2:
            return
        state[oid] = 1
        for nxt in sorted(g.op_succs[oid]):
            visit(nxt, trail + [oid])
        state[oid] = 2

    for op in g.operators:
        visit(op.id, [])


def save_graph(g: DataflowGraph) -> str:
    """Canonical JSON for a graph; virtual sources are omitted and order
    values are recompacted, so load -> save reproduces the original file
    written by this serializer byte for byte."""
    real = g.real_operators
    rank = {o.id: i for i, o in enumerate(sorted(real, key=lambda o: o.default_order))}
    doc = {
        "name": g.name,
        "tensors": [
            {"id": t.id, "size": t.size, "kind": t.kind} for t in g.tensors.values()
        ],
        "operators": [
            {
                "id": o.id,
                "inputs": list(o.inputs),
                "outputs": list(o.outputs),
                "order": rank[o.id],
            }
            for o in real
        ],
    }
    return json.dumps(doc, indent=2) + "\n"


# ---------------------------------------------------------------- analyses

def _transitive(direct: dict[str, frozenset[str]]) -> dict[str, frozenset[str]]:
    memo: dict[str, frozenset[str]] = {}

    def walk(oid: str) -> frozenset[str]:
        if oid in memo:
            return memo[oid]
        acc: set[str] = set()
        for nxt in direct[oid]:
            acc.add(nxt)
            acc |= walk(nxt)
        memo[oid] = frozenset(acc)
        return memo[oid]

    for oid in direct:
        walk(oid)
    return memo


def compute_windows(g: DataflowGraph) -> TimestepWindows:
    t_count = g.timestep_count
    preds = _transitive(g.op_preds)
    succs = _transitive(g.op_succs)
    asap = {oid: len(preds[oid]) for oid in preds}
    alap = {oid: t_count - 1 - len(succs[oid]) for oid in succs}

    window: dict[str, tuple[int, int]] = {}
    for tid in g.tensors:
        first = asap[g.producer[tid]]
        cons = g.consumers[tid]
        last = max((alap[c] for c in cons), default=t_count - 1)
        window[tid] = (first, last)

    ids = list(g.tensors)
    pairs: set[tuple[str, str]] = set()
    for i, a in enumerate(ids):
        fa, la = window[a]
        for b in ids[i + 1:]:
            fb, lb = window[b]
            if fa <= lb and fb <= la:
                pairs.add((a, b) if a < b else (b, a))
    return TimestepWindows(asap, alap, window, tuple(sorted(pairs)))


def compute_min_budget(g: DataflowGraph) -> int:
    """Smallest budget at which every operator's inputs and outputs can be
    simultaneously resident. Below this no valid plan exists; at or above
    it a spill-everything plan always exists."""
    worst = 0
    for op in g.operators:
        footprint = sum(g.size(t) for t in dict.fromkeys(op.inputs + op.outputs))
        worst = max(worst, footprint)
    return worst


def compute_budget_triple(g: DataflowGraph, mpmf_solver) -> BudgetTriple:
    """mpmf_solver: callable mapping a graph to its minimum peak footprint
    (see the peak-minimizing encode mode); kept as a handle so this module
    stays free of solver dependencies."""
    m_r = compute_min_budget(g)
    m_p = int(mpmf_solver(g))
    if m_p < m_r:
        raise ValueError(f"peak-minimizing footprint {m_p} below minimum budget {m_r}")
    return BudgetTriple(m_r=m_r, m_h=(m_r + m_p) // 2, m_p=m_p)


def enumerate_schedules(g: DataflowGraph, limit: int | None = None):
    """Yield every dependency-respecting operator order (lists of op ids).

    Intended for tests and exhaustive checks on small graphs; `limit`
    guards against accidental blowups.
    """
    order: list[str] = []
    executed: set[str] = set()
    count = 0

    def step():
        nonlocal count
        if len(order) == g.timestep_count:
            count += 1
            if limit is not None and count > limit:
                raise TooManySchedules(limit)
            yield list(order)
            return
        for op in g.operators:
            if op.id in executed or not g.op_preds[op.id] <= executed:
                continue
            executed.add(op.id)
            order.append(op.id)
            yield from step()
            order.pop()
            executed.remove(op.id)

    yield from step()
