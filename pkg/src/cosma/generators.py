"""Deterministic graph generators and bundled example topologies.

Every family builds a JSON document and feeds it through load_graph, so
generated graphs get exactly the same validation and virtual-source
treatment as user files, and identical parameters give byte-identical
saved JSON.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field

from .errors import InvalidParams
from .graph import DataflowGraph, load_graph


@dataclass(frozen=True)
class GeneratorSpec:
    family: str
    params: dict = field(default_factory=dict)
    seed: int = 0


FAMILIES = ("chain", "diamond", "resnet_like", "nas_like", "random", "fig1")


def generate(spec: GeneratorSpec) -> DataflowGraph:
    if spec.family not in FAMILIES:
        raise InvalidParams(f"unknown family {spec.family!r}; know {FAMILIES}")
    fn = {
        "chain": chain,
        "diamond": diamond,
        "resnet_like": resnet_like,
        "nas_like": nas_like,
        "random": random_graph,
        "fig1": fig1,
    }[spec.family]
    kwargs = dict(spec.params)
    if spec.family in ("resnet_like", "nas_like", "random"):
        kwargs.setdefault("seed", spec.seed)
    return fn(**kwargs)


def _build(name, tensors, operators) -> DataflowGraph:
    doc = {"name": name, "tensors": tensors, "operators": operators}
    return load_graph(json.dumps(doc))


# ---------------------------------------------------------------- families

def chain(length: int = 3, sizes=None) -> DataflowGraph:
    """Straight line of length-1 operators over `length` tensors."""
    if length < 2:
        raise InvalidParams("chain needs length >= 2")
    if sizes is None:
        sizes = [4] * length
    sizes = list(sizes)
    if len(sizes) != length:
        raise InvalidParams(f"need {length} sizes, got {len(sizes)}")
    tensors = []
    for i, s in enumerate(sizes):
        kind = "graph_input" if i == 0 else (
            "graph_output" if i == length - 1 else "activation")
        tensors.append({"id": f"a{i}", "size": int(s), "kind": kind})
    ops = [
        {"id": f"op{i}", "inputs": [f"a{i - 1}"], "outputs": [f"a{i}"],
         "order": i - 1}
        for i in range(1, length)
    ]
    return _build(f"chain{length}", tensors, ops)


def diamond(sizes=(2, 4, 4, 1)) -> DataflowGraph:
    """Two parallel branches between a source operator and a join.

    The first operator takes no inputs; sizes are for its output, the two
    branch outputs, and the join output. The defaults make the two branch
    outputs coexist, so the peak-minimizing budget exceeds the largest
    single-operator footprint.
    """
    s_m, s_x1, s_x2, s_y = (int(v) for v in sizes)
    tensors = [
        {"id": "m", "size": s_m, "kind": "activation"},
        {"id": "x1", "size": s_x1, "kind": "activation"},
        {"id": "x2", "size": s_x2, "kind": "activation"},
        {"id": "y", "size": s_y, "kind": "graph_output"},
    ]
    ops = [
        {"id": "s", "inputs": [], "outputs": ["m"], "order": 0},
        {"id": "b1", "inputs": ["m"], "outputs": ["x1"], "order": 1},
        {"id": "b2", "inputs": ["m"], "outputs": ["x2"], "order": 2},
        {"id": "j", "inputs": ["x1", "x2"], "outputs": ["y"], "order": 3},
    ]
    return _build("diamond", tensors, ops)


def resnet_like(blocks: int = 3, seed: int = 0) -> DataflowGraph:
    """Residual-style blocks: a short conv chain plus a skip edge from the
    block input to the block's join. Blocks alternate two and three chain
    operators, giving skip spans of 2 and 3."""
    if blocks < 1:
        raise InvalidParams("resnet_like needs blocks >= 1")
    rng = random.Random(seed)
    tensors = [{"id": "x0", "size": 4, "kind": "graph_input"}]
    ops = []
    cur = "x0"
    order = 0
    for b in range(blocks):
        span = 2 if b % 2 == 0 else 3
        block_in = cur
        for k in range(span):
            out = f"b{b}h{k}"
            tensors.append({"id": out, "size": rng.choice((2, 4, 6)),
                            "kind": "activation"})
            ops.append({"id": f"b{b}conv{k}", "inputs": [cur],
                        "outputs": [out], "order": order})
            order += 1
            cur = out
        out = f"b{b}out"
        kind = "graph_output" if b == blocks - 1 else "activation"
        tensors.append({"id": out, "size": rng.choice((2, 4)), "kind": kind})
        ops.append({"id": f"b{b}add", "inputs": [cur, block_in],
                    "outputs": [out], "order": order})
        order += 1
        cur = out
    return _build(f"resnet{blocks}", tensors, ops)


def nas_like(branches: int = 4, ops_per_branch: int = 2,
             seed: int = 0) -> DataflowGraph:
    """Wide cell: one stem feeds several parallel branches with occasional
    cross-branch wiring, joined by a final concat-style operator."""
    if branches < 4:
        raise InvalidParams("nas_like needs branches >= 4")
    if ops_per_branch < 1:
        raise InvalidParams("nas_like needs ops_per_branch >= 1")
    rng = random.Random(seed)
    tensors = [{"id": "x0", "size": 4, "kind": "graph_input"}]
    ops = []
    order = 0
    tails = []
    prev_stage: list = []
    for br in range(branches):
        cur = "x0"
        for k in range(ops_per_branch):
            out = f"n{br}_{k}"
            tensors.append({"id": out, "size": rng.choice((1, 2, 3, 4)),
                            "kind": "activation"})
            inputs = [cur]
            # cross-wire into an earlier branch's same stage now and then
            if br > 0 and k > 0 and rng.random() < 0.5:
                inputs.append(f"n{rng.randrange(br)}_{k - 1}")
            ops.append({"id": f"cell{br}_{k}", "inputs": inputs,
                        "outputs": [out], "order": order})
            order += 1
            cur = out
        tails.append(cur)
        prev_stage.append(cur)
    tensors.append({"id": "y", "size": 4, "kind": "graph_output"})
    ops.append({"id": "concat", "inputs": tails, "outputs": ["y"],
                "order": order})
    return _build(f"nas{branches}x{ops_per_branch}", tensors, ops)


def random_graph(seed: int = 0, n_ops: int = 5, size_lo: int = 1,
                 size_hi: int = 8) -> DataflowGraph:
    """Seeded random DAG; n_ops counts total timesteps, sources included.

    Kept small on purpose: the exact search handles these directly, so the
    family is the workhorse for optimality cross-checks.
    """
    if n_ops < 2:
        raise InvalidParams("random needs n_ops >= 2")
    if not (1 <= size_lo <= size_hi):
        raise InvalidParams("need 1 <= size_lo <= size_hi")
    rng = random.Random(seed)
    n_src = 1 if n_ops <= 3 else rng.randint(1, 2)
    n_real = n_ops - n_src

    tensors = []
    avail = []
    for i in range(n_src):
        kind = "graph_input" if i == 0 else rng.choice(("graph_input", "parameter"))
        tid = f"s{i}"
        tensors.append({"id": tid, "size": rng.randint(size_lo, size_hi),
                        "kind": kind})
        avail.append(tid)

    ops = []
    total = sum(t["size"] for t in tensors)
    for i in range(n_real):
        k = rng.randint(1, min(3, len(avail)))
        # bias toward recent tensors so chains stay likely
        pool = avail[-4:] if rng.random() < 0.6 and len(avail) > 4 else avail
        inputs = rng.sample(pool, min(k, len(pool)))
        n_out = 2 if (total <= 40 and rng.random() < 0.2) else 1
        outputs = []
        for j in range(n_out):
            tid = f"t{i}_{j}" if n_out > 1 else f"t{i}"
            size = rng.randint(size_lo, size_hi)
            total += size
            kind = "graph_output" if i == n_real - 1 and j == 0 else "activation"
            tensors.append({"id": tid, "size": size, "kind": kind})
            outputs.append(tid)
        ops.append({"id": f"op{i}", "inputs": inputs, "outputs": outputs,
                    "order": i})
        avail.extend(outputs)
    return _build(f"rand{seed}_{n_ops}", tensors, ops)


def fig1() -> DataflowGraph:
    """Bundled seven-tensor example with a tight budget of 8 bytes; the
    canonical demonstration graph for replacement decisions."""
    sizes = {"a0": 4, "a1": 2, "a2": 2, "a3": 4, "a4": 2, "a5": 2, "a6": 2}
    kinds = {"a0": "graph_input", "a6": "graph_output"}
    tensors = [{"id": t, "size": s, "kind": kinds.get(t, "activation")}
               for t, s in sizes.items()]
    ops = [
        {"id": "op1", "inputs": ["a0"], "outputs": ["a1"], "order": 0},
        {"id": "op2", "inputs": ["a0", "a1"], "outputs": ["a2"], "order": 1},
        {"id": "op3", "inputs": ["a1", "a2"], "outputs": ["a3"], "order": 2},
        {"id": "op4", "inputs": ["a2", "a3"], "outputs": ["a4"], "order": 3},
        {"id": "op5", "inputs": ["a3", "a4"], "outputs": ["a5"], "order": 4},
        {"id": "op6", "inputs": ["a4", "a5"], "outputs": ["a6"], "order": 5},
    ]
    return _build("fig1", tensors, ops)


FIG1_BUDGET = 8
