#!/usr/bin/env python3
"""Solve an LP-format MILP file and write a plain-text solution file.

Usage: solve_lp.py PROBLEM.lp SOLUTION.txt [--time-limit SECONDS]

Reads the CPLEX-LP subset (Minimize / Subject To / Bounds / Binary /
Generals / End, one entry per line), solves with scipy's MILP interface
(HiGHS), and writes:

    status optimal|infeasible|timeout|error
    <variable> <value>          one line per variable

The parser half is import-safe and dependency-free so test code can reuse
it to check LP round-trips.
"""

from __future__ import annotations

import re
import sys
from dataclasses import dataclass, field

_NUM = re.compile(r"^[+-]?(\d+(\.\d*)?|\.\d+)([eE][+-]?\d+)?$")
_SECTIONS = {
    "minimize": "objective",
    "subject to": "constraints",
    "such that": "constraints",
    "st": "constraints",
    "s.t.": "constraints",
    "bounds": "bounds",
    "binary": "binary",
    "binaries": "binary",
    "bin": "binary",
    "general": "general",
    "generals": "general",
    "gen": "general",
    "end": "end",
}


@dataclass
class LpModel:
    objective: dict = field(default_factory=dict)        # var -> coef
    constraints: list = field(default_factory=list)      # (label, terms, sense, rhs)
    bounds: dict = field(default_factory=dict)           # var -> (lo, hi)
    binary: list = field(default_factory=list)
    general: list = field(default_factory=list)

    def variables(self) -> list:
        seen: dict = {}
        for name in self.objective:
            seen[name] = True
        for _, terms, _, _ in self.constraints:
            for name in terms:
                seen[name] = True
        for name in self.bounds:
            seen[name] = True
        for name in self.binary:
            seen[name] = True
        for name in self.general:
            seen[name] = True
        return list(seen)


def _parse_terms(tokens: list) -> dict:
    terms: dict = {}
    sign = 1
    coef = None
    for tok in tokens:
        if tok == "+":
            sign, coef = 1, None
        elif tok == "-":
            sign, coef = -1, None
        elif _NUM.match(tok):
            coef = float(tok) if coef is None else coef * float(tok)
        else:
            value = sign * (1.0 if coef is None else coef)
            terms[tok] = terms.get(tok, 0.0) + value
            sign, coef = 1, None
    return terms


def parse_lp(text: str) -> LpModel:
    model = LpModel()
    section = None
    for raw in text.splitlines():
        line = raw.split("\\", 1)[0].strip()
        if not line:
            continue
        key = line.lower()
        if key in _SECTIONS:
            section = _SECTIONS[key]
            if section == "end":
                break
            continue
        if section == "objective":
            body = line.split(":", 1)[1] if ":" in line else line
            model.objective.update(_parse_terms(body.split()))
        elif section == "constraints":
            label, body = (line.split(":", 1) + [""])[:2] if ":" in line else ("", line)
            m = re.match(r"^(.*?)(<=|>=|=)(.*)$", body.strip())
            if not m:
                raise ValueError(f"constraint without a relation: {raw!r}")
            lhs, sense, rhs = m.groups()
            model.constraints.append(
                (label.strip(), _parse_terms(lhs.split()), sense, float(rhs)))
        elif section == "bounds":
            m = re.match(r"^(\S+)\s*<=\s*(\S+)\s*<=\s*(\S+)$", line)
            if m:
                lo, name, hi = m.groups()
                model.bounds[name] = (float(lo), float(hi))
                continue
            m = re.match(r"^(\S+)\s*(<=|>=|=)\s*(\S+)$", line)
            if not m:
                raise ValueError(f"unsupported bounds line: {raw!r}")
            a, sense, b = m.groups()
            if _NUM.match(a):
                name, lo, hi = b, None, None
                val = float(a)
                lo, hi = (val, None) if sense == "<=" else (None, val)
                if sense == "=":
                    lo = hi = val
            else:
                name = a
                val = float(b)
                lo, hi = (None, val) if sense == "<=" else (val, None)
                if sense == "=":
                    lo = hi = val
            old = model.bounds.get(name, (None, None))
            model.bounds[name] = (lo if lo is not None else old[0],
                                  hi if hi is not None else old[1])
        elif section == "binary":
            model.binary.extend(line.split())
        elif section == "general":
            model.general.extend(line.split())
        elif section is None:
            raise ValueError(f"content before any section header: {raw!r}")
    return model


def solve(model: LpModel, time_limit: float | None = None):
    import numpy as np
    from scipy import optimize, sparse

    names = model.variables()
    idx = {n: i for i, n in enumerate(names)}
    n = len(names)

    c = np.zeros(n)
    for name, coef in model.objective.items():
        c[idx[name]] = coef

    lo = np.zeros(n)
    hi = np.full(n, np.inf)
    integrality = np.zeros(n)
    for name in model.general:
        integrality[idx[name]] = 1
    for name in model.binary:
        integrality[idx[name]] = 1
        hi[idx[name]] = 1.0
    for name, (blo, bhi) in model.bounds.items():
        if blo is not None:
            lo[idx[name]] = blo
        if bhi is not None:
            hi[idx[name]] = bhi

    rows, cols, vals = [], [], []
    con_lo, con_hi = [], []
    for i, (_, terms, sense, rhs) in enumerate(model.constraints):
        for name, coef in terms.items():
            rows.append(i)
            cols.append(idx[name])
            vals.append(coef)
        if sense == "<=":
            con_lo.append(-np.inf)
            con_hi.append(rhs)
        elif sense == ">=":
            con_lo.append(rhs)
            con_hi.append(np.inf)
        else:
            con_lo.append(rhs)
            con_hi.append(rhs)

    kwargs = {}
    if time_limit is not None:
        kwargs["options"] = {"time_limit": float(time_limit)}
    constraints = None
    if model.constraints:
        a = sparse.csr_matrix((vals, (rows, cols)),
                              shape=(len(model.constraints), n))
        constraints = optimize.LinearConstraint(a, con_lo, con_hi)
    res = optimize.milp(
        c=c,
        constraints=constraints,
        integrality=integrality,
        bounds=optimize.Bounds(lo, hi),
        **kwargs,
    )
    status = {0: "optimal", 1: "timeout", 2: "infeasible"}.get(res.status, "error")
    values = {}
    if res.x is not None:
        values = {name: float(res.x[idx[name]]) for name in names}
    return status, values


def main(argv: list) -> int:
    paths = []
    time_limit = None
    i = 0
    while i < len(argv):
        if argv[i] == "--time-limit":
            time_limit = float(argv[i + 1])
            i += 2
        else:
            paths.append(argv[i])
            i += 1
    if len(paths) != 2:
        print(__doc__, file=sys.stderr)
        return 2
    lp_path, sol_path = paths
    with open(lp_path, "r", encoding="utf-8") as fh:
        model = parse_lp(fh.read())
    try:
        status, values = solve(model, time_limit)
    except Exception as exc:  # report, do not traceback: callers parse the file
        with open(sol_path, "w", encoding="utf-8") as fh:
            fh.write("status error\n")
        print(f"solve failed: {exc}", file=sys.stderr)
        return 1
    with open(sol_path, "w", encoding="utf-8") as fh:
        fh.write(f"status {status}\n")
        for name in sorted(values):
            fh.write(f"{name} {values[name]:.10g}\n")
    return 0


if __name__ == "__main__":
    sys.exit(main(sys.argv[1:]))
