"""Textual solver interface: LP-format writing, solution-file parsing.

The LP writer emits a deterministic CPLEX-LP subset: objective terms
ordered by variable name, constraints in creation order named c0..cN-1,
then Bounds / Binary / Generals sections ordered by name. All numbers are
integers and are printed without exponents.

Solution files are plain text: `name value` pairs separated by whitespace,
one per line. Blank lines and lines starting with `#` or `=` are ignored.
An optional `status <word>` line reports optimal / infeasible / timeout;
without one the result is taken as feasible. Variables not mentioned
default to 0. Values are kept as parsed; integrality is the decoder's
business, not the parser's.
"""

from __future__ import annotations

from dataclasses import dataclass

from .encode import MilpInstance
from .errors import MalformedLine, UnknownVariable

STATUSES = ("optimal", "feasible", "infeasible", "timeout", "error")


@dataclass
class SolveResult:
    status: str
    objective: int | None = None
    assignment: dict | None = None
    solve_seconds: float = 0.0


def _terms_text(terms: dict) -> str:
    parts = []
    for name in sorted(terms):
        coef = terms[name]
        if coef == 0:
            continue
        mag = abs(coef)
        body = name if mag == 1 else f"{mag} {name}"
        if not parts:
            parts.append(body if coef > 0 else f"- {body}")
        else:
            parts.append(f"+ {body}" if coef > 0 else f"- {body}")
    return " ".join(parts) if parts else "0"


def lp_text(m: MilpInstance) -> str:
    out = ["Minimize", f" obj: {_terms_text(m.objective)}", "Subject To"]
    rel = {"<=": "<=", ">=": ">=", "=": "="}
    for i, con in enumerate(m.constraints):
        out.append(f" c{i}: {_terms_text(con.terms)} {rel[con.sense]} {con.rhs}")
    bounds = []
    binaries = []
    generals = []
    for name in sorted(m.variables):
        v = m.variables[name]
        if v.binary:
            binaries.append(name)
        else:
            generals.append(name)
            bounds.append(f" {v.lo} <= {name} <= {v.hi}")
    if bounds:
        out.append("Bounds")
        out.extend(bounds)
    if binaries:
        out.append("Binary")
        out.extend(f" {n}" for n in binaries)
    if generals:
        out.append("Generals")
        out.extend(f" {n}" for n in generals)
    out.append("End")
    return "\n".join(out) + "\n"


def write_lp(m: MilpInstance, sink) -> None:
    data = lp_text(m)
    try:
        sink.write(data.encode("utf-8"))
    except TypeError:
        sink.write(data)


def read_solution(source, m: MilpInstance, tolerance: float = 1e-6) -> SolveResult:
    """Parse a solution file against an instance.

    Returns a SolveResult whose objective is re-evaluated from the parsed
    assignment; any objective claimed by the solver is ignored.
    """
    if isinstance(source, (bytes, bytearray)):
        text = source.decode("utf-8")
    elif hasattr(source, "read"):
        data = source.read()
        text = data.decode("utf-8") if isinstance(data, bytes) else data
    else:
        text = source

    status = "feasible"
    values: dict = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#") or line.startswith("="):
            continue
        parts = line.split()
        if parts[0] == "status":
            if len(parts) != 2 or parts[1] not in STATUSES:
                raise MalformedLine(f"line {lineno}: bad status line {raw!r}")
            status = parts[1]
            continue
        if len(parts) != 2:
            raise MalformedLine(f"line {lineno}: expected 'name value', got {raw!r}")
        name, tok = parts
        if name not in m.variables:
            raise UnknownVariable(f"line {lineno}: {name!r} is not an instance variable")
        try:
            values[name] = float(tok)
        except ValueError:
            raise MalformedLine(f"line {lineno}: bad numeric value {tok!r}") from None

    if status in ("infeasible", "timeout", "error"):
        return SolveResult(status=status)
    assignment = {name: values.get(name, 0.0) for name in m.variables}
    obj = m.evaluate_objective(assignment)
    return SolveResult(status=status, objective=round(obj), assignment=assignment)
