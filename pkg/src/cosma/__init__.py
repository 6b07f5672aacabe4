"""Scratchpad-aware planning for dataflow graphs: joint operator
scheduling, contiguous memory allocation and tensor replacement under a
fixed on-chip budget, minimizing off-chip traffic."""

__version__ = "0.1.0"

from .graph import (  # noqa: F401
    BudgetTriple,
    DataflowGraph,
    Operator,
    Tensor,
    TimestepWindows,
    compute_budget_triple,
    compute_min_budget,
    compute_windows,
    load_graph,
    load_graph_path,
    save_graph,
)
from .encode import (  # noqa: F401
    FixedSchedule,
    MilpInstance,
    MinAccess,
    Mpmf,
    assignment_from_plan,
    decode,
    encode,
    instance_stats,
)
from .plan import (  # noqa: F401
    ExecutionPlan,
    PlanEvent,
    TrafficMetrics,
    plan_from_json,
    render_memory_map,
    validate,
)
from .lp import SolveResult, lp_text, read_solution, write_lp  # noqa: F401
from .solvers import SolverConfig, solve, solve_external, solve_internal  # noqa: F401
