"""Branch-and-bound over the encoder's models.

LP relaxations come from the dense simplex kernel; branching fixes ReLU
indicator binaries (most-fractional first). Fixing z tightens the child's
variable bounds (z=1 pins vm to 0, z=0 pins vp to 0) instead of adding rows,
so LP size stays constant down the tree. A network-forward primal heuristic
runs at every feasible node. Single-threaded, deterministic node accounting.
"""

import heapq
import itertools
import math
import time
from dataclasses import dataclass

import numpy as np

from .encode import InputBox, assemble_trace, interval_bounds
from .lp import EQ, GE, LE, Constraint, LinearProgram, check_feasible, solve_lp

INT_TOL = 1e-6


@dataclass
class SolverConfig:
    time_limit_seconds: float = 1800.0
    abs_gap: float = 1e-6
    rel_gap: float = 0.0
    node_selection: str = "best-bound"  # with an initial depth-first dive
    branching: str = "most-fractional"
    seed: int = 0

    def __post_init__(self):
        if self.time_limit_seconds <= 0:
            raise ValueError("time_limit_seconds must be > 0")
        if self.abs_gap < 0 or self.rel_gap < 0:
            raise ValueError("gaps must be >= 0")


@dataclass
class SolveReport:
    status: str  # optimal | feasible-timeout | infeasible | no-incumbent-timeout
    incumbent_obj: float
    best_bound: float
    nodes: int
    wall_seconds: float
    incumbent_point: np.ndarray = None


def _objective_vector(model):
    c = np.zeros(model.num_vars)
    for j, v in model.objective.items():
        c[j] = v
    return c


def _z_to_neuron(model):
    mapping = {}
    for layer in model.neurons:
        for nv in layer:
            if nv.z is not None:
                mapping[nv.z] = nv
    return mapping


def solve(model, cfg, mlp=None, trace_log=None):
    """Maximize the model objective exactly (within gaps) or until timeout.

    mlp enables the forward-pass primal heuristic; trace_log, when given,
    receives one "node_id depth bound incumbent" line per processed node.
    """
    t0 = time.monotonic()
    sense_flip = model.objective_sense == "minimize"
    c = _objective_vector(model)
    if sense_flip:
        c = -c
    z_info = _z_to_neuron(model)
    z_cols = sorted(z_info)
    base_lo, base_hi = model.lower, model.upper
    gap_closed = lambda inc, bb: bb - inc <= cfg.abs_gap + cfg.rel_gap * abs(inc)

    incumbent = None
    inc_obj = -math.inf
    nodes = 0
    counter = itertools.count()
    # Nodes are (parent LP bound, fixings dict). Dive on a stack until the
    # first incumbent, then switch to best-bound on a heap.
    stack = [(math.inf, {})]
    heap = []
    timed_out = False

    def heur_point(lp_point):
        if mlp is None or not model.input_vars:
            return None
        x = lp_point[model.input_vars]
        return assemble_trace(model, mlp, x)

    while stack or heap:
        if time.monotonic() - t0 > cfg.time_limit_seconds:
            timed_out = True
            break
        if stack:
            bound_est, fix = stack.pop()
        else:
            neg_bound, _, fix = heapq.heappop(heap)
            bound_est = -neg_bound
        if bound_est <= inc_obj + cfg.abs_gap + cfg.rel_gap * abs(inc_obj):
            continue  # pruned by bound before solving
        lo = base_lo.copy()
        hi = base_hi.copy()
        for zj, val in fix.items():
            lo[zj] = hi[zj] = float(val)
            nv = z_info[zj]
            if val == 1 and nv.vm is not None:
                hi[nv.vm] = 0.0
            elif val == 0:
                hi[nv.vp] = 0.0
        lp = LinearProgram(model.num_vars, "maximize", c, lo, hi, model.constraints)
        sol = solve_lp(lp)
        nodes += 1
        node_id = nodes
        if trace_log is not None:
            trace_log.append(f"{node_id} {len(fix)} {bound_est} {inc_obj}")
        if sol.status != "optimal":
            continue  # infeasible node (unbounded cannot occur: box-bounded inputs)
        lp_obj = sol.objective
        if lp_obj <= inc_obj + cfg.abs_gap + cfg.rel_gap * abs(inc_obj):
            continue
        point = heur_point(sol.primal)
        if point is not None:
            obj = float(c @ point)
            if obj > inc_obj:
                incumbent, inc_obj = point, obj
        free = [j for j in z_cols if j not in fix]
        vals = sol.primal
        frac = [j for j in free if INT_TOL < vals[j] < 1.0 - INT_TOL]
        if not frac:
            if lp_obj > inc_obj:
                incumbent, inc_obj = sol.primal, lp_obj
            continue
        branch = min(frac, key=lambda j: (abs(vals[j] - 0.5), j))
        children = [(lp_obj, {**fix, branch: 0}), (lp_obj, {**fix, branch: 1})]
        if incumbent is None and cfg.node_selection != "pure-best-bound":
            # keep diving toward the branch value suggested by the LP
            first, second = (children if vals[branch] < 0.5 else children[::-1])
            stack.append(second)
            stack.append(first)
        else:
            for child in children:
                heapq.heappush(heap, (-child[0], next(counter), child[1]))
    # Flush the dive stack into the bound accounting on timeout.
    open_bounds = [b for b, _ in stack] + [-nb for nb, _, _ in heap]
    wall = time.monotonic() - t0
    if timed_out:
        best_bound = max([inc_obj] + open_bounds) if (incumbent is not None or open_bounds) else math.inf
        status = "feasible-timeout" if incumbent is not None else "no-incumbent-timeout"
    elif incumbent is None:
        return SolveReport("infeasible", None, -math.inf if not sense_flip else math.inf,
                           nodes, wall)
    else:
        best_bound = inc_obj
        status = "optimal"
    if sense_flip:
        inc_out = -inc_obj if incumbent is not None else None
        bb_out = -best_bound
    else:
        inc_out = inc_obj if incumbent is not None else None
        bb_out = best_bound
    return SolveReport(status, inc_out, bb_out, nodes, wall, incumbent)


def primal_heuristic(model, lp_point, mlp):
    """Feasible assignment from the LP point's input block via a forward pass.

    Returns (assignment, objective in the model's own sense).
    """
    x = np.asarray(lp_point, dtype=float)[model.input_vars]
    point = assemble_trace(model, mlp, x)
    c = _objective_vector(model)
    return point, float(c @ point)


def brute_force_verify(mlp, box, k, h, max_unstable=20):
    """Exact optimum of max y_h - y_k over the box by activation-pattern enumeration.

    Independent of the MIP encoder: each pattern is an LP built directly from
    the network layers (active: a = pre >= 0; inactive: a = 0, pre <= 0).
    """
    bounds = interval_bounds(mlp, box)
    unstable = [
        (li, j)
        for li in range(len(bounds.lo))
        for j in range(bounds.lo[li].size)
        if bounds.lo[li][j] < 0.0 < bounds.hi[li][j]
    ]
    if len(unstable) > max_unstable:
        raise ValueError(f"{len(unstable)} unstable ReLUs exceed the enumeration budget")
    unstable_set = set(unstable)
    forced = {}
    for li in range(len(bounds.lo)):
        for j in range(bounds.lo[li].size):
            if (li, j) not in unstable_set:
                forced[(li, j)] = bounds.lo[li][j] >= 0.0
    best = -math.inf
    for bits in itertools.product((False, True), repeat=len(unstable)):
        pattern = dict(forced)
        pattern.update(zip(unstable, bits))
        sol = _pattern_lp(mlp, box, k, h, pattern)
        if sol.status == "optimal" and sol.objective > best:
            best = sol.objective
    return best


def _pattern_lp(mlp, box, k, h, pattern):
    d = box.dim
    lower = list(box.lower)
    upper = list(box.upper)
    cons = []
    prev = list(range(d))
    nv = d
    for li, (W, b) in enumerate(mlp.layers[:-1]):
        nxt = []
        for j in range(W.shape[0]):
            a = nv
            nv += 1
            if pattern[(li, j)]:  # active: a = W.prev + b, a >= 0
                lower.append(0.0)
                upper.append(math.inf)
                row = {a: 1.0}
                for i, w in zip(prev, W[j]):
                    if w != 0.0:
                        row[i] = row.get(i, 0.0) - w
                cons.append(Constraint(row, EQ, b[j]))
            else:  # inactive: a = 0, W.prev + b <= 0
                lower.append(0.0)
                upper.append(0.0)
                row = {}
                for i, w in zip(prev, W[j]):
                    if w != 0.0:
                        row[i] = row.get(i, 0.0) + w
                cons.append(Constraint(row, LE, -b[j]))
            nxt.append(a)
        prev = nxt
    W, b = mlp.layers[-1]
    c = np.zeros(nv)
    const = 0.0
    for out, sign in ((h, 1.0), (k, -1.0)):
        for i, w in zip(prev, W[out]):
            c[i] += sign * w
        const += sign * b[out]
    lp = LinearProgram(nv, "maximize", c, np.array(lower), np.array(upper), cons)
    sol = solve_lp(lp)
    if sol.status == "optimal":
        sol.objective += const
    return sol
