"""MILP encoding of ReLU networks over an input box.

Per hidden neuron with pre-activation p = W.o + b the encoding introduces
vp, vm >= 0 and a binary z with

    vp - vm = W.o + b        (split equality)
    vp <= Mp * z             (big-M on the positive part)
    vm <= Mm * (1 - z)       (big-M on the negative part)

so vp = max(p, 0) and vm = max(-p, 0). The next layer consumes vp directly
(variable identification, no extra row). Per-neuron constants Mp/Mm come
from a bounds table built by interval propagation, optionally tightened by
per-neuron LPs over the continuous relaxation (OBBT). Neurons whose interval
lies on one side of zero need no binary and are encoded stably.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .lp import EQ, LE, Constraint, LinearProgram
from .nn import forward

STABLE_TOL = 0.0  # a neuron is stable only when its bound actually reaches 0


@dataclass
class InputBox:
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        self.lower = np.asarray(self.lower, dtype=float)
        self.upper = np.asarray(self.upper, dtype=float)
        if self.lower.shape != self.upper.shape or self.lower.ndim != 1:
            raise ValueError("box lower/upper must be 1-d and congruent")
        if np.any(self.lower > self.upper):
            raise ValueError("box lower must be <= upper")

    @property
    def dim(self):
        return self.lower.size


@dataclass
class BoundsTable:
    """Per hidden neuron pre-activation bounds; one (lo, hi) array pair per layer."""

    lo: list  # list of np.ndarray
    hi: list
    provenance: list  # "interval" | "obbt" per layer

    def __post_init__(self):
        for lo, hi in zip(self.lo, self.hi):
            if np.any(lo > hi + 1e-12):
                raise ValueError("bounds table has lo > hi")

    def m_plus(self, layer):
        return np.maximum(self.hi[layer], 0.0)

    def m_minus(self, layer):
        return np.maximum(-self.lo[layer], 0.0)

    def to_csv(self):
        lines = ["layer,neuron,lo,hi,provenance"]
        for li, (lo, hi) in enumerate(zip(self.lo, self.hi)):
            for j in range(lo.size):
                lines.append(f"{li},{j},{lo[j]!r},{hi[j]!r},{self.provenance[li]}")
        return "\n".join(lines) + "\n"


@dataclass
class NeuronVars:
    """Variable columns backing one hidden neuron's encoding."""

    kind: str  # "split" | "active" | "inactive"
    vp: int
    vm: int = None
    z: int = None


@dataclass
class MipModel:
    names: list
    lower: np.ndarray
    upper: np.ndarray
    is_binary: np.ndarray
    constraints: list
    objective_sense: str = "maximize"
    objective: dict = field(default_factory=dict)
    var_index: dict = field(default_factory=dict)
    # encoder metadata consumed by the solver and the primal heuristic
    input_vars: list = field(default_factory=list)
    output_vars: list = field(default_factory=list)
    neurons: list = field(default_factory=list)  # list per layer of list[NeuronVars]

    @property
    def num_vars(self):
        return len(self.names)

    @property
    def num_binaries(self):
        return int(self.is_binary.sum())

    def to_lp(self, lower=None, upper=None):
        """Continuous relaxation (binaries relaxed into their [0,1] bounds)."""
        c = np.zeros(self.num_vars)
        for j, v in self.objective.items():
            c[j] = v
        return LinearProgram(
            self.num_vars,
            self.objective_sense,
            c,
            self.lower if lower is None else lower,
            self.upper if upper is None else upper,
            self.constraints,
        )


def interval_bounds(mlp, box):
    """Pre-activation intervals from propagating the box through W+/W- splits."""
    if box.dim != mlp.input_dim:
        raise ValueError("box dimension does not match network input")
    lo, hi = box.lower, box.upper
    los, his = [], []
    for W, b in mlp.layers[:-1]:
        Wp, Wm = np.maximum(W, 0.0), np.minimum(W, 0.0)
        pre_lo = Wp @ lo + Wm @ hi + b
        pre_hi = Wp @ hi + Wm @ lo + b
        los.append(pre_lo)
        his.append(pre_hi)
        lo, hi = np.maximum(pre_lo, 0.0), np.maximum(pre_hi, 0.0)
    return BoundsTable(los, his, ["interval"] * len(los))


class _ModelBuilder:
    def __init__(self):
        self.names = []
        self.lower = []
        self.upper = []
        self.binary = []
        self.constraints = []

    def add_var(self, name, lo, hi, binary=False):
        self.names.append(name)
        self.lower.append(lo)
        self.upper.append(hi)
        self.binary.append(binary)
        return len(self.names) - 1

    def add_con(self, coeffs, relation, rhs):
        self.constraints.append(Constraint(dict(coeffs), relation, rhs))

    def finish(self, **meta):
        model = MipModel(
            names=self.names,
            lower=np.array(self.lower, dtype=float),
            upper=np.array(self.upper, dtype=float),
            is_binary=np.array(self.binary, dtype=bool),
            constraints=self.constraints,
            var_index={n: i for i, n in enumerate(self.names)},
            **meta,
        )
        return model


def encode_network(mlp, box, bounds, eliminate_stable=True):
    """Big-M MILP of the network over the box, using the given bounds table.

    With eliminate_stable=False every hidden neuron receives the full
    3-row encoding and a binary, matching the m binaries / n+2m continuous /
    3m rows per-layer accounting.
    """
    if box.dim != mlp.input_dim:
        raise ValueError("box dimension does not match network input")
    if len(bounds.lo) != len(mlp.layers) - 1:
        raise ValueError("bounds table does not match network depth")
    bld = _ModelBuilder()
    inputs = [bld.add_var(f"x_{i}", box.lower[i], box.upper[i]) for i in range(box.dim)]
    prev = inputs
    neurons = []
    for li, (W, b) in enumerate(mlp.layers[:-1]):
        if W.shape[0] != bounds.lo[li].size:
            raise ValueError(f"bounds table layer {li} width mismatch")
        layer = []
        nxt = []
        mp_arr, mm_arr = bounds.m_plus(li), bounds.m_minus(li)
        for j in range(W.shape[0]):
            lo_j, hi_j = bounds.lo[li][j], bounds.hi[li][j]
            mp, mm = mp_arr[j], mm_arr[j]
            if eliminate_stable and hi_j <= STABLE_TOL:
                vp = bld.add_var(f"vp_{li}_{j}", 0.0, 0.0)
                layer.append(NeuronVars("inactive", vp))
            elif eliminate_stable and lo_j >= -STABLE_TOL:
                vp = bld.add_var(f"vp_{li}_{j}", max(lo_j, 0.0), hi_j)
                row = {vp: 1.0}
                for i, w in zip(prev, W[j]):
                    if w != 0.0:
                        row[i] = row.get(i, 0.0) - w
                bld.add_con(row, EQ, b[j])
                layer.append(NeuronVars("active", vp))
            else:
                vp = bld.add_var(f"vp_{li}_{j}", 0.0, mp)
                vm = bld.add_var(f"vm_{li}_{j}", 0.0, mm)
                z = bld.add_var(f"z_{li}_{j}", 0.0, 1.0, binary=True)
                row = {vp: 1.0, vm: -1.0}
                for i, w in zip(prev, W[j]):
                    if w != 0.0:
                        row[i] = row.get(i, 0.0) - w
                bld.add_con(row, EQ, b[j])
                bld.add_con({vp: 1.0, z: -mp}, LE, 0.0)
                bld.add_con({vm: 1.0, z: mm}, LE, mm)
                layer.append(NeuronVars("split", vp, vm, z))
            nxt.append(layer[-1].vp)
        neurons.append(layer)
        prev = nxt
    W, b = mlp.layers[-1]
    outputs = []
    for j in range(W.shape[0]):
        y = bld.add_var(f"y_{j}", -math.inf, math.inf)
        row = {y: 1.0}
        for i, w in zip(prev, W[j]):
            if w != 0.0:
                row[i] = row.get(i, 0.0) - w
        bld.add_con(row, EQ, b[j])
        outputs.append(y)
    return bld.finish(input_vars=inputs, output_vars=outputs, neurons=neurons)


def _relaxation_prefix(mlp, box, bounds, upto_layer):
    """Continuous relaxation of layers < upto_layer, returning (lp, prev_vars).

    prev_vars are the variable columns feeding layer upto_layer.
    """
    bld = _ModelBuilder()
    prev = [bld.add_var(f"x_{i}", box.lower[i], box.upper[i]) for i in range(box.dim)]
    for li in range(upto_layer):
        W, b = mlp.layers[li]
        mp_arr, mm_arr = bounds.m_plus(li), bounds.m_minus(li)
        nxt = []
        for j in range(W.shape[0]):
            mp, mm = mp_arr[j], mm_arr[j]
            vp = bld.add_var(f"vp_{li}_{j}", 0.0, mp)
            if mp > 0.0 and mm > 0.0:
                vm = bld.add_var(f"vm_{li}_{j}", 0.0, mm)
                z = bld.add_var(f"z_{li}_{j}", 0.0, 1.0)
                row = {vp: 1.0, vm: -1.0}
                for i, w in zip(prev, W[j]):
                    if w != 0.0:
                        row[i] = row.get(i, 0.0) - w
                bld.add_con(row, EQ, b[j])
                bld.add_con({vp: 1.0, z: -mp}, LE, 0.0)
                bld.add_con({vm: 1.0, z: mm}, LE, mm)
            elif mm == 0.0:  # stably active: vp equals the pre-activation
                row = {vp: 1.0}
                for i, w in zip(prev, W[j]):
                    if w != 0.0:
                        row[i] = row.get(i, 0.0) - w
                bld.add_con(row, EQ, b[j])
                bld.lower[vp] = max(bounds.lo[li][j], 0.0)
            # mp == 0: stably inactive, vp already fixed in [0, 0]
            nxt.append(vp)
        prev = nxt
    model = bld.finish()
    return model, prev


def obbt_tighten(mlp, box, seed_bounds):
    """Tighten each neuron's pre-activation bounds with two LPs per neuron.

    Layers are processed in ascending order so every LP sees final bounds for
    all predecessor layers; results are intersected with the seed bounds.
    """
    from .lp import solve_lp

    los = [lo.copy() for lo in seed_bounds.lo]
    his = [hi.copy() for hi in seed_bounds.hi]
    table = BoundsTable(los, his, ["obbt"] * len(los))
    for li in range(len(mlp.layers) - 1):
        W, b = mlp.layers[li]
        model, prev = _relaxation_prefix(mlp, box, table, li)
        n = model.num_vars
        for j in range(W.shape[0]):
            c = np.zeros(n)
            for i, w in zip(prev, W[j]):
                c[i] += w
            for sense, pick in (("maximize", "hi"), ("minimize", "lo")):
                lp = LinearProgram(n, sense, c, model.lower, model.upper, model.constraints)
                sol = solve_lp(lp)
                if sol.status != "optimal":
                    raise RuntimeError(
                        f"OBBT relaxation {sol.status} at layer {li} neuron {j}"
                    )
                val = sol.objective + b[j]
                if pick == "hi":
                    his[li][j] = min(his[li][j], val)
                else:
                    los[li][j] = max(los[li][j], val)
            if los[li][j] > his[li][j]:  # numerical crossover at a fixed point
                mid = 0.5 * (los[li][j] + his[li][j])
                los[li][j] = his[li][j] = mid
    return table


def encode_adversarial(mlp, x, delta, k, h, bounds_mode="interval", clamp=True):
    """Adversarial model: maximize y_h - y_k over the delta-box around x.

    clamp intersects the box with [0, 1] (pixel domain); bounds_mode is
    "interval" or "obbt".
    """
    x = np.asarray(x, dtype=float)
    if delta < 0:
        raise ValueError("delta must be >= 0")
    if not (0 <= k < mlp.output_dim and 0 <= h < mlp.output_dim) or k == h:
        raise ValueError(f"invalid class pair ({k}, {h})")
    lo, hi = x - delta, x + delta
    if clamp:
        lo, hi = np.clip(lo, 0.0, 1.0), np.clip(hi, 0.0, 1.0)
    box = InputBox(lo, hi)
    bounds = interval_bounds(mlp, box)
    if bounds_mode == "obbt":
        bounds = obbt_tighten(mlp, box, bounds)
    elif bounds_mode != "interval":
        raise ValueError(f"unknown bounds mode {bounds_mode!r}")
    model = encode_network(mlp, box, bounds)
    model.objective = {model.output_vars[h]: 1.0, model.output_vars[k]: -1.0}
    model.objective_sense = "maximize"
    return model


def assemble_trace(model, mlp, x):
    """Full feasible assignment induced by input x (clipped to the box)."""
    lo = model.lower[model.input_vars]
    hi = model.upper[model.input_vars]
    x = np.clip(np.asarray(x, dtype=float), lo, hi)
    logits, preacts = forward(mlp, x)
    point = np.zeros(model.num_vars)
    point[model.input_vars] = x
    for li, layer in enumerate(model.neurons):
        for j, nv in enumerate(layer):
            p = preacts[li][j]
            if nv.kind == "inactive":
                continue  # vp pinned at 0
            point[nv.vp] = max(p, 0.0)
            if nv.kind == "split":
                point[nv.vm] = max(-p, 0.0)
                point[nv.z] = 1.0 if p > 0 else 0.0
    point[model.output_vars] = logits
    return point


# ---------------------------------------------------------------------------
# LP-file text format (Maximize / Subject To / Bounds / Binaries sections).


def _num(v):
    return repr(float(v))


def _expr(coeffs, names):
    parts = []
    for j, c in coeffs.items():
        sign = "-" if c < 0 else "+"
        parts.append(f"{sign} {_num(abs(c))} {names[j]}")
    if not parts:
        return "0"
    text = " ".join(parts)
    return text[2:] if text.startswith("+ ") else text


def write_lp(model):
    """Deterministic LP-format text; re-parsing our output is byte-stable.

    Bounds and Binaries are listed in order of first appearance in the
    document (objective, then constraints), which is exactly the variable
    order parse_lp reconstructs — so write -> parse -> write is the identity.
    """
    order = {}
    for j in model.objective:
        order.setdefault(j, len(order))
    for con in model.constraints:
        for j in con.coeffs:
            order.setdefault(j, len(order))
    for j in range(model.num_vars):
        order.setdefault(j, len(order))
    columns = sorted(range(model.num_vars), key=order.__getitem__)

    lines = [model.objective_sense.capitalize()]
    lines.append(f" obj: {_expr(model.objective, model.names)}")
    lines.append("Subject To")
    for i, con in enumerate(model.constraints):
        lines.append(f" c{i}: {_expr(con.coeffs, model.names)} {con.relation} {_num(con.rhs)}")
    lines.append("Bounds")
    for j in columns:
        if model.is_binary[j]:
            continue
        name = model.names[j]
        lo, hi = model.lower[j], model.upper[j]
        if lo == -math.inf and hi == math.inf:
            lines.append(f" {name} free")
        elif lo == -math.inf:
            lines.append(f" {name} <= {_num(hi)}")
        elif hi == math.inf:
            lines.append(f" {name} >= {_num(lo)}")
        else:
            lines.append(f" {_num(lo)} <= {name} <= {_num(hi)}")
    binaries = [model.names[j] for j in columns if model.is_binary[j]]
    if binaries:
        lines.append("Binaries")
        lines.append(" " + " ".join(binaries))
    lines.append("End")
    return "\n".join(lines) + "\n"


def export_lp(model, path):
    with open(path, "w") as f:
        f.write(write_lp(model))


def _parse_terms(tokens, var_index, names, lower, upper, binary):
    coeffs = {}
    sign = 1.0
    i = 0
    while i < len(tokens):
        tok = tokens[i]
        if tok == "+":
            sign = 1.0
            i += 1
        elif tok == "-":
            sign = -1.0
            i += 1
        elif tok == "0" and len(tokens) == 1:
            i += 1
        else:
            coef = sign * float(tok)
            name = tokens[i + 1]
            if name not in var_index:
                var_index[name] = len(names)
                names.append(name)
                lower.append(0.0)
                upper.append(math.inf)
                binary.append(False)
            j = var_index[name]
            coeffs[j] = coeffs.get(j, 0.0) + coef
            sign = 1.0
            i += 2
    return coeffs


def parse_lp(text):
    """Parse LP text produced by write_lp back into a MipModel (no metadata)."""
    names, lower, upper, binary = [], [], [], []
    var_index = {}

    def _get_var(name):
        if name not in var_index:
            var_index[name] = len(names)
            names.append(name)
            lower.append(0.0)
            upper.append(math.inf)
            binary.append(False)
        return var_index[name]

    constraints = []
    objective = {}
    sense = None
    section = None
    for raw in text.splitlines():
        line = raw.strip()
        if not line:
            continue
        low = line.lower()
        if low in ("maximize", "minimize"):
            sense, section = low, "objective"
            continue
        if low == "subject to":
            section = "constraints"
            continue
        if low == "bounds":
            section = "bounds"
            continue
        if low == "binaries":
            section = "binaries"
            continue
        if low == "end":
            break
        if section == "objective":
            body = line.split(":", 1)[1] if ":" in line else line
            objective = _parse_terms(body.split(), var_index, names, lower, upper, binary)
        elif section == "constraints":
            body = line.split(":", 1)[1] if ":" in line else line
            tokens = body.split()
            rel_pos = next(i for i, t in enumerate(tokens) if t in ("<=", ">=", "="))
            coeffs = _parse_terms(tokens[:rel_pos], var_index, names, lower, upper, binary)
            constraints.append(Constraint(coeffs, tokens[rel_pos], float(tokens[rel_pos + 1])))
        elif section == "bounds":
            tokens = line.split()
            if tokens[-1] == "free":
                j = _get_var(tokens[0])
                lower[j], upper[j] = -math.inf, math.inf
            elif len(tokens) == 5:  # lo <= name <= hi
                j = _get_var(tokens[2])
                lower[j], upper[j] = float(tokens[0]), float(tokens[4])
            elif tokens[1] == "<=":
                j = _get_var(tokens[0])
                lower[j], upper[j] = -math.inf, float(tokens[2])
            else:
                j = _get_var(tokens[0])
                lower[j], upper[j] = float(tokens[2]), math.inf
        elif section == "binaries":
            for name in line.split():
                j = _get_var(name)
                binary[j] = True
                lower[j], upper[j] = 0.0, 1.0
    if sense is None:
        raise ValueError("LP text has no objective section")
    return MipModel(
        names=names,
        lower=np.array(lower, dtype=float),
        upper=np.array(upper, dtype=float),
        is_binary=np.array(binary, dtype=bool),
        constraints=constraints,
        objective_sense=sense,
        objective=objective,
        var_index=var_index,
    )
