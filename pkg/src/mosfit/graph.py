"""Computational graphs of primitive numeric operations.

A :class:`Graph` is an immutable, topologically ordered list of nodes. Leaves
are constants, named parameters and named inputs; interior nodes apply one
primitive operation. :func:`forward` evaluates the graph and records every
node value on a :class:`Tape`; :func:`backward` walks the tape in reverse and
returns the derivative of the outputs with respect to every parameter leaf.

Input values may be Python floats or numpy arrays. With arrays each element
is an independent bias point ("lane"); the tape then holds one value per lane
for every node and the returned derivatives are per lane.

Two control-flow constructs are supported. ``SELECT`` picks one of two
operands by the sign of a predicate and records the choice as a flag.
``LOOP`` repeatedly applies a body graph to a carried state while a predicate
graph evaluates positive, pushing one entry per iteration onto a stack that
the backward pass pops in reverse order.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field
from typing import Any, Iterable, Mapping, NamedTuple, Sequence

import numpy as np

__all__ = [
    "CONST", "PARAM", "INPUT", "ADD", "SUB", "MUL", "DIV", "NEG", "EXP", "LN",
    "SQRT", "POWC", "POW", "SUM", "SELECT", "LOOP", "CHECK", "OP_NAMES",
    "GraphError", "DomainError", "NonConvergenceError", "TapeError",
    "NodeSpec", "Loop", "Graph", "Tape", "build", "forward", "backward",
    "graph_stats", "dump_edges", "GraphBuilder", "Sym",
    "exp", "log", "sqrt", "where", "maximum", "minimum", "total", "check",
]

# Node kinds. Plain ints keep the interpreter loop cheap.
CONST, PARAM, INPUT = 0, 1, 2
ADD, SUB, MUL, DIV, NEG = 3, 4, 5, 6, 7
EXP, LN, SQRT, POWC, POW = 8, 9, 10, 11, 12
SUM, SELECT, LOOP, CHECK = 13, 14, 15, 16

OP_NAMES = {
    CONST: "const", PARAM: "param", INPUT: "input", ADD: "add", SUB: "sub",
    MUL: "mul", DIV: "div", NEG: "neg", EXP: "exp", LN: "ln", SQRT: "sqrt",
    POWC: "powc", POW: "pow", SUM: "sum", SELECT: "select", LOOP: "loop",
    CHECK: "check",
}
_OP_BY_NAME = {v: k for k, v in OP_NAMES.items()}

_ARITY = {
    CONST: (0, 0), PARAM: (0, 0), INPUT: (0, 0),
    ADD: (2, 2), SUB: (2, 2), MUL: (2, 2), DIV: (2, 2), POW: (2, 2),
    NEG: (1, 1), EXP: (1, 1), LN: (1, 1), SQRT: (1, 1), POWC: (1, 1),
    SUM: (1, None), SELECT: (3, 3), CHECK: (3, 3), LOOP: (1, None),
}

DEFAULT_LOOP_CAP = 100


class GraphError(ValueError):
    """Malformed graph specification, or a tape that does not match its graph."""


class DomainError(ArithmeticError):
    """An operation was evaluated outside its domain."""

    def __init__(self, node: int, label: Any, message: str):
        self.node = node
        self.label = label
        super().__init__(f"node {node} ({label!r}): {message}")


class NonConvergenceError(ArithmeticError):
    """A loop hit its iteration cap, or a convergence check failed."""

    def __init__(self, node: int, label: Any, message: str):
        self.node = node
        self.label = label
        super().__init__(f"node {node} ({label!r}): {message}")


class TapeError(RuntimeError):
    """Backward pass over a tape whose loop stacks were already consumed."""


class _Domain(Exception):
    pass


class _Diverged(Exception):
    pass


class NodeSpec(NamedTuple):
    """One node declaration for :func:`build`.

    ``key`` is any hashable label; ``args`` lists operand keys in order.
    ``attr`` carries the constant value, leaf name, exponent, :class:`Loop`
    or check tolerance depending on ``op``.
    """

    key: Any
    op: int
    args: tuple = ()
    attr: Any = None


@dataclass(frozen=True)
class Loop:
    """Body and predicate of a ``LOOP`` node.

    Both graphs read the carried value through the input leaf named ``state``
    and the loop-invariant operands through ``captured``. The body's single
    output becomes the next state; iteration continues while the predicate
    output is strictly positive.
    """

    body: "Graph"
    predicate: "Graph"
    state: str = "state"
    captured: tuple = ()
    max_iter: int = DEFAULT_LOOP_CAP

    def __post_init__(self):
        allowed = {self.state, *self.captured}
        for name, g in (("body", self.body), ("predicate", self.predicate)):
            if len(g.outputs) != 1:
                raise GraphError(f"loop {name} must have exactly one output")
            extra = set(g.inputs) - allowed
            if extra:
                raise GraphError(f"loop {name} reads unbound inputs {sorted(extra)}")
        if self.max_iter < 1:
            raise GraphError("loop iteration cap must be positive")


@dataclass(frozen=True, eq=False)
class Graph:
    """Validated computational graph. Build with :func:`build` or :class:`GraphBuilder`."""

    ops: tuple
    args: tuple
    attrs: tuple
    labels: tuple
    outputs: tuple
    params: tuple
    inputs: tuple
    name: str = ""
    _param_nodes: Mapping = field(default_factory=dict, repr=False)
    _input_nodes: Mapping = field(default_factory=dict, repr=False)

    def __len__(self) -> int:
        return len(self.ops)

    def node_id(self, label) -> int:
        return self.labels.index(label)


def build(specs: Iterable[NodeSpec], outputs: Sequence, name: str = "") -> Graph:
    """Validate node specs and return a topologically ordered :class:`Graph`.

    Specs may be given in any order. Ties in the topological sort are broken
    by declaration order, so the result is deterministic.
    """
    specs = [NodeSpec(*s) for s in specs]
    index = {}
    for pos, s in enumerate(specs):
        if s.key in index:
            raise GraphError(f"duplicate node key {s.key!r}")
        if s.op not in _ARITY:
            raise GraphError(f"node {s.key!r}: unknown operation {s.op!r}")
        lo, hi = _ARITY[s.op]
        if len(s.args) < lo or (hi is not None and len(s.args) > hi):
            raise GraphError(f"node {s.key!r}: {OP_NAMES[s.op]} takes "
                             f"{lo}{'' if hi == lo else '+'} operands, got {len(s.args)}")
        index[s.key] = pos

    leaf_names = {PARAM: set(), INPUT: set()}
    for s in specs:
        if s.op in leaf_names:
            if not isinstance(s.attr, str) or not s.attr:
                raise GraphError(f"node {s.key!r}: leaf needs a non-empty name")
            if s.attr in leaf_names[s.op]:
                raise GraphError(f"duplicate {OP_NAMES[s.op]} leaf name {s.attr!r}")
            leaf_names[s.op].add(s.attr)
        elif s.op == CONST:
            if not math.isfinite(float(s.attr)):
                raise GraphError(f"node {s.key!r}: constant must be finite")
        elif s.op == LOOP:
            if not isinstance(s.attr, Loop):
                raise GraphError(f"node {s.key!r}: loop needs a Loop attribute")
            if len(s.args) != 1 + len(s.attr.captured):
                raise GraphError(f"node {s.key!r}: loop takes the initial state "
                                 f"plus {len(s.attr.captured)} captured operands")
        for a in s.args:
            if a not in index:
                raise GraphError(f"node {s.key!r}: dangling operand {a!r}")
    for o in outputs:
        if o not in index:
            raise GraphError(f"dangling output {o!r}")

    # Kahn's algorithm with a declaration-order heap.
    n = len(specs)
    pending = [0] * n
    users = [[] for _ in range(n)]
    for pos, s in enumerate(specs):
        for a in set(s.args):
            pending[pos] += 1
            users[index[a]].append(pos)
    ready = [pos for pos in range(n) if pending[pos] == 0]
    heapq.heapify(ready)
    order = []
    while ready:
        pos = heapq.heappop(ready)
        order.append(pos)
        for u in users[pos]:
            pending[u] -= 1
            if pending[u] == 0:
                heapq.heappush(ready, u)
    if len(order) != n:
        stuck = [specs[p].key for p in range(n) if pending[p] > 0]
        raise GraphError(f"cycle outside a loop block through {stuck[:8]!r}")

    new_id = {specs[pos].key: i for i, pos in enumerate(order)}
    ops, args, attrs, labels = [], [], [], []
    params, inputs, pnodes, inodes = [], [], {}, {}
    for i, pos in enumerate(order):
        s = specs[pos]
        ops.append(s.op)
        args.append(tuple(new_id[a] for a in s.args))
        attr = s.attr
        if s.op == CONST:
            attr = float(attr)
        elif s.op == PARAM:
            params.append(attr)
            pnodes[attr] = i
        elif s.op == INPUT:
            inputs.append(attr)
            inodes[attr] = i
        elif s.op == LOOP:
            for sub in (attr.body, attr.predicate):
                for p in sub.params:
                    if p not in pnodes and p not in params:
                        params.append(p)
        attrs.append(attr)
        labels.append(s.key)
    return Graph(tuple(ops), tuple(args), tuple(attrs), tuple(labels),
                 tuple(new_id[o] for o in outputs), tuple(params), tuple(inputs),
                 name, pnodes, inodes)


# ---------------------------------------------------------------------------
# forward rules


def _div(x, y):
    if np.any(y == 0):
        raise _Domain("division by zero")
    return x / y


def _exp(x):
    y = np.exp(x)
    if np.any(np.isinf(y)):
        raise _Domain("exp overflow")
    return y


def _ln(x):
    if np.any(x <= 0):
        raise _Domain("ln of non-positive value")
    return np.log(x)


def _sqrt(x):
    if np.any(x < 0):
        raise _Domain("sqrt of negative value")
    return np.sqrt(x)


def _powc(x, c):
    if c != int(c) and np.any(x < 0):
        raise _Domain(f"non-integer power {c} of negative value")
    if c < 0 and np.any(x == 0):
        raise _Domain(f"negative power {c} of zero")
    y = x ** c
    if np.any(np.isinf(y)):
        raise _Domain("power overflow")
    return y


def _pow(x, y):
    if np.any(x <= 0):
        raise _Domain("variable-exponent power needs a positive base")
    z = x ** y
    if np.any(np.isinf(z)):
        raise _Domain("power overflow")
    return z


FORWARD_BINARY = {
    ADD: lambda x, y: x + y,
    SUB: lambda x, y: x - y,
    MUL: lambda x, y: x * y,
    DIV: _div,
    POW: _pow,
}
FORWARD_UNARY = {
    NEG: lambda x: -x,
    EXP: _exp,
    LN: _ln,
    SQRT: _sqrt,
}

# ---------------------------------------------------------------------------
# adjoint rules: (adjoint, operand values..., node value) -> operand adjoints


def _vjp_div(g, x, y, out):
    gy = g / y
    return gy, -gy * out


def _vjp_pow(g, x, y, out):
    return g * y * out / x, g * out * np.log(x)


def _vjp_sqrt(g, x, out):
    zero = out == 0
    if np.any(zero):
        if np.any(zero & (g != 0)):
            raise _Domain("derivative of sqrt at zero")
        return np.where(zero, 0.0, g / np.where(zero, 1.0, 2.0 * out))
    return g / (2.0 * out)


ADJOINT_BINARY = {
    ADD: lambda g, x, y, out: (g, g),
    SUB: lambda g, x, y, out: (g, -g),
    MUL: lambda g, x, y, out: (g * y, g * x),
    DIV: _vjp_div,
    POW: _vjp_pow,
}
ADJOINT_UNARY = {
    NEG: lambda g, x, out: -g,
    EXP: lambda g, x, out: g * out,
    LN: lambda g, x, out: g / x,
    SQRT: _vjp_sqrt,
}


class Tape:
    """Per-evaluation record of node values, select flags and loop stacks."""

    __slots__ = ("graph", "values", "flags", "loop_stacks", "loop_counts")

    def __init__(self, graph: Graph, values: list):
        self.graph = graph
        self.values = values
        self.flags: dict = {}
        self.loop_stacks: dict = {}
        self.loop_counts: dict = {}

    def value(self, label):
        return self.values[self.graph.node_id(label)]


def _is_array(v) -> bool:
    return isinstance(v, np.ndarray) and v.ndim > 0


def _coerce(name, v):
    if isinstance(v, (np.ndarray, list, tuple)):
        a = np.asarray(v, dtype=float)
        if not np.all(np.isfinite(a)):
            raise ValueError(f"binding {name!r} is not finite")
        return a if a.ndim else float(a)
    f = float(v)
    if not math.isfinite(f):
        raise ValueError(f"binding {name!r} is not finite")
    return f


def _run(g: Graph, params: Mapping, inputs: Mapping) -> Tape:
    ops, args, attrs = g.ops, g.args, g.attrs
    vals = [None] * len(ops)
    tape = Tape(g, vals)
    i = 0
    try:
        for i, op in enumerate(ops):
            a = args[i]
            if op == MUL or op == ADD or op == SUB or op == DIV or op == POW:
                vals[i] = FORWARD_BINARY[op](vals[a[0]], vals[a[1]])
            elif op == CONST:
                vals[i] = attrs[i]
            elif op == PARAM:
                vals[i] = params[attrs[i]]
            elif op == INPUT:
                vals[i] = inputs[attrs[i]]
            elif op == POWC:
                vals[i] = _powc(vals[a[0]], attrs[i])
            elif op == SUM:
                acc = vals[a[0]]
                for j in a[1:]:
                    acc = acc + vals[j]
                vals[i] = acc
            elif op == SELECT:
                flag = vals[a[0]] > 0
                tape.flags[i] = flag
                vals[i] = np.where(flag, vals[a[1]], vals[a[2]]) \
                    if _is_array(flag) else (vals[a[1]] if flag else vals[a[2]])
                if isinstance(vals[i], np.ndarray) and vals[i].ndim == 0:
                    vals[i] = float(vals[i])
            elif op == CHECK:
                tol = attrs[i]
                bad = np.abs(vals[a[1]]) > tol * np.maximum(1.0, np.abs(vals[a[2]]))
                if np.any(bad):
                    worst = float(np.max(np.abs(vals[a[1]])))
                    raise _Diverged(f"residual {worst:.3g} exceeds tolerance {tol:g}")
                vals[i] = vals[a[0]]
            elif op == LOOP:
                vals[i] = _loop_forward(tape, i, attrs[i], params,
                                        [vals[j] for j in a])
            else:
                vals[i] = FORWARD_UNARY[op](vals[a[0]])
    except _Domain as exc:
        raise DomainError(i, g.labels[i], str(exc)) from None
    except _Diverged as exc:
        raise NonConvergenceError(i, g.labels[i], str(exc)) from None
    return tape


def _loop_forward(tape: Tape, i: int, spec: Loop, params, operands):
    env = dict(zip(spec.captured, operands[1:]))
    state = operands[0]
    stack = []
    lanes = _is_array(state) or any(_is_array(v) for v in operands[1:])
    while True:
        env[spec.state] = state
        ptape = _run(spec.predicate, params, env)
        flag = ptape.values[spec.predicate.outputs[0]] > 0
        if not np.any(flag):
            break
        if len(stack) >= spec.max_iter:
            raise _Diverged(f"loop exceeded {spec.max_iter} iterations")
        btape = _run(spec.body, params, env)
        new = btape.values[spec.body.outputs[0]]
        if lanes:
            flag = np.broadcast_to(flag, np.shape(new) or np.shape(state))
            state = np.where(flag, new, state)
        else:
            flag = bool(flag)
            state = new
        stack.append((flag, btape))
    tape.loop_stacks[i] = stack
    tape.loop_counts[i] = len(stack)
    return state


def forward(g: Graph, params: Mapping[str, Any], inputs: Mapping[str, Any] | None = None):
    """Evaluate ``g`` and return ``(outputs, tape)``.

    ``outputs`` is a list with one value per designated output node.
    Raises :class:`DomainError` naming the offending node when an operation
    leaves its domain, and :class:`NonConvergenceError` when a loop exceeds
    its cap or a convergence check fails.
    """
    inputs = inputs or {}
    missing = [p for p in g.params if p not in params]
    missing += [x for x in g.inputs if x not in inputs]
    if missing:
        raise KeyError(f"unbound leaves: {', '.join(missing)}")
    pv = {p: _coerce(p, params[p]) for p in g.params}
    iv = {x: _coerce(x, inputs[x]) for x in g.inputs}
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        tape = _run(g, pv, iv)
    return [tape.values[o] for o in g.outputs], tape


def _accumulate(adj, j, g):
    cur = adj[j]
    adj[j] = g if cur is None else cur + g


def _reverse(g: Graph, tape: Tape, seeds: Sequence):
    """Core reverse sweep; returns (param adjoints, input adjoints)."""
    ops, args, attrs, vals = g.ops, g.args, g.attrs, tape.values
    adj = [None] * len(ops)
    for o, s in zip(g.outputs, seeds):
        _accumulate(adj, o, s)
    pgrad, igrad = {}, {}
    i = len(ops)
    try:
        for i in range(len(ops) - 1, -1, -1):
            ga = adj[i]
            if ga is None:
                continue
            op = ops[i]
            a = args[i]
            if op == MUL or op == ADD or op == SUB or op == DIV or op == POW:
                dx, dy = ADJOINT_BINARY[op](ga, vals[a[0]], vals[a[1]], vals[i])
                _accumulate(adj, a[0], dx)
                _accumulate(adj, a[1], dy)
            elif op == PARAM:
                name = attrs[i]
                pgrad[name] = ga if name not in pgrad else pgrad[name] + ga
            elif op == INPUT:
                igrad[attrs[i]] = ga
            elif op == CONST:
                pass
            elif op == POWC:
                c = attrs[i]
                _accumulate(adj, a[0], ga * c * vals[a[0]] ** (c - 1.0))
            elif op == SUM:
                for j in a:
                    _accumulate(adj, j, ga)
            elif op == SELECT:
                flag = tape.flags[i]
                if _is_array(flag):
                    _accumulate(adj, a[1], np.where(flag, ga, 0.0))
                    _accumulate(adj, a[2], np.where(flag, 0.0, ga))
                else:
                    _accumulate(adj, a[1] if flag else a[2], ga)
            elif op == CHECK:
                _accumulate(adj, a[0], ga)
            elif op == LOOP:
                _loop_backward(tape, i, attrs[i], ga, a, adj, pgrad)
            else:
                _accumulate(adj, a[0], ADJOINT_UNARY[op](ga, vals[a[0]], vals[i]))
    except _Domain as exc:
        raise DomainError(i, g.labels[i], str(exc)) from None
    return pgrad, igrad


def _loop_backward(tape, i, spec: Loop, ga, operands, adj, pgrad):
    stack = tape.loop_stacks[i]
    if len(stack) != tape.loop_counts[i]:
        raise TapeError("loop stack already consumed; re-run forward before backward")
    state_adj = ga
    cap_adj = [0.0] * len(spec.captured)
    while stack:
        flag, btape = stack.pop()
        if _is_array(flag):
            seed = np.where(flag, state_adj, 0.0)
        else:
            seed = state_adj if flag else 0.0
        bp, bi = _reverse(spec.body, btape, [seed])
        through = bi.get(spec.state, 0.0)
        state_adj = np.where(flag, through, state_adj) if _is_array(flag) else through
        for k, name in enumerate(spec.captured):
            if name in bi:
                cap_adj[k] = cap_adj[k] + bi[name]
        for name, v in bp.items():
            pgrad[name] = v if name not in pgrad else pgrad[name] + v
    _accumulate(adj, operands[0], state_adj)
    for j, v in zip(operands[1:], cap_adj):
        _accumulate(adj, j, v)


def backward(g: Graph, tape: Tape, seed=1.0) -> dict:
    """Reverse sweep over ``tape``; returns d(outputs . seed)/d(param) per parameter.

    ``seed`` is one value per output (a scalar is used for a single-output
    graph). With lane inputs the seed and the returned entries are per lane.
    Parameters with no path to the outputs get exactly ``0.0``.
    """
    if tape.graph is not g:
        raise GraphError("tape was not produced by this graph")
    if np.ndim(seed) == 0 or len(g.outputs) == 1 and not isinstance(seed, (list, tuple)):
        seeds = [seed]
    else:
        seeds = list(seed)
    if len(seeds) != len(g.outputs):
        raise GraphError(f"expected {len(g.outputs)} seeds, got {len(seeds)}")
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        pgrad, _ = _reverse(g, tape, seeds)
    return {p: pgrad.get(p, 0.0) for p in g.params}


def graph_stats(g: Graph) -> dict:
    """Edge and vertex counts, including the bodies of loop blocks."""
    edges = vertices = 0
    for op, a, attr in zip(g.ops, g.args, g.attrs):
        vertices += 1
        edges += len(a)
        if op == LOOP:
            for sub in (attr.body, attr.predicate):
                s = graph_stats(sub)
                edges += s["edges"]
                vertices += s["vertices"]
            edges += 1  # feedback edge
    return {"edges": edges, "vertices": vertices}


def dump_edges(g: Graph) -> str:
    """One ``src -> dst opkind`` line per edge."""
    lines = []
    for i, (op, a) in enumerate(zip(g.ops, g.args)):
        for j in a:
            lines.append(f"{j} -> {i} {OP_NAMES[op]}")
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# expression builder


class Sym:
    """Handle to a node under construction; supports arithmetic operators."""

    __slots__ = ("builder", "key")

    def __init__(self, builder: "GraphBuilder", key):
        self.builder = builder
        self.key = key

    def _lift(self, other):
        return self.builder.lift(other)

    def __add__(self, o):
        return self.builder.op(ADD, self, self._lift(o))

    def __radd__(self, o):
        return self.builder.op(ADD, self._lift(o), self)

    def __sub__(self, o):
        return self.builder.op(SUB, self, self._lift(o))

    def __rsub__(self, o):
        return self.builder.op(SUB, self._lift(o), self)

    def __mul__(self, o):
        return self.builder.op(MUL, self, self._lift(o))

    def __rmul__(self, o):
        return self.builder.op(MUL, self._lift(o), self)

    def __truediv__(self, o):
        return self.builder.op(DIV, self, self._lift(o))

    def __rtruediv__(self, o):
        return self.builder.op(DIV, self._lift(o), self)

    def __neg__(self):
        return self.builder.op(NEG, self)

    def __pow__(self, o):
        if isinstance(o, Sym):
            return self.builder.op(POW, self, o)
        return self.builder.op(POWC, self, attr=float(o))

    def __rpow__(self, o):
        return self.builder.op(POW, self._lift(o), self)

    def __repr__(self):
        return f"Sym({self.key!r})"


class GraphBuilder:
    """Incrementally declares nodes; leaves are shared by name, constants by value."""

    def __init__(self, name: str = ""):
        self.name = name
        self.specs: list[NodeSpec] = []
        self._leaves: dict = {}
        self._consts: dict = {}

    def _emit(self, op, args=(), attr=None, label=None) -> Sym:
        key = label if label is not None else len(self.specs)
        self.specs.append(NodeSpec(key, op, tuple(a.key for a in args), attr))
        return Sym(self, key)

    def lift(self, v) -> Sym:
        if isinstance(v, Sym):
            if v.builder is not self:
                raise GraphError("operand belongs to a different builder")
            return v
        return self.const(v)

    def const(self, value: float) -> Sym:
        value = float(value)
        if value not in self._consts:
            self._consts[value] = self._emit(CONST, attr=value)
        return self._consts[value]

    def param(self, name: str) -> Sym:
        return self._leaf(PARAM, name)

    def input(self, name: str) -> Sym:
        return self._leaf(INPUT, name)

    def _leaf(self, op, name):
        if (op, name) not in self._leaves:
            self._leaves[(op, name)] = self._emit(op, attr=name, label=f"{OP_NAMES[op]}:{name}")
        return self._leaves[(op, name)]

    def op(self, op: int, *operands, attr=None) -> Sym:
        return self._emit(op, tuple(self.lift(o) for o in operands), attr)

    def loop(self, spec: Loop, init, *captured) -> Sym:
        return self._emit(LOOP, (self.lift(init), *(self.lift(c) for c in captured)), spec)

    def build(self, *outputs: Sym) -> Graph:
        return build(self.specs, [self.lift(o).key for o in outputs], self.name)


def exp(x: Sym) -> Sym:
    return x.builder.op(EXP, x)


def log(x: Sym) -> Sym:
    return x.builder.op(LN, x)


def sqrt(x: Sym) -> Sym:
    return x.builder.op(SQRT, x)


def where(pred: Sym, a, b) -> Sym:
    """``a`` where ``pred > 0`` else ``b``; the predicate carries no derivative."""
    return pred.builder.op(SELECT, pred, a, b)


def maximum(x: Sym, y) -> Sym:
    return where(x - y, x, y)


def minimum(x: Sym, y) -> Sym:
    return where(x - y, y, x)


def total(*xs: Sym) -> Sym:
    return xs[0].builder.op(SUM, *xs)


def check(x: Sym, residual: Sym, scale, tol: float) -> Sym:
    """Pass ``x`` through, failing the forward pass if |residual| > tol*max(1, |scale|)."""
    return x.builder.op(CHECK, x, residual, scale, attr=float(tol))


def op_code(name: str) -> int:
    return _OP_BY_NAME[name]
