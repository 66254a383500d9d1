"""Dense float64 tensors with reverse-mode automatic differentiation.

A ``Tensor`` wraps a numpy array. While a ``Tape`` is active, every primitive
that touches a gradient-requiring tensor records a vector-Jacobian closure;
``backward`` replays the tape once, in reverse, and returns a gradient map
keyed by tensor node id. Tapes are cheap, per-step objects: build one, run
the forward pass inside it, call ``backward``, throw it away.

Only two broadcasting forms are supported: equal shapes, and scalar with
tensor. Anything fancier raises ``ShapeError`` up front rather than silently
reducing along the wrong axis.
"""

from __future__ import annotations

import itertools
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import ContractError, DomainError, ShapeError

_node_ids = itertools.count()
_tape_stack: list["Tape"] = []


class Tensor:
    """A dense float64 array plus autodiff bookkeeping."""

    __slots__ = ("data", "requires_grad", "node_id")

    def __init__(self, data, requires_grad: bool = False):
        arr = np.asarray(data, dtype=np.float64)
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.node_id = next(_node_ids)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    def copy(self) -> "Tensor":
        return Tensor(self.data.copy(), requires_grad=self.requires_grad)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    # Operator sugar; all the work happens in the module-level primitives.
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(as_tensor(other), self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(self, other)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def sum(self, axis=None):
        return tsum(self, axis)

    def mean(self, axis=None):
        return tmean(self, axis)

    def max(self, axis=None):
        return tmax(self, axis)

    def reshape(self, shape):
        return reshape(self, shape)


class Tape:
    """Ordered record of primitive ops for one backward pass.

    Entries are (output node id, [(input node id, vjp closure), ...]).
    Inputs appear before the ops that consume them, so a single reverse
    sweep is a valid topological traversal. Replaying the same tape twice
    is allowed and bitwise deterministic; it is never mutated by backward.
    """

    __slots__ = ("entries",)

    def __init__(self):
        self.entries: list[tuple[int, list[tuple[int, Callable[[np.ndarray], np.ndarray]]]]] = []

    def __enter__(self) -> "Tape":
        _tape_stack.append(self)
        return self

    def __exit__(self, *exc):
        _tape_stack.pop()
        return False

    def __len__(self) -> int:
        return len(self.entries)


def active_tape() -> Tape | None:
    return _tape_stack[-1] if _tape_stack else None


def as_tensor(x) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=np.float64))


def _record(out: Tensor, vjps: list[tuple[Tensor, Callable[[np.ndarray], np.ndarray]]]) -> Tensor:
    tape = active_tape()
    needed = [(t.node_id, fn) for t, fn in vjps if t.requires_grad]
    if needed:
        out.requires_grad = True
        if tape is not None:
            tape.entries.append((out.node_id, needed))
    return out


class GradientMap:
    """Gradients from one backward pass, keyed by tensor node id.

    Tensors the loss does not depend on get an explicit zero gradient of
    the right shape when queried through ``wrt``.
    """

    def __init__(self, grads: dict[int, np.ndarray]):
        self._grads = grads

    def __contains__(self, key) -> bool:
        node_id = key.node_id if isinstance(key, Tensor) else key
        return node_id in self._grads

    def __getitem__(self, key) -> Tensor:
        node_id = key.node_id if isinstance(key, Tensor) else key
        return Tensor(self._grads[node_id])

    def wrt(self, t: Tensor) -> np.ndarray:
        g = self._grads.get(t.node_id)
        if g is None:
            return np.zeros(t.shape, dtype=np.float64)
        return g


def backward(tape: Tape, loss: Tensor) -> GradientMap:
    """Reverse sweep over ``tape`` from scalar ``loss``.

    Returns gradients for every recorded tensor that requires grad.
    Deterministic: the same tape yields bitwise-equal gradients each call.
    """
    if loss.data.size != 1:
        raise ContractError(f"backward needs a scalar loss, got shape {loss.shape}")
    grads: dict[int, np.ndarray] = {loss.node_id: np.ones_like(loss.data)}
    for out_id, inputs in reversed(tape.entries):
        g_out = grads.get(out_id)
        if g_out is None:
            continue
        for in_id, vjp in inputs:
            contrib = vjp(g_out)
            acc = grads.get(in_id)
            grads[in_id] = contrib if acc is None else acc + contrib
    return GradientMap(grads)


# ---------------------------------------------------------------------------
# binary/unary primitive helpers
# ---------------------------------------------------------------------------

def _check_pair(a: Tensor, b: Tensor, op: str) -> None:
    if a.shape == b.shape or a.size == 1 or b.size == 1:
        return
    raise ShapeError(f"{op}: shapes {a.shape} and {b.shape} are neither equal nor scalar-with-tensor")


def _reduce_to(shape: tuple[int, ...], g: np.ndarray) -> np.ndarray:
    # Collapse a broadcasted gradient back onto a scalar operand.
    if g.shape == shape:
        return g
    return np.sum(g).reshape(shape)


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_pair(a, b, "add")
    out = Tensor(a.data + b.data)
    return _record(out, [(a, lambda g: _reduce_to(a.shape, g)),
                         (b, lambda g: _reduce_to(b.shape, g))])


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_pair(a, b, "sub")
    out = Tensor(a.data - b.data)
    return _record(out, [(a, lambda g: _reduce_to(a.shape, g)),
                         (b, lambda g: _reduce_to(b.shape, -g))])


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_pair(a, b, "mul")
    out = Tensor(a.data * b.data)
    return _record(out, [(a, lambda g: _reduce_to(a.shape, g * b.data)),
                         (b, lambda g: _reduce_to(b.shape, g * a.data))])


def neg(x) -> Tensor:
    x = as_tensor(x)
    out = Tensor(-x.data)
    return _record(out, [(x, lambda g: -g)])


def relu(x) -> Tensor:
    x = as_tensor(x)
    out = Tensor(np.maximum(x.data, 0.0))
    mask = x.data > 0.0
    return _record(out, [(x, lambda g: g * mask)])


def sigmoid(x) -> Tensor:
    x = as_tensor(x)
    # Stable in both tails; derivative reuses the forward value.
    d = x.data
    s = np.where(d >= 0, 1.0 / (1.0 + np.exp(-np.abs(d))), np.exp(-np.abs(d)) / (1.0 + np.exp(-np.abs(d))))
    out = Tensor(s)
    return _record(out, [(x, lambda g: g * s * (1.0 - s))])


def log(x) -> Tensor:
    x = as_tensor(x)
    if np.any(x.data <= 0.0):
        raise DomainError("log of non-positive value")
    out = Tensor(np.log(x.data))
    return _record(out, [(x, lambda g: g / x.data)])


def exp(x) -> Tensor:
    x = as_tensor(x)
    with np.errstate(over="ignore"):
        e = np.exp(x.data)
    if not np.all(np.isfinite(e)):
        raise DomainError("exp overflow to non-finite value")
    out = Tensor(e)
    return _record(out, [(x, lambda g: g * e)])


def power(x, exponent: float) -> Tensor:
    """x ** c for a constant real exponent."""
    x = as_tensor(x)
    c = float(exponent)
    if c != int(c) or c < 0:
        if np.any(x.data <= 0.0):
            raise DomainError(f"power: base must be positive for exponent {c}")
    out = Tensor(np.power(x.data, c))
    return _record(out, [(x, lambda g: g * c * np.power(x.data, c - 1.0))])


def clamp(x, lo: float, hi: float) -> Tensor:
    """Clip to [lo, hi]; gradient passes only through the interior."""
    x = as_tensor(x)
    out = Tensor(np.clip(x.data, lo, hi))
    interior = (x.data > lo) & (x.data < hi)
    return _record(out, [(x, lambda g: g * interior)])


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: incompatible shapes {a.shape} x {b.shape}")
    out = Tensor(a.data @ b.data)
    return _record(out, [(a, lambda g: g @ b.data.T),
                         (b, lambda g: a.data.T @ g)])


def reshape(x, shape) -> Tensor:
    x = as_tensor(x)
    shape = tuple(shape) if isinstance(shape, Iterable) else (shape,)
    if int(np.prod(shape)) != x.size:
        raise ShapeError(f"reshape: cannot view {x.shape} as {shape}")
    old = x.shape
    out = Tensor(x.data.reshape(shape))
    return _record(out, [(x, lambda g: g.reshape(old))])


def add_row(x, row) -> Tensor:
    """x (n, d) + row (1, d), broadcast down the rows."""
    x, row = as_tensor(x), as_tensor(row)
    if x.data.ndim != 2 or row.shape != (1, x.shape[1]):
        raise ShapeError(f"add_row: got {x.shape} and {row.shape}")
    out = Tensor(x.data + row.data)
    return _record(out, [(x, lambda g: g),
                         (row, lambda g: g.sum(axis=0, keepdims=True))])


def scale_rows(x, s) -> Tensor:
    """Multiply row i of x (n, d) by s[i]."""
    x, s = as_tensor(x), as_tensor(s)
    if x.data.ndim != 2 or s.shape != (x.shape[0],):
        raise ShapeError(f"scale_rows: got {x.shape} and {s.shape}")
    out = Tensor(x.data * s.data[:, None])
    return _record(out, [(x, lambda g: g * s.data[:, None]),
                         (s, lambda g: np.sum(g * x.data, axis=1))])


def shift_rows(x, s) -> Tensor:
    """Add s[i] to every entry of row i of x (n, d)."""
    x, s = as_tensor(x), as_tensor(s)
    if x.data.ndim != 2 or s.shape != (x.shape[0],):
        raise ShapeError(f"shift_rows: got {x.shape} and {s.shape}")
    out = Tensor(x.data + s.data[:, None])
    return _record(out, [(x, lambda g: g),
                         (s, lambda g: np.sum(g, axis=1))])


def take_rows(x, indices) -> Tensor:
    """Gather rows of a matrix; backward scatter-adds into the source."""
    x = as_tensor(x)
    idx = np.asarray(indices, dtype=np.intp)
    if x.data.ndim != 2:
        raise ShapeError("take_rows expects a matrix")
    out = Tensor(x.data[idx])

    def vjp(g: np.ndarray) -> np.ndarray:
        full = np.zeros_like(x.data)
        np.add.at(full, idx, g)
        return full

    return _record(out, [(x, vjp)])


def diag(v) -> Tensor:
    v = as_tensor(v)
    if v.data.ndim != 1:
        raise ShapeError("diag expects a vector")
    out = Tensor(np.diag(v.data))
    return _record(out, [(v, lambda g: np.diagonal(g).copy())])


def concat(parts: Sequence, axis: int = 0) -> Tensor:
    tensors = [as_tensor(p) for p in parts]
    out = Tensor(np.concatenate([t.data for t in tensors], axis=axis))
    vjps = []
    start = 0
    for t in tensors:
        extent = t.shape[axis]
        sl = [slice(None)] * out.data.ndim
        sl[axis] = slice(start, start + extent)
        vjps.append((t, lambda g, sl=tuple(sl): g[sl]))
        start += extent
    return _record(out, vjps)


def tsum(x, axis=None) -> Tensor:
    x = as_tensor(x)
    _check_axis(x, axis, "sum")
    out = Tensor(np.sum(x.data, axis=axis))
    shape = x.shape

    def vjp(g: np.ndarray) -> np.ndarray:
        if axis is None:
            return np.full(shape, float(g))
        return np.broadcast_to(np.expand_dims(g, axis), shape).copy()

    return _record(out, [(x, vjp)])


def tmean(x, axis=None) -> Tensor:
    x = as_tensor(x)
    _check_axis(x, axis, "mean")
    out = Tensor(np.mean(x.data, axis=axis))
    shape = x.shape
    n = x.size if axis is None else shape[axis]

    def vjp(g: np.ndarray) -> np.ndarray:
        if axis is None:
            return np.full(shape, float(g) / n)
        return np.broadcast_to(np.expand_dims(g, axis), shape).copy() / n

    return _record(out, [(x, vjp)])


def tmax(x, axis=None) -> Tensor:
    """Max reduction; the adjoint routes to the first argmax entry only."""
    x = as_tensor(x)
    _check_axis(x, axis, "max")
    out = Tensor(np.max(x.data, axis=axis))
    shape = x.shape
    if axis is None:
        flat_arg = int(np.argmax(x.data))

        def vjp(g: np.ndarray) -> np.ndarray:
            full = np.zeros(shape)
            full.reshape(-1)[flat_arg] = float(g)
            return full
    else:
        args = np.argmax(x.data, axis=axis)

        def vjp(g: np.ndarray) -> np.ndarray:
            full = np.zeros(shape)
            idx = list(np.indices(args.shape))
            idx.insert(axis if axis >= 0 else x.data.ndim + axis, args)
            full[tuple(idx)] = g
            return full

    return _record(out, [(x, vjp)])


def _check_axis(x: Tensor, axis, op: str) -> None:
    if x.size == 0:
        raise DomainError(f"{op}: empty reduction")
    if axis is None:
        return
    if not -x.data.ndim <= axis < x.data.ndim:
        raise DomainError(f"{op}: axis {axis} out of range for rank {x.data.ndim}")
    if x.shape[axis] == 0:
        raise DomainError(f"{op}: empty reduction axis {axis}")


# ---------------------------------------------------------------------------
# graph-structured primitives
# ---------------------------------------------------------------------------

def edge_adjacency(weights, pairs: np.ndarray, num_nodes: int) -> Tensor:
    """Symmetric weighted adjacency from per-edge weights.

    ``pairs`` is an (E, 2) int array of canonical (min, max) endpoints; each
    weight lands at both (u, v) and (v, u).
    """
    w = as_tensor(weights)
    pairs = np.asarray(pairs, dtype=np.intp)
    if w.data.ndim != 1 or pairs.shape != (w.size, 2):
        raise ShapeError("edge_adjacency: weights must be (E,) aligned with (E,2) pairs")
    u, v = pairs[:, 0], pairs[:, 1]
    a = np.zeros((num_nodes, num_nodes))
    a[u, v] = w.data
    a[v, u] = w.data
    out = Tensor(a)
    return _record(out, [(w, lambda g: g[u, v] + g[v, u])])


def edge_incidence(weights, pairs: np.ndarray, num_nodes: int) -> Tensor:
    """(N, E) matrix with weight i at rows u_i and v_i of column i."""
    w = as_tensor(weights)
    pairs = np.asarray(pairs, dtype=np.intp)
    if w.data.ndim != 1 or pairs.shape != (w.size, 2):
        raise ShapeError("edge_incidence: weights must be (E,) aligned with (E,2) pairs")
    u, v = pairs[:, 0], pairs[:, 1]
    cols = np.arange(w.size)
    m = np.zeros((num_nodes, w.size))
    m[u, cols] = w.data
    m[v, cols] = w.data
    out = Tensor(m)
    return _record(out, [(w, lambda g: g[u, cols] + g[v, cols])])


# ---------------------------------------------------------------------------
# spec-surface dispatchers
# ---------------------------------------------------------------------------

_ELEMENTWISE = {
    "add": add,
    "mul": mul,
    "sub": sub,
    "neg": neg,
    "relu": relu,
    "sigmoid": sigmoid,
    "log": log,
    "exp": exp,
}

_REDUCE = {"sum": tsum, "mean": tmean, "max": tmax}


def elementwise(op: str, *args) -> Tensor:
    try:
        fn = _ELEMENTWISE[op]
    except KeyError:
        raise DomainError(f"unknown elementwise op {op!r}") from None
    return fn(*args)


def reduce(op: str, x, axis=None) -> Tensor:
    try:
        fn = _REDUCE[op]
    except KeyError:
        raise DomainError(f"unknown reduce op {op!r}") from None
    return fn(x, axis=axis)


# ---------------------------------------------------------------------------
# initialization and rng threading
# ---------------------------------------------------------------------------

def make_rng(seed: int) -> np.random.Generator:
    return np.random.default_rng(seed)


def derive_seeds(seed: int, n: int) -> list[int]:
    """Deterministic child seeds for fan-out work (per-graph, per-run)."""
    return [int(s.generate_state(1)[0]) for s in np.random.SeedSequence(seed).spawn(n)]


def glorot(shape: tuple[int, int], rng: np.random.Generator) -> Tensor:
    """Fan-based uniform init on [-sqrt(6/(fan_in+fan_out)), +...]."""
    fan_in, fan_out = shape[0], shape[-1]
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return Tensor(rng.uniform(-bound, bound, size=shape), requires_grad=True)


def zeros_param(shape) -> Tensor:
    return Tensor(np.zeros(shape), requires_grad=True)
