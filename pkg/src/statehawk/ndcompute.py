"""Small reverse-mode differentiation core on top of numpy.

Every network in the package (emission heads, policies, critics, the
graph-attention refiner) is written against the ops in this module.  A
:class:`Tape` records primitive operations in execution order; calling
:meth:`Tape.backward` walks the record backwards and accumulates
gradients into the leaves that were created with :meth:`Tape.param`.

A tape built with ``enabled=False`` skips all bookkeeping so the same
forward code can be reused for cheap inference.
"""

from __future__ import annotations

import json
import math
import struct
from collections import OrderedDict
from dataclasses import dataclass, field
from typing import Callable, Iterable

import numpy as np

__all__ = [
    "ParamStore",
    "Tape",
    "Var",
    "Adam",
    "TrainingError",
    "glorot",
    "dense",
    "mlp",
    "softmax",
    "log_softmax",
    "gat_layer",
    "grad_check",
    "save_checkpoint",
    "load_checkpoint",
]

LEAKY_SLOPE = 0.2
_MAGIC = b"SHCK1\n"


class TrainingError(RuntimeError):
    """Raised when an optimizer receives non-finite gradients or loss."""


# ---------------------------------------------------------------------------
# parameter storage
# ---------------------------------------------------------------------------


class ParamStore:
    """Ordered mapping of parameter name -> float64 array.

    Iteration order is insertion order and is the order used for
    checkpoints and flat views.
    """

    def __init__(self, entries: Iterable[tuple[str, np.ndarray]] | None = None):
        self._data: "OrderedDict[str, np.ndarray]" = OrderedDict()
        for name, value in entries or ():
            self.add(name, value)

    def add(self, name: str, value) -> np.ndarray:
        if name in self._data:
            raise ValueError(f"duplicate parameter name {name!r}")
        arr = np.array(value, dtype=np.float64)
        if not np.all(np.isfinite(arr)):
            raise ValueError(f"parameter {name!r} has non-finite entries")
        self._data[name] = arr
        return arr

    def __getitem__(self, name: str) -> np.ndarray:
        return self._data[name]

    def __setitem__(self, name: str, value) -> None:
        if name not in self._data:
            raise KeyError(name)
        arr = np.asarray(value, dtype=np.float64)
        if arr.shape != self._data[name].shape:
            raise ValueError(
                f"shape mismatch for {name!r}: {arr.shape} vs {self._data[name].shape}"
            )
        self._data[name][...] = arr

    def __contains__(self, name: str) -> bool:
        return name in self._data

    def __iter__(self):
        return iter(self._data)

    def __len__(self) -> int:
        return len(self._data)

    def names(self) -> list[str]:
        return list(self._data)

    def items(self):
        return self._data.items()

    def shapes(self) -> dict[str, tuple[int, ...]]:
        return {k: v.shape for k, v in self._data.items()}

    def size(self) -> int:
        return int(sum(v.size for v in self._data.values()))

    def copy(self) -> "ParamStore":
        return ParamStore((k, v.copy()) for k, v in self._data.items())

    def zeros_like(self) -> "ParamStore":
        return ParamStore((k, np.zeros_like(v)) for k, v in self._data.items())

    def flat(self) -> np.ndarray:
        if not self._data:
            return np.zeros(0)
        return np.concatenate([v.ravel() for v in self._data.values()])

    def load_flat(self, vec: np.ndarray) -> None:
        vec = np.asarray(vec, dtype=np.float64)
        if vec.size != self.size():
            raise ValueError(f"flat vector has {vec.size} entries, expected {self.size()}")
        pos = 0
        for v in self._data.values():
            v[...] = vec[pos : pos + v.size].reshape(v.shape)
            pos += v.size

    def assign(self, other: "ParamStore") -> None:
        self._check_compatible(other)
        for k, v in self._data.items():
            v[...] = other[k]

    def lerp_(self, other: "ParamStore", tau: float) -> None:
        """In place ``self <- tau * other + (1 - tau) * self``."""
        self._check_compatible(other)
        for k, v in self._data.items():
            v *= 1.0 - tau
            v += tau * other[k]

    def allclose(self, other: "ParamStore", atol: float = 0.0) -> bool:
        if self.shapes() != other.shapes():
            return False
        return all(np.allclose(v, other[k], rtol=0.0, atol=atol) for k, v in self._data.items())

    def _check_compatible(self, other: "ParamStore") -> None:
        if self.shapes() != other.shapes() or self.names() != other.names():
            raise ValueError("parameter stores have different names or shapes")


def glorot(rng: np.random.Generator, fan_out: int, fan_in: int) -> np.ndarray:
    limit = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_out, fan_in))


def add_dense(store: ParamStore, name: str, n_in: int, n_out: int, rng) -> None:
    """Register a ``name.W`` (out x in) / ``name.b`` pair with glorot init."""
    store.add(f"{name}.W", glorot(rng, n_out, n_in))
    store.add(f"{name}.b", np.zeros(n_out))


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------


def save_checkpoint(path, stores: "dict[str, ParamStore]", meta: dict | None = None) -> None:
    """Write named parameter stores to one file.

    Layout: magic line, little-endian uint64 manifest length, UTF-8 JSON
    manifest, then every array as little-endian float64 in manifest order.
    """
    manifest = {"dtype": "<f8", "meta": meta or {}, "entries": []}
    blobs = []
    for group, store in stores.items():
        for name, arr in store.items():
            manifest["entries"].append({"group": group, "name": name, "shape": list(arr.shape)})
            blobs.append(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    head = json.dumps(manifest, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<Q", len(head)))
        fh.write(head)
        for b in blobs:
            fh.write(b)


def load_checkpoint(path) -> "tuple[dict[str, ParamStore], dict]":
    with open(path, "rb") as fh:
        raw = fh.read()
    if not raw.startswith(_MAGIC):
        raise ValueError(f"{path}: not a statehawk checkpoint")
    pos = len(_MAGIC)
    (n,) = struct.unpack("<Q", raw[pos : pos + 8])
    pos += 8
    manifest = json.loads(raw[pos : pos + n].decode("utf-8"))
    pos += n
    stores: dict[str, ParamStore] = {}
    for entry in manifest["entries"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        nbytes = 8 * count
        if pos + nbytes > len(raw):
            raise ValueError(f"{path}: truncated data for {entry['name']!r}")
        arr = np.frombuffer(raw, dtype="<f8", count=count, offset=pos).reshape(shape)
        pos += nbytes
        stores.setdefault(entry["group"], ParamStore()).add(entry["name"], arr.astype(np.float64))
    if pos != len(raw):
        raise ValueError(f"{path}: {len(raw) - pos} trailing bytes")
    return stores, manifest.get("meta", {})


# ---------------------------------------------------------------------------
# tape and variables
# ---------------------------------------------------------------------------


class Var:
    __slots__ = ("value", "grad", "tape", "_backward", "_parents", "_param")

    def __init__(self, value, tape: "Tape", parents=(), backward=None, param=None):
        self.value = value
        self.grad = None
        self.tape = tape
        self._parents = parents
        self._backward = backward
        self._param = param

    @property
    def shape(self):
        return self.value.shape

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, idx):
        return getitem(self, idx)

    @property
    def T(self):
        return swapaxes(self, -1, -2)

    def __repr__(self):
        return f"Var(shape={self.value.shape})"


class Tape:
    """Records operations for one backward pass.

    ``near_kink`` is set when a piecewise op (relu, leaky relu, clip,
    minimum) sees an input within ``kink_tol`` of a breakpoint; gradient
    checks use it to skip non-smooth points.
    """

    def __init__(self, enabled: bool = True, kink_tol: float = 0.0):
        self.enabled = enabled
        self.nodes: list[Var] = []
        self.kink_tol = kink_tol
        self.near_kink = False

    def constant(self, value) -> Var:
        return Var(np.asarray(value, dtype=np.float64), self)

    def param(self, store: ParamStore, name: str) -> Var:
        v = Var(store[name], self, param=name)
        if self.enabled:
            self.nodes.append(v)
        return v

    def _record(self, value, parents, backward) -> Var:
        if not self.enabled:
            return Var(value, self)
        v = Var(value, self, parents, backward)
        self.nodes.append(v)
        return v

    def _kink(self, z, at=0.0):
        if self.kink_tol > 0.0 and np.any(np.abs(np.asarray(z) - at) <= self.kink_tol):
            self.near_kink = True

    def backward(self, out: Var) -> dict[str, np.ndarray]:
        """Back-propagate from scalar ``out``; returns gradients by param name."""
        if not self.enabled:
            raise RuntimeError("backward on a disabled tape")
        if out.value.size != 1:
            raise ValueError("backward needs a scalar output")
        for n in self.nodes:
            n.grad = None
        out.grad = np.ones_like(out.value)
        grads: dict[str, np.ndarray] = {}
        for node in reversed(self.nodes):
            g = node.grad
            if g is None:
                continue
            if node._param is not None:
                if node._param in grads:
                    grads[node._param] = grads[node._param] + g
                else:
                    grads[node._param] = np.array(g, dtype=np.float64)
                continue
            if node._backward is None:
                continue
            for parent, pg in zip(node._parents, node._backward(g)):
                if pg is None or not isinstance(parent, Var):
                    continue
                parent.grad = pg if parent.grad is None else parent.grad + pg
        return grads


def _tape_of(*xs) -> Tape:
    for x in xs:
        if isinstance(x, Var):
            return x.tape
    raise TypeError("at least one operand must be a Var")


def _val(x):
    return x.value if isinstance(x, Var) else np.asarray(x, dtype=np.float64)


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


# ---------------------------------------------------------------------------
# primitive ops
# ---------------------------------------------------------------------------


def add(a, b) -> Var:
    av, bv = _val(a), _val(b)
    return _tape_of(a, b)._record(
        av + bv, (a, b), lambda g: (_unbroadcast(g, av.shape), _unbroadcast(g, bv.shape))
    )


def sub(a, b) -> Var:
    av, bv = _val(a), _val(b)
    return _tape_of(a, b)._record(
        av - bv, (a, b), lambda g: (_unbroadcast(g, av.shape), -_unbroadcast(g, bv.shape))
    )


def mul(a, b) -> Var:
    av, bv = _val(a), _val(b)
    return _tape_of(a, b)._record(
        av * bv,
        (a, b),
        lambda g: (_unbroadcast(g * bv, av.shape), _unbroadcast(g * av, bv.shape)),
    )


def div(a, b) -> Var:
    av, bv = _val(a), _val(b)
    return _tape_of(a, b)._record(
        av / bv,
        (a, b),
        lambda g: (_unbroadcast(g / bv, av.shape), _unbroadcast(-g * av / (bv * bv), bv.shape)),
    )


def matmul(a, b) -> Var:
    av, bv = _val(a), _val(b)
    if av.ndim < 2 or bv.ndim < 2:
        raise ValueError("matmul operands must be at least 2-D")

    def back(g):
        ga = g @ np.swapaxes(bv, -1, -2)
        gb = np.swapaxes(av, -1, -2) @ g
        return _unbroadcast(ga, av.shape), _unbroadcast(gb, bv.shape)

    return _tape_of(a, b)._record(av @ bv, (a, b), back)


def swapaxes(a: Var, ax1: int, ax2: int) -> Var:
    return a.tape._record(
        np.swapaxes(a.value, ax1, ax2), (a,), lambda g: (np.swapaxes(g, ax1, ax2),)
    )


def reshape(a: Var, shape) -> Var:
    old = a.value.shape
    return a.tape._record(a.value.reshape(shape), (a,), lambda g: (g.reshape(old),))


def getitem(a: Var, idx) -> Var:
    shape = a.value.shape

    def back(g):
        out = np.zeros(shape)
        np.add.at(out, idx, g)
        return (out,)

    return a.tape._record(a.value[idx], (a,), back)


def concat(xs: list, axis: int = -1) -> Var:
    vals = [_val(x) for x in xs]
    sizes = [v.shape[axis] for v in vals]
    splits = np.cumsum(sizes)[:-1]

    def back(g):
        return tuple(np.split(g, splits, axis=axis))

    return _tape_of(*xs)._record(np.concatenate(vals, axis=axis), tuple(xs), back)


def vsum(a: Var, axis=None, keepdims: bool = False) -> Var:
    shape = a.value.shape

    def back(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, shape).copy(),)

    return a.tape._record(np.sum(a.value, axis=axis, keepdims=keepdims), (a,), back)


def mean(a: Var, axis=None) -> Var:
    n = a.value.size if axis is None else a.value.shape[axis]
    return mul(vsum(a, axis=axis), 1.0 / n)


def tanh(a: Var) -> Var:
    y = np.tanh(a.value)
    return a.tape._record(y, (a,), lambda g: (g * (1.0 - y * y),))


def relu(a: Var) -> Var:
    a.tape._kink(a.value)
    mask = a.value > 0
    return a.tape._record(np.where(mask, a.value, 0.0), (a,), lambda g: (g * mask,))


def leaky_relu(a: Var, slope: float = LEAKY_SLOPE) -> Var:
    a.tape._kink(a.value)
    mask = a.value > 0
    scale = np.where(mask, 1.0, slope)
    return a.tape._record(a.value * scale, (a,), lambda g: (g * scale,))


def exp(a: Var) -> Var:
    y = np.exp(a.value)
    return a.tape._record(y, (a,), lambda g: (g * y,))


def log(a: Var) -> Var:
    x = a.value
    return a.tape._record(np.log(x), (a,), lambda g: (g / x,))


def square(a: Var) -> Var:
    x = a.value
    return a.tape._record(x * x, (a,), lambda g: (2.0 * g * x,))


def clip(a: Var, lo: float, hi: float) -> Var:
    a.tape._kink(a.value, lo)
    a.tape._kink(a.value, hi)
    inside = (a.value >= lo) & (a.value <= hi)
    return a.tape._record(np.clip(a.value, lo, hi), (a,), lambda g: (g * inside,))


def minimum(a, b) -> Var:
    av, bv = _val(a), _val(b)
    tape = _tape_of(a, b)
    tape._kink(av - bv)
    pick_a = av <= bv

    def back(g):
        return _unbroadcast(g * pick_a, av.shape), _unbroadcast(g * ~pick_a, bv.shape)

    return tape._record(np.minimum(av, bv), (a, b), back)


def softmax_array(z: np.ndarray, axis: int = -1) -> np.ndarray:
    z = z - np.max(z, axis=axis, keepdims=True)
    e = np.exp(z)
    return e / np.sum(e, axis=axis, keepdims=True)


def softmax(a, axis: int = -1):
    """Max-shifted softmax.  Plain arrays in, plain array out."""
    if not isinstance(a, Var):
        return softmax_array(np.asarray(a, dtype=np.float64), axis)
    y = softmax_array(a.value, axis)

    def back(g):
        return (y * (g - np.sum(g * y, axis=axis, keepdims=True)),)

    return a.tape._record(y, (a,), back)


def log_softmax(a: Var, axis: int = -1) -> Var:
    z = a.value - np.max(a.value, axis=axis, keepdims=True)
    lse = np.log(np.sum(np.exp(z), axis=axis, keepdims=True))
    y = z - lse
    p = np.exp(y)

    def back(g):
        return (g - p * np.sum(g, axis=axis, keepdims=True),)

    return a.tape._record(y, (a,), back)


# ---------------------------------------------------------------------------
# layers
# ---------------------------------------------------------------------------


def dense(tape: Tape, params: ParamStore, x, layer_name: str) -> Var:
    """Affine map ``W x + b`` with ``W`` stored as (out, in).

    ``x`` may be a single vector or a batch of row vectors (or any
    leading batch dimensions).
    """
    W = params[f"{layer_name}.W"]
    xv = _val(x)
    if xv.shape[-1] != W.shape[1]:
        raise ValueError(
            f"{layer_name}: input width {xv.shape[-1]} does not match weight {W.shape}"
        )
    if not isinstance(x, Var):
        x = tape.constant(xv)
    squeeze = x.value.ndim == 1
    if squeeze:
        x = reshape(x, (1, -1))
    y = add(matmul(x, tape.param(params, f"{layer_name}.W").T), tape.param(params, f"{layer_name}.b"))
    if squeeze:
        y = reshape(y, (W.shape[0],))
    return y


def mlp(tape: Tape, params: ParamStore, x, layers: list[str]) -> Var:
    """tanh hidden layers, linear last layer."""
    h = x
    for i, name in enumerate(layers):
        h = dense(tape, params, h, name)
        if i < len(layers) - 1:
            h = tanh(h)
    return h


def add_gat(store: ParamStore, name: str, features: int, heads: int, rng, merge: str = "average") -> None:
    """Register parameters for :func:`gat_layer`."""
    for d in range(heads):
        store.add(f"{name}.W{d}", glorot(rng, features, features))
        store.add(f"{name}.a{d}", glorot(rng, 1, 2 * features).ravel())
    if merge == "concat":
        store.add(f"{name}.WM", glorot(rng, features, features * heads))


def gat_layer(
    tape: Tape,
    params: ParamStore,
    h,
    adjacency: np.ndarray,
    heads: int,
    name: str = "gat",
    merge: str = "average",
    attention_out: list | None = None,
) -> Var:
    """Residual multi-head graph attention over ``N`` nodes.

    ``h`` is ``(N, F)`` or ``(B, N, F)``.  Per head ``d`` the logits are
    ``LeakyReLU(a_d^T [W_d h_i || W_d h_j])`` for neighbours ``j`` of
    ``i``; the merged message is added to ``h`` and passed through tanh.
    """
    adjacency = np.asarray(adjacency)
    hv = _val(h)
    n_nodes, feats = hv.shape[-2], hv.shape[-1]
    if adjacency.ndim != 2 or adjacency.shape != (n_nodes, n_nodes):
        raise ValueError(f"adjacency must be {n_nodes}x{n_nodes}, got {adjacency.shape}")
    if not np.all(adjacency.sum(axis=1) > 0):
        raise ValueError("every node needs at least one neighbour (self-loops included)")
    if not isinstance(h, Var):
        h = tape.constant(hv)
    mask = np.where(adjacency > 0, 0.0, -1e30)
    outs = []
    for d in range(heads):
        W = tape.param(params, f"{name}.W{d}")
        a = tape.param(params, f"{name}.a{d}")
        wh = matmul(h, W.T)
        a_src = reshape(a[:feats], (feats, 1))
        a_dst = reshape(a[feats:], (feats, 1))
        s = matmul(wh, a_src)
        t = matmul(wh, a_dst)
        e = leaky_relu(add(s, swapaxes(t, -1, -2)))
        alpha = softmax(add(e, mask), axis=-1)
        if attention_out is not None:
            attention_out.append(alpha.value)
        outs.append(matmul(alpha, wh))
    if merge == "average":
        merged = outs[0]
        for o in outs[1:]:
            merged = add(merged, o)
        merged = mul(merged, 1.0 / heads)
    elif merge == "concat":
        merged = matmul(concat(outs, axis=-1), tape.param(params, f"{name}.WM").T)
    else:
        raise ValueError(f"unknown merge rule {merge!r}")
    return tanh(add(merged, h))


# ---------------------------------------------------------------------------
# optimisation
# ---------------------------------------------------------------------------


@dataclass
class Adam:
    """Bias-corrected Adam bound to one :class:`ParamStore`.

    With ``lazy=True`` a parameter whose gradient is identically zero is
    left untouched (value and moments), so masked-out heads never drift.
    """

    params: ParamStore
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    lazy: bool = False
    step_count: int = 0
    m: ParamStore = field(init=False)
    v: ParamStore = field(init=False)

    def __post_init__(self):
        self.m = self.params.zeros_like()
        self.v = self.params.zeros_like()

    def step(self, grads: dict[str, np.ndarray]) -> None:
        for name, g in grads.items():
            if not np.all(np.isfinite(g)):
                raise TrainingError(f"non-finite gradient for {name!r}")
        self.step_count += 1
        b1t = 1.0 - self.beta1**self.step_count
        b2t = 1.0 - self.beta2**self.step_count
        for name, g in grads.items():
            if self.lazy and not np.any(g):
                continue
            m = self.m[name]
            v = self.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            self.params[name] -= self.lr * (m / b1t) / (np.sqrt(v / b2t) + self.eps)

    def state_stores(self) -> dict[str, ParamStore]:
        return {"adam_m": self.m, "adam_v": self.v}

    def load_state(self, m: ParamStore, v: ParamStore, step_count: int) -> None:
        self.m.assign(m)
        self.v.assign(v)
        self.step_count = int(step_count)


def adam_step(state: Adam, grads: dict[str, np.ndarray]) -> None:
    state.step(grads)


# ---------------------------------------------------------------------------
# gradient checking
# ---------------------------------------------------------------------------


@dataclass
class GradCheckReport:
    max_rel_error: float
    checked: int
    skipped_kink: bool
    worst: str = ""

    def passed(self, tol: float) -> bool:
        return self.skipped_kink or self.max_rel_error < tol


def grad_check(
    f: Callable[[Tape], Var],
    params: ParamStore,
    h: float = 1e-5,
    coords: int | None = None,
    rng: np.random.Generator | None = None,
    floor: float = 1e-6,
    kink_tol: float | None = None,
) -> GradCheckReport:
    """Compare tape gradients of scalar ``f`` with central differences.

    Relative error is ``|g - g_fd| / max(|g|, |g_fd|, floor)``.  When the
    base point lies within ``kink_tol`` (default ``10 h``) of a ReLU/clip
    breakpoint the point is reported as skipped instead of compared.
    ``coords`` limits the check to a random subset of coordinates.
    """
    tape = Tape(kink_tol=10 * h if kink_tol is None else kink_tol)
    out = f(tape)
    grads = tape.backward(out)
    if tape.near_kink:
        return GradCheckReport(0.0, 0, True)
    picks = []
    for name, arr in params.items():
        for j in range(arr.size):
            picks.append((name, j))
    if coords is not None and coords < len(picks):
        rng = rng or np.random.default_rng(0)
        sel = rng.choice(len(picks), size=coords, replace=False)
        picks = [picks[i] for i in sorted(sel)]
    worst, worst_name = 0.0, ""
    off = Tape(enabled=False)
    for name, j in picks:
        arr = params[name]
        flat = arr.reshape(-1)
        orig = flat[j]
        flat[j] = orig + h
        fp = float(f(off).value)
        flat[j] = orig - h
        fm = float(f(off).value)
        flat[j] = orig
        fd = (fp - fm) / (2 * h)
        g = float(grads.get(name, np.zeros_like(arr)).reshape(-1)[j])
        rel = abs(g - fd) / max(abs(g), abs(fd), floor)
        if rel > worst:
            worst, worst_name = rel, f"{name}[{j}]"
    return GradCheckReport(worst, len(picks), False, worst_name)
