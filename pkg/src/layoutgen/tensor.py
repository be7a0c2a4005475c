"""Dense tensors with a reverse-mode gradient tape.

Define-by-run: while a Tape is active, every op whose inputs require
gradients appends a node (inputs, output, backward closure) to it.
``Tape.backward`` walks the nodes in reverse, accumulates gradients, writes
them to the ``.grad`` of leaf tensors, and consumes the tape.

Training runs in float32; gradient verification uses float64 (central
finite differences need the headroom). With no tape active all ops are
plain numpy forward passes.
"""

from __future__ import annotations

import numpy as np

from .errors import NotScalar, ShapeError

DEFAULT_DTYPE = np.float32

_TAPE_STACK: list["Tape"] = []


class Tensor:
    """A dense row-major array, optionally a gradient leaf."""

    __slots__ = ("data", "requires_grad", "grad")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        arr = np.asarray(data)
        if dtype is not None:
            arr = arr.astype(dtype, copy=False)
        elif arr.dtype not in (np.float32, np.float64):
            arr = arr.astype(DEFAULT_DTYPE)
        self.data = np.ascontiguousarray(arr)
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, dtype={self.data.dtype}{flag})"

    # Operator sugar; all routed through the module-level ops.
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(self, other)

    def __neg__(self):
        return scalar_scale(self, -1.0)

    def __sub__(self, other):
        if isinstance(other, Tensor):
            return add(self, scalar_scale(other, -1.0))
        return add(self, -other)

    def __matmul__(self, other):
        return matmul(self, other)


class _Node:
    __slots__ = ("inputs", "output", "backward")

    def __init__(self, inputs, output, backward):
        self.inputs = inputs
        self.output = output
        self.backward = backward


class Tape:
    """Append-only op record; single-threaded, consumed by backward()."""

    def __init__(self):
        self._nodes: list[_Node] = []
        self._produced: set[int] = set()

    def __enter__(self) -> "Tape":
        _TAPE_STACK.append(self)
        return self

    def __exit__(self, exc_type, exc, tb):
        if _TAPE_STACK and _TAPE_STACK[-1] is self:
            _TAPE_STACK.pop()
        return False

    def __len__(self) -> int:
        return len(self._nodes)

    def backward(self, loss: Tensor) -> None:
        """Accumulate d(loss)/d(leaf) into each leaf's .grad (overwriting
        previous contents) and clear the tape."""
        if loss.size != 1:
            raise NotScalar(f"loss must be scalar, got shape {loss.shape}")
        grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
        leaves: dict[int, Tensor] = {}
        for node in reversed(self._nodes):
            g = grads.pop(id(node.output), None)
            if g is None:
                continue
            for t, ig in zip(node.inputs, node.backward(g)):
                if ig is None or not t.requires_grad:
                    continue
                key = id(t)
                if key in grads:
                    grads[key] = grads[key] + ig
                else:
                    grads[key] = ig
                if key not in self._produced:
                    leaves[key] = t
        for key, t in leaves.items():
            t.grad = grads[key]
        self._nodes.clear()
        self._produced.clear()


def _active_tape() -> Tape | None:
    return _TAPE_STACK[-1] if _TAPE_STACK else None


def _make(inputs: tuple[Tensor, ...], out_data: np.ndarray, backward) -> Tensor:
    tape = _active_tape()
    track = tape is not None and any(t.requires_grad for t in inputs)
    out = Tensor(out_data, requires_grad=track, dtype=out_data.dtype)
    if track:
        tape._nodes.append(_Node(inputs, out, backward))
        tape._produced.add(id(out))
    return out


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum gradient over axes that numpy broadcasting expanded."""
    if g.shape == tuple(shape):
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


def _check_broadcast(a_shape, b_shape):
    try:
        np.broadcast_shapes(a_shape, b_shape)
    except ValueError:
        raise ShapeError("operands do not broadcast", a_shape, b_shape) from None


# --------------------------------------------------------------------------
# Elementwise and structural ops
# --------------------------------------------------------------------------


def add(a: Tensor, b) -> Tensor:
    if not isinstance(b, Tensor):
        c = a.data.dtype.type(b)
        return _make((a,), a.data + c, lambda g: (g,))
    _check_broadcast(a.shape, b.shape)
    out = a.data + b.data

    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _make((a, b), out, backward)


def mul(a: Tensor, b) -> Tensor:
    if not isinstance(b, Tensor):
        return scalar_scale(a, float(b))
    _check_broadcast(a.shape, b.shape)
    out = a.data * b.data

    def backward(g):
        return (
            _unbroadcast(g * b.data, a.shape),
            _unbroadcast(g * a.data, b.shape),
        )

    return _make((a, b), out, backward)


def scalar_scale(x: Tensor, s: float) -> Tensor:
    s = x.data.dtype.type(s)
    return _make((x,), x.data * s, lambda g: (g * s,))


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ShapeError("matmul inner dimensions", a.shape, b.shape)
    out = a.data @ b.data

    def backward(g):
        ga = g @ np.swapaxes(b.data, -1, -2)
        gb = np.swapaxes(a.data, -1, -2) @ g
        return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)

    return _make((a, b), out, backward)


def transpose(x: Tensor, axes: tuple[int, ...]) -> Tensor:
    inv = tuple(np.argsort(axes))
    return _make(
        (x,), np.transpose(x.data, axes), lambda g: (np.transpose(g, inv),)
    )


def reshape(x: Tensor, shape) -> Tensor:
    orig = x.shape
    return _make(
        (x,), np.reshape(x.data, shape), lambda g: (np.reshape(g, orig),)
    )


def concat(tensors, axis: int = 0) -> Tensor:
    tensors = tuple(tensors)
    sizes = [t.shape[axis] for t in tensors]
    out = np.concatenate([t.data for t in tensors], axis=axis)
    splits = np.cumsum(sizes)[:-1]

    def backward(g):
        return tuple(np.split(g, splits, axis=axis))

    return _make(tensors, out, backward)


def slice_(x: Tensor, key: tuple) -> Tensor:
    """Basic slicing only (tuple of slice objects)."""
    out = x.data[key]

    def backward(g):
        gx = np.zeros_like(x.data)
        gx[key] = g
        return (gx,)

    return _make((x,), out, backward)


def masked_fill(x: Tensor, mask: np.ndarray, value: float) -> Tensor:
    out = np.where(mask, x.data.dtype.type(value), x.data)

    def backward(g):
        return (np.where(mask, x.data.dtype.type(0), g),)

    return _make((x,), out, backward)


def relu(x: Tensor) -> Tensor:
    keep = x.data > 0
    return _make((x,), np.where(keep, x.data, x.data.dtype.type(0)), lambda g: (g * keep,))


def log(x: Tensor) -> Tensor:
    return _make((x,), np.log(x.data), lambda g: (g / x.data,))


def dropout(x: Tensor, p: float, seed: int, train: bool = True) -> Tensor:
    """Inverted dropout: scales kept activations by 1/(1-p).

    Identity when p == 0 or train is False. The mask is drawn from a
    counter-based Philox stream so a fixed seed replays the same mask.
    """
    if not train or p == 0.0:
        return x
    if not 0.0 <= p < 1.0:
        raise ValueError(f"dropout probability must be in [0, 1), got {p}")
    rng = np.random.Generator(np.random.Philox(seed))
    mask = (rng.random(x.shape) >= p).astype(x.data.dtype) / x.data.dtype.type(1.0 - p)
    return _make((x,), x.data * mask, lambda g: (g * mask,))


# --------------------------------------------------------------------------
# Reductions
# --------------------------------------------------------------------------


def reduce_sum(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    out = x.data.sum(axis=axis, keepdims=keepdims)

    def backward(g):
        if axis is None:
            return (np.broadcast_to(g, x.shape).copy(),)
        g2 = g if keepdims else np.expand_dims(g, axis)
        return (np.broadcast_to(g2, x.shape).copy(),)

    return _make((x,), np.asarray(out), backward)


def reduce_mean(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    count = x.size if axis is None else x.shape[axis]
    return scalar_scale(reduce_sum(x, axis=axis, keepdims=keepdims), 1.0 / count)


def l1_loss(pred: Tensor, target: Tensor) -> Tensor:
    """Mean absolute difference; subgradient 0 at exact ties."""
    if pred.shape != target.shape:
        raise ShapeError("l1_loss operands", pred.shape, target.shape)
    diff = pred.data - target.data
    out = np.asarray(np.abs(diff).mean(), dtype=pred.data.dtype)
    scale = 1.0 / diff.size

    def backward(g):
        s = np.sign(diff) * (g * scale)
        return s, -s

    return _make((pred, target), out, backward)


# --------------------------------------------------------------------------
# Softmax family and lookups
# --------------------------------------------------------------------------


def softmax_lastdim(x: Tensor) -> Tensor:
    """Rows with -inf entries get exact zeros there; a fully masked row is
    the caller's bug (yields NaN)."""
    m = np.max(x.data, axis=-1, keepdims=True)
    e = np.exp(x.data - m)
    y = e / e.sum(axis=-1, keepdims=True)

    def backward(g):
        dot = (g * y).sum(axis=-1, keepdims=True)
        return ((g - dot) * y,)

    return _make((x,), y, backward)


def log_softmax_lastdim(x: Tensor) -> Tensor:
    m = np.max(x.data, axis=-1, keepdims=True)
    shifted = x.data - m
    lse = np.log(np.exp(shifted).sum(axis=-1, keepdims=True))
    out = shifted - lse

    def backward(g):
        soft = np.exp(out)
        return (g - soft * g.sum(axis=-1, keepdims=True),)

    return _make((x,), out, backward)


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize over the last dim with learnable gain and bias."""
    d = x.shape[-1]
    if gain.shape != (d,) or bias.shape != (d,):
        raise ShapeError("layer_norm parameters", x.shape, gain.shape, bias.shape)
    mu = x.data.mean(axis=-1, keepdims=True)
    centered = x.data - mu
    var = (centered * centered).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + x.data.dtype.type(eps))
    xhat = centered * inv
    out = xhat * gain.data + bias.data

    def backward(g):
        dims = tuple(range(g.ndim - 1))
        dgain = (g * xhat).sum(axis=dims)
        dbias = g.sum(axis=dims)
        dxhat = g * gain.data
        dx = (
            dxhat
            - dxhat.mean(axis=-1, keepdims=True)
            - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True)
        ) * inv
        return dx, dgain, dbias

    return _make((x, gain, bias), out, backward)


def embedding_gather(table: Tensor, ids: np.ndarray) -> Tensor:
    """Look up rows of a (V, d) table; ids may have any shape."""
    ids = np.asarray(ids)
    out = table.data[ids]

    def backward(g):
        gt = np.zeros_like(table.data)
        np.add.at(gt, ids.reshape(-1), g.reshape(-1, table.shape[-1]))
        return (gt,)

    return _make((table,), out, backward)


def gather_lastdim(x: Tensor, idx: np.ndarray) -> Tensor:
    """Pick one entry per row along the last dim; idx shape = x.shape[:-1]."""
    idx = np.asarray(idx)
    out = np.take_along_axis(x.data, idx[..., None], axis=-1)[..., 0]

    def backward(g):
        gx = np.zeros_like(x.data)
        np.put_along_axis(gx, idx[..., None], g[..., None], axis=-1)
        return (gx,)

    return _make((x,), out, backward)


# --------------------------------------------------------------------------
# Finite-difference verification
# --------------------------------------------------------------------------


def grad_check(fn, inputs, h: float = 1e-5, names=None) -> dict[str, float]:
    """Compare tape gradients of a scalar-valued fn against central finite
    differences, elementwise. Inputs must be float64 leaf tensors; fn must
    be deterministic (fixed dropout seeds). Returns max relative error per
    input; raises nothing (report only)."""
    for t in inputs:
        if t.data.dtype != np.float64:
            raise ValueError("grad_check requires float64 inputs")
    if names is None:
        names = [f"input{i}" for i in range(len(inputs))]
    with Tape() as tape:
        loss = fn(*inputs)
        tape.backward(loss)
    analytic = [
        t.grad.copy() if t.grad is not None else np.zeros_like(t.data) for t in inputs
    ]
    report: dict[str, float] = {}
    for t, a, name in zip(inputs, analytic, names):
        flat = t.data.reshape(-1)
        numeric = np.zeros_like(flat)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            up = fn(*inputs).item()
            flat[i] = orig - h
            down = fn(*inputs).item()
            flat[i] = orig
            numeric[i] = (up - down) / (2.0 * h)
        a_flat = a.reshape(-1)
        denom = np.maximum(1e-6, np.maximum(np.abs(a_flat), np.abs(numeric)))
        report[name] = float(np.max(np.abs(a_flat - numeric) / denom)) if flat.size else 0.0
    return report
