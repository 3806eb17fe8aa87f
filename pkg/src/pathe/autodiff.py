"""Dense tensors with reverse-mode automatic differentiation.

Everything numeric in the package runs through this module: a numpy-backed
``Tensor`` that records a dynamic compute graph as it is used, a parameter
registry (``Tape``), the Adam optimizer, a central-difference gradient
checker, and the binary checkpoint format.

Training uses float32; gradient verification uses float64 (pass
``dtype=np.float64`` when creating the ``Tape``). Ops inherit the dtype of
their inputs. Shapes are validated on every operation and mismatches raise
``ShapeError`` naming the op and the offending shapes.
"""

from __future__ import annotations

import contextlib
import math
import struct
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import DataError, NumericError, ShapeError

CKPT_MAGIC = b"pathe-ckpt v1\n"

# Additive pre-softmax penalty for masked attention positions. Large enough
# that exp() underflows to exactly 0 after max-subtraction in float32.
MASK_PENALTY = 1e9

_grad_enabled = True


@contextlib.contextmanager
def no_grad():
    """Disable graph recording inside the block (evaluation fast path)."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


class Tensor:
    """A dense n-dimensional array plus its position in the compute graph."""

    __slots__ = ("data", "grad", "requires_grad", "name", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        self.data = np.asarray(data)
        if not np.issubdtype(self.data.dtype, np.floating):
            self.data = self.data.astype(np.float32)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self.name = name
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable[[], None] | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def item(self) -> float:
        return float(self.data)

    def backward(self) -> None:
        """Reverse-mode pass from a scalar output.

        Visits every reachable node exactly once, in reverse topological
        order, accumulating gradients into ``grad`` fields.
        """
        if self.data.size != 1:
            raise ShapeError(f"backward: output must be scalar, got shape {self.shape}")
        order: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, post = stack.pop()
            if post:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if p.requires_grad and id(p) not in seen:
                    stack.append((p, False))
        self.grad = np.ones_like(self.data)
        for node in reversed(order):
            if node._backward is not None:
                node._backward()

    def __repr__(self) -> str:
        tag = f" name={self.name}" if self.name else ""
        return f"Tensor(shape={self.shape}, dtype={self.data.dtype}{tag})"


def constant(data, dtype=None) -> Tensor:
    arr = np.asarray(data, dtype=dtype)
    return Tensor(arr)


def _accum(t: Tensor, g: np.ndarray) -> None:
    if g.dtype != t.data.dtype:
        g = g.astype(t.data.dtype)
    if t.grad is None:
        # own the buffer: later += must not write through views of other grads
        t.grad = g if (g.base is None and g.flags.owndata) else g.copy()
    else:
        t.grad += g


def _result(data: np.ndarray, parents: Sequence[Tensor]) -> Tensor:
    out = Tensor(data)
    if _grad_enabled and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
    return out


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum a gradient back down to ``shape`` after numpy broadcasting."""
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


# ---------------------------------------------------------------------------
# elementwise / structural ops
# ---------------------------------------------------------------------------

def add(a: Tensor, b: Tensor) -> Tensor:
    try:
        data = a.data + b.data
    except ValueError:
        raise ShapeError(f"add: incompatible shapes {a.shape} and {b.shape}") from None
    out = _result(data, (a, b))
    if out.requires_grad:
        def bwd():
            g = out.grad
            if a.requires_grad:
                _accum(a, _unbroadcast(g, a.shape))
            if b.requires_grad:
                _accum(b, _unbroadcast(g, b.shape))
        out._backward = bwd
    return out


def mul(a: Tensor, b: Tensor) -> Tensor:
    try:
        data = a.data * b.data
    except ValueError:
        raise ShapeError(f"mul: incompatible shapes {a.shape} and {b.shape}") from None
    out = _result(data, (a, b))
    if out.requires_grad:
        def bwd():
            g = out.grad
            if a.requires_grad:
                _accum(a, _unbroadcast(g * b.data, a.shape))
            if b.requires_grad:
                _accum(b, _unbroadcast(g * a.data, b.shape))
        out._backward = bwd
    return out


def scale(a: Tensor, s: float) -> Tensor:
    out = _result(a.data * a.data.dtype.type(s), (a,))
    if out.requires_grad:
        def bwd():
            _accum(a, out.grad * a.data.dtype.type(s))
        out._backward = bwd
    return out


def sub(a: Tensor, b: Tensor) -> Tensor:
    return add(a, scale(b, -1.0))


def relu(a: Tensor) -> Tensor:
    out = _result(np.maximum(a.data, 0), (a,))
    if out.requires_grad:
        mask = a.data > 0
        def bwd():
            _accum(a, out.grad * mask)
        out._backward = bwd
    return out


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim < 2 or b.data.ndim < 2:
        raise ShapeError(f"matmul: operands must be >=2-D, got {a.shape} and {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul: inner dims differ, {a.shape} x {b.shape}")
    # the dominant case is a batched activation times a 2-D weight; flattening
    # the batch dims turns thousands of tiny GEMMs into one large one
    flat_weight = b.data.ndim == 2 and a.data.ndim > 2
    if flat_weight:
        k = a.shape[-1]
        n = b.shape[-1]
        data = (a.data.reshape(-1, k) @ b.data).reshape(*a.shape[:-1], n)
    else:
        data = a.data @ b.data
    out = _result(data, (a, b))
    if out.requires_grad:
        def bwd():
            g = out.grad
            if flat_weight:
                gf = g.reshape(-1, n)
                if a.requires_grad:
                    _accum(a, (gf @ b.data.T).reshape(a.shape))
                if b.requires_grad:
                    _accum(b, a.data.reshape(-1, k).T @ gf)
            else:
                if a.requires_grad:
                    _accum(a, _unbroadcast(g @ np.swapaxes(b.data, -1, -2), a.shape))
                if b.requires_grad:
                    _accum(b, _unbroadcast(np.swapaxes(a.data, -1, -2) @ g, b.shape))
        out._backward = bwd
    return out


def reshape(a: Tensor, shape: tuple[int, ...]) -> Tensor:
    out = _result(a.data.reshape(shape), (a,))
    if out.requires_grad:
        def bwd():
            _accum(a, out.grad.reshape(a.shape))
        out._backward = bwd
    return out


def transpose(a: Tensor, axes: tuple[int, ...]) -> Tensor:
    out = _result(a.data.transpose(axes), (a,))
    if out.requires_grad:
        inv = np.argsort(axes)
        def bwd():
            _accum(a, out.grad.transpose(inv))
        out._backward = bwd
    return out


def concat(tensors: Sequence[Tensor], axis: int) -> Tensor:
    if not tensors:
        raise ShapeError("concat: empty input list")
    try:
        data = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError:
        raise ShapeError(
            f"concat(axis={axis}): incompatible shapes "
            f"{[t.shape for t in tensors]}"
        ) from None
    out = _result(data, tensors)
    if out.requires_grad:
        sizes = [t.shape[axis] for t in tensors]
        offsets = np.cumsum(sizes)[:-1]
        def bwd():
            pieces = np.split(out.grad, offsets, axis=axis)
            for t, piece in zip(tensors, pieces):
                if t.requires_grad:
                    _accum(t, piece)
        out._backward = bwd
    return out


def mean(a: Tensor, axis: int, keepdims: bool = False) -> Tensor:
    out = _result(a.data.mean(axis=axis, keepdims=keepdims), (a,))
    if out.requires_grad:
        n = a.shape[axis]
        def bwd():
            g = out.grad
            if not keepdims:
                g = np.expand_dims(g, axis)
            _accum(a, np.broadcast_to(g / n, a.shape))
        out._backward = bwd
    return out


def sum_(a: Tensor, axis: int | None = None, keepdims: bool = False) -> Tensor:
    out = _result(a.data.sum(axis=axis, keepdims=keepdims), (a,))
    if out.requires_grad:
        def bwd():
            g = out.grad
            if axis is not None and not keepdims:
                g = np.expand_dims(g, axis)
            _accum(a, np.broadcast_to(g, a.shape))
        out._backward = bwd
    return out


def embedding_lookup(table: Tensor, ids) -> Tensor:
    """Row lookup: output shape = ids.shape + table.shape[1:]."""
    ids = np.asarray(ids)
    if ids.size and (ids.min() < 0 or ids.max() >= table.shape[0]):
        raise ShapeError(
            f"embedding_lookup: ids out of range [0, {table.shape[0]}), "
            f"got min={ids.min()} max={ids.max()}"
        )
    out = _result(table.data[ids], (table,))
    if out.requires_grad:
        def bwd():
            gt = np.zeros_like(table.data)
            np.add.at(gt, ids, out.grad)
            _accum(table, gt)
        out._backward = bwd
    return out


def gather_rows(a: Tensor, idx) -> Tensor:
    """Pick one slot per row: (P, S, d) gathered at idx (P,) -> (P, d)."""
    idx = np.asarray(idx)
    if a.data.ndim != 3 or idx.shape != (a.shape[0],):
        raise ShapeError(f"gather_rows: need (P,S,d) and (P,), got {a.shape} and {idx.shape}")
    rows = np.arange(a.shape[0])
    out = _result(a.data[rows, idx], (a,))
    if out.requires_grad:
        def bwd():
            ga = np.zeros_like(a.data)
            np.add.at(ga, (rows, idx), out.grad)
            _accum(a, ga)
        out._backward = bwd
    return out


def take(a: Tensor, index: int, axis: int) -> Tensor:
    """Select a single index along an axis (the axis is dropped)."""
    sl = [slice(None)] * a.data.ndim
    sl[axis] = index
    sl = tuple(sl)
    out = _result(a.data[sl], (a,))
    if out.requires_grad:
        def bwd():
            ga = np.zeros_like(a.data)
            ga[sl] += out.grad
            _accum(a, ga)
        out._backward = bwd
    return out


# ---------------------------------------------------------------------------
# normalization / regularization
# ---------------------------------------------------------------------------

def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    d = x.shape[-1]
    if gain.shape != (d,) or bias.shape != (d,):
        raise ShapeError(f"layer_norm: gain/bias must be ({d},), got {gain.shape}/{bias.shape}")
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + x.data.dtype.type(eps))
    xhat = xc * inv
    out = _result(xhat * gain.data + bias.data, (x, gain, bias))
    if out.requires_grad:
        def bwd():
            g = out.grad
            if gain.requires_grad:
                _accum(gain, (g * xhat).reshape(-1, d).sum(axis=0))
            if bias.requires_grad:
                _accum(bias, g.reshape(-1, d).sum(axis=0))
            if x.requires_grad:
                dxhat = g * gain.data
                m1 = dxhat.mean(axis=-1, keepdims=True)
                m2 = (dxhat * xhat).mean(axis=-1, keepdims=True)
                _accum(x, inv * (dxhat - m1 - xhat * m2))
        out._backward = bwd
    return out


def dropout(x: Tensor, p: float, train: bool, rng: np.random.Generator | None = None) -> Tensor:
    """Inverted dropout; identity when not training or p == 0."""
    if not train or p <= 0.0:
        return x
    if not 0.0 <= p < 1.0:
        raise ShapeError(f"dropout: p must be in [0, 1), got {p}")
    if rng is None:
        raise ValueError("dropout: rng required in training mode")
    draw_dtype = np.float32 if x.data.dtype == np.float32 else np.float64
    keep = (rng.random(x.shape, dtype=draw_dtype) >= p).astype(x.data.dtype)
    keep /= x.data.dtype.type(1.0 - p)
    out = _result(x.data * keep, (x,))
    if out.requires_grad:
        def bwd():
            _accum(x, out.grad * keep)
        out._backward = bwd
    return out


# ---------------------------------------------------------------------------
# softmax family and attention
# ---------------------------------------------------------------------------

def softmax(x: Tensor, axis: int = -1) -> Tensor:
    z = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    y = e / e.sum(axis=axis, keepdims=True)
    out = _result(y, (x,))
    if out.requires_grad:
        def bwd():
            g = out.grad
            _accum(x, y * (g - (g * y).sum(axis=axis, keepdims=True)))
        out._backward = bwd
    return out


def log_softmax(x: Tensor, axis: int = -1) -> Tensor:
    m = x.data.max(axis=axis, keepdims=True)
    z = x.data - m
    lse = np.log(np.exp(z).sum(axis=axis, keepdims=True))
    ls = z - lse
    out = _result(ls, (x,))
    if out.requires_grad:
        p = np.exp(ls)
        def bwd():
            g = out.grad
            _accum(x, g - p * g.sum(axis=axis, keepdims=True))
        out._backward = bwd
    return out


def multi_head_attention(q: Tensor, k: Tensor, v: Tensor,
                         attend_mask: np.ndarray | None, n_heads: int) -> Tensor:
    """Scaled dot-product attention over (B, T, d) inputs.

    ``attend_mask`` is a boolean (B, T) array over key positions; False
    entries are excluded from every query's attention. Rows whose keys are
    all masked degrade to a uniform distribution (their outputs are expected
    to be discarded by the caller).
    """
    if q.shape != k.shape or q.shape != v.shape or q.data.ndim != 3:
        raise ShapeError(f"attention: q/k/v must share (B,T,d), got {q.shape}/{k.shape}/{v.shape}")
    b, t, d = q.shape
    if d % n_heads != 0:
        raise ShapeError(f"attention: model dim {d} not divisible by {n_heads} heads")
    dh = d // n_heads

    def heads(x: Tensor) -> Tensor:
        return transpose(reshape(x, (b, t, n_heads, dh)), (0, 2, 1, 3))

    qh, kh, vh = heads(q), heads(k), heads(v)
    scores = scale(matmul(qh, transpose(kh, (0, 1, 3, 2))), 1.0 / math.sqrt(dh))
    if attend_mask is not None:
        if attend_mask.shape != (b, t):
            raise ShapeError(f"attention: mask must be ({b},{t}), got {attend_mask.shape}")
        bias = np.where(attend_mask, 0.0, -MASK_PENALTY).astype(q.data.dtype)
        scores = add(scores, constant(bias[:, None, None, :]))
    w = softmax(scores, axis=-1)
    ctx = matmul(w, vh)
    return reshape(transpose(ctx, (0, 2, 1, 3)), (b, t, d))


# ---------------------------------------------------------------------------
# losses
# ---------------------------------------------------------------------------

def cross_entropy(logits: Tensor, targets, label_smoothing: float = 0.0,
                  class_weights: np.ndarray | None = None) -> Tensor:
    """Mean cross entropy over a (B, C) score matrix.

    With smoothing s the target distribution is (1-s) one-hot plus s/C
    uniform. Per-example losses are weighted by ``class_weights[target]``
    and normalized by the total weight (plain mean when weights are ones).
    """
    if logits.data.ndim != 2:
        raise ShapeError(f"cross_entropy: logits must be 2-D, got {logits.shape}")
    targets = np.asarray(targets)
    n, c = logits.shape
    if targets.shape != (n,):
        raise ShapeError(f"cross_entropy: targets must be ({n},), got {targets.shape}")
    if targets.size and (targets.min() < 0 or targets.max() >= c):
        raise ShapeError(f"cross_entropy: target ids out of range [0, {c})")
    s = float(label_smoothing)
    x = logits.data
    m = x.max(axis=1, keepdims=True)
    z = x - m
    lse = np.log(np.exp(z).sum(axis=1, keepdims=True))
    logp = z - lse
    rows = np.arange(n)
    w = np.ones(n, dtype=x.dtype) if class_weights is None \
        else np.asarray(class_weights, dtype=x.dtype)[targets]
    per = -(1.0 - s) * logp[rows, targets] - (s / c) * logp.sum(axis=1)
    wsum = w.sum()
    out = _result(np.asarray((w * per).sum() / wsum, dtype=x.dtype), (logits,))
    if out.requires_grad:
        def bwd():
            p = np.exp(logp)
            tdist = np.full_like(p, s / c)
            tdist[rows, targets] += 1.0 - s
            _accum(logits, (float(out.grad) * (w / wsum))[:, None] * (p - tdist))
        out._backward = bwd
    return out


def bce_with_logits(logits: Tensor, targets, weights: np.ndarray | None = None,
                    reduction: str = "mean") -> Tensor:
    """Numerically stable binary cross entropy on raw logits.

    ``reduction`` is "mean" (weighted losses averaged over all elements) or
    "sum". Targets are 0/1 floats broadcastable to the logit shape.
    """
    t = np.broadcast_to(np.asarray(targets, dtype=logits.data.dtype), logits.shape)
    x = logits.data
    per = np.maximum(x, 0) - x * t + np.log1p(np.exp(-np.abs(x)))
    w = np.ones_like(per) if weights is None \
        else np.broadcast_to(np.asarray(weights, dtype=x.dtype), per.shape)
    if reduction == "mean":
        denom = per.size
    elif reduction == "sum":
        denom = 1
    else:
        raise ValueError(f"bce_with_logits: unknown reduction '{reduction}'")
    out = _result(np.asarray((w * per).sum() / denom, dtype=x.dtype), (logits,))
    if out.requires_grad:
        def bwd():
            sig = 1.0 / (1.0 + np.exp(-x))
            _accum(logits, float(out.grad) * w * (sig - t) / denom)
        out._backward = bwd
    return out


# ---------------------------------------------------------------------------
# parameters, optimizer, verification, persistence
# ---------------------------------------------------------------------------

class Tape:
    """Parameter registry with gradient bookkeeping.

    The compute graph itself lives on the tensors (define-by-run); the tape
    owns the named trainable parameters, their accumulated gradients, and
    the RNG used for initialization.
    """

    def __init__(self, dtype=np.float32, seed: int = 0):
        self.dtype = np.dtype(dtype)
        self.params: dict[str, Tensor] = {}
        self._rng = np.random.default_rng(seed)

    def parameter(self, name: str, shape: tuple[int, ...],
                  init: str = "uniform", fan_in: int | None = None) -> Tensor:
        """Allocate a named parameter.

        "uniform" draws from U(-1/sqrt(fan_in), 1/sqrt(fan_in)) with fan_in
        defaulting to the first dimension; "zeros"/"ones" for biases and
        layer-norm gains.
        """
        if name in self.params:
            raise ValueError(f"duplicate parameter name '{name}'")
        if init == "uniform":
            bound = 1.0 / math.sqrt(fan_in if fan_in is not None else shape[0])
            data = self._rng.uniform(-bound, bound, size=shape)
        elif init == "zeros":
            data = np.zeros(shape)
        elif init == "ones":
            data = np.ones(shape)
        else:
            raise ValueError(f"unknown init '{init}'")
        t = Tensor(data.astype(self.dtype), requires_grad=True, name=name)
        t.grad = np.zeros_like(t.data)
        self.params[name] = t
        return t

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.grad = np.zeros_like(p.data)

    def num_params(self) -> int:
        return sum(p.data.size for p in self.params.values())

    def astype(self, dtype) -> "Tape":
        """Copy of this tape with parameters cast to another float dtype."""
        clone = Tape(dtype=dtype)
        for name, p in self.params.items():
            t = Tensor(p.data.astype(dtype), requires_grad=True, name=name)
            t.grad = np.zeros_like(t.data)
            clone.params[name] = t
        return clone


class Adam:
    """Adam with bias correction; state is kept per parameter name."""

    def __init__(self, tape: Tape, lr: float = 1e-3, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.tape = tape
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = {n: np.zeros_like(p.data) for n, p in tape.params.items()}
        self.v = {n: np.zeros_like(p.data) for n, p in tape.params.items()}

    def step(self) -> None:
        self.t += 1
        bc1 = 1.0 - self.beta1 ** self.t
        bc2 = 1.0 - self.beta2 ** self.t
        for name, p in self.tape.params.items():
            g = p.grad
            if g is None:
                continue
            if not np.all(np.isfinite(g)):
                raise NumericError(f"non-finite gradient for parameter '{name}'")
            m = self.m[name]
            v = self.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            p.data -= self.lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)


def grad_check(f: Callable[[], Tensor], params: Iterable[Tensor], eps: float = 1e-5) -> float:
    """Max relative error between tape gradients and central differences.

    ``f`` must rebuild its scalar output on every call and be deterministic
    (no dropout). Meaningful only with float64 parameters.
    """
    params = list(params)
    for p in params:
        p.grad = np.zeros_like(p.data)
    out = f()
    if out.data.size != 1:
        raise ShapeError(f"grad_check: f() must be scalar, got shape {out.shape}")
    out.backward()
    analytic = [np.array(p.grad, dtype=np.float64) for p in params]
    worst = 0.0
    with no_grad():
        for p, ga in zip(params, analytic):
            flat = p.data.reshape(-1)
            gfl = ga.reshape(-1)
            for i in range(flat.size):
                keep = flat[i]
                flat[i] = keep + eps
                fp = float(f().data)
                flat[i] = keep - eps
                fm = float(f().data)
                flat[i] = keep
                gn = (fp - fm) / (2.0 * eps)
                rel = abs(gfl[i] - gn) / max(abs(gfl[i]), abs(gn), 1e-6)
                worst = max(worst, rel)
    return worst


def save_checkpoint(path, tape: Tape) -> None:
    """Write parameters as little-endian float32 records."""
    with open(path, "wb") as f:
        f.write(CKPT_MAGIC)
        for name, p in tape.params.items():
            nb = name.encode("utf-8")
            f.write(struct.pack("<I", len(nb)))
            f.write(nb)
            shape = p.data.shape
            f.write(struct.pack("<I", len(shape)))
            if shape:
                f.write(struct.pack(f"<{len(shape)}I", *shape))
            f.write(np.ascontiguousarray(p.data, dtype="<f4").tobytes())


def _read_exact(f, n: int, what: str) -> bytes:
    buf = f.read(n)
    if len(buf) != n:
        raise DataError(f"truncated checkpoint while reading {what}")
    return buf


def load_checkpoint(path) -> dict[str, np.ndarray]:
    """Read a checkpoint into a name -> float32 array dict."""
    with open(path, "rb") as f:
        magic = f.read(len(CKPT_MAGIC))
        if magic != CKPT_MAGIC:
            raise DataError(f"checkpoint version mismatch in {path!s} "
                            f"(expected {CKPT_MAGIC.strip().decode()})")
        out: dict[str, np.ndarray] = {}
        while True:
            head = f.read(4)
            if not head:
                return out
            if len(head) != 4:
                raise DataError("truncated checkpoint while reading name length")
            (nlen,) = struct.unpack("<I", head)
            name = _read_exact(f, nlen, "name").decode("utf-8")
            (rank,) = struct.unpack("<I", _read_exact(f, 4, "rank"))
            shape = struct.unpack(f"<{rank}I", _read_exact(f, 4 * rank, "dims")) if rank else ()
            count = int(np.prod(shape)) if shape else 1
            raw = _read_exact(f, 4 * count, f"data of '{name}'")
            out[name] = np.frombuffer(raw, dtype="<f4").reshape(shape).copy()


def load_into_tape(path, tape: Tape) -> None:
    """Load a checkpoint into an existing tape; names and shapes must match."""
    loaded = load_checkpoint(path)
    if set(loaded) != set(tape.params):
        missing = set(tape.params) - set(loaded)
        extra = set(loaded) - set(tape.params)
        raise DataError(f"checkpoint/model mismatch: missing={sorted(missing)} "
                        f"unexpected={sorted(extra)}")
    for name, arr in loaded.items():
        p = tape.params[name]
        if arr.shape != p.data.shape:
            raise DataError(f"checkpoint shape mismatch for '{name}': "
                            f"{arr.shape} vs {p.data.shape}")
        p.data = arr.astype(tape.dtype)
        p.grad = np.zeros_like(p.data)
