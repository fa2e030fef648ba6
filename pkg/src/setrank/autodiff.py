"""Dense 2-D float64 tensors with taped reverse-mode differentiation.

Everything in the package flows through :class:`Tensor` (strictly 2-D,
row-major, double precision).  Operations compute eagerly; when a
:class:`Graph` is active (``with Graph() as tape: ...``) and an input
requires gradients, the operation also records a backward rule on the tape.
``backward(loss, tape)`` then replays the tape in reverse, visiting each
node exactly once, and *adds* the resulting gradients into the ``grad``
slot of every tensor that requires them -- callers zero gradients between
steps.

Gradient arrays are never mutated in place after being stored, so backward
rules may hand the same array to several inputs (e.g. ``add``).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import backend as K
from .errors import NumericError, ShapeError

__all__ = [
    "Tensor", "Graph", "backward", "finite_diff_check",
    "matmul", "matmul_nt", "transpose", "row_softmax", "layer_norm",
    "relu", "affine", "add", "concat_cols", "scale_shift", "mul",
    "log", "clip", "sum_all", "gather_rows",
    "AdamState", "adam_step",
]


class Tensor:
    """A (rows, cols) float64 matrix with an accumulated-gradient slot.

    Scalars and 1-D input are promoted to shape (1, 1) / (1, n).  Values
    must be finite; non-finite input is rejected at construction.
    """

    __slots__ = ("data", "grad", "requires_grad")

    def __init__(self, values, requires_grad=False):
        arr = np.asarray(values, dtype=np.float64)
        if arr.ndim == 0:
            arr = arr.reshape(1, 1)
        elif arr.ndim == 1:
            arr = arr.reshape(1, -1)
        elif arr.ndim != 2:
            raise ShapeError(f"tensors are 2-D; got ndim={arr.ndim}")
        arr = np.ascontiguousarray(arr)
        if not np.all(np.isfinite(arr)):
            raise NumericError("tensor values must be finite")
        self.data = arr
        self.grad = None
        self.requires_grad = bool(requires_grad)

    @classmethod
    def _wrap(cls, data, requires_grad):
        # Internal fast path for op outputs: data is already a fresh,
        # contiguous float64 array.
        obj = object.__new__(cls)
        obj.data = data
        obj.grad = None
        obj.requires_grad = requires_grad
        return obj

    @property
    def shape(self):
        return self.data.shape

    @property
    def rows(self):
        return self.data.shape[0]

    @property
    def cols(self):
        return self.data.shape[1]

    def item(self):
        if self.data.shape != (1, 1):
            raise ShapeError(f"item() needs a 1x1 tensor, got {self.shape}")
        return float(self.data[0, 0])

    def zero_grad(self):
        self.grad = None

    def grad_or_zeros(self):
        return self.grad if self.grad is not None else np.zeros_like(self.data)

    def copy(self):
        out = Tensor._wrap(self.data.copy(), self.requires_grad)
        if self.grad is not None:
            out.grad = self.grad.copy()
        return out

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{flag})"


_STACK: list["Graph"] = []


class Graph:
    """Tape of recorded operations in topological (execution) order."""

    def __init__(self):
        self._nodes = []

    def _record(self, out, vjp):
        self._nodes.append((out, vjp))

    def __len__(self):
        return len(self._nodes)

    def __enter__(self):
        _STACK.append(self)
        return self

    def __exit__(self, exc_type, exc, tb):
        popped = _STACK.pop()
        assert popped is self
        return False


def _tape():
    return _STACK[-1] if _STACK else None


def backward(loss, graph):
    """Accumulate d(loss)/d(tensor) into .grad of every requires_grad tensor.

    The sweep keeps its own per-tensor buffers, so calling backward twice on
    the same tape (without zeroing) exactly doubles every gradient.
    """
    if loss.shape != (1, 1):
        raise ShapeError(f"backward needs a scalar (1x1) loss, got {loss.shape}")
    sweep = {id(loss): np.ones((1, 1))}
    holders = {id(loss): loss}

    def accumulate(t, g):
        key = id(t)
        cur = sweep.get(key)
        # Never mutate g or cur in place: arrays may be shared between slots.
        sweep[key] = g if cur is None else cur + g
        holders[key] = t

    for out, vjp in reversed(graph._nodes):
        gout = sweep.pop(id(out), None)
        if gout is None:
            continue  # not on a path to the loss
        t = holders.pop(id(out))
        if t.requires_grad:
            t.grad = gout if t.grad is None else t.grad + gout
        vjp(gout, accumulate)
    for key, t in holders.items():
        if t.requires_grad:
            g = sweep[key]
            t.grad = g if t.grad is None else t.grad + g


# ---------------------------------------------------------------------------
# Operations
# ---------------------------------------------------------------------------

def _result(data, inputs):
    out = Tensor._wrap(data, any(t.requires_grad for t in inputs))
    return out, (_tape() if out.requires_grad else None)


def matmul(a, b):
    """Matrix product a @ b."""
    if a.cols != b.rows:
        raise ShapeError(f"matmul: inner dimensions differ ({a.shape} x {b.shape})")
    out, tape = _result(K.matmul(a.data, b.data), (a, b))
    if tape is not None:
        ad, bd = a.data, b.data

        def vjp(gout, acc):
            if a.requires_grad:
                acc(a, K.matmul_nt(gout, bd))
            if b.requires_grad:
                acc(b, K.matmul_tn(ad, gout))
        tape._record(out, vjp)
    return out


def matmul_nt(a, b):
    """a @ b.T -- the row-by-row dot products used for attention logits."""
    if a.cols != b.cols:
        raise ShapeError(f"matmul_nt: column widths differ ({a.shape} x {b.shape})")
    out, tape = _result(K.matmul_nt(a.data, b.data), (a, b))
    if tape is not None:
        ad, bd = a.data, b.data

        def vjp(gout, acc):
            if a.requires_grad:
                acc(a, K.matmul(gout, bd))
            if b.requires_grad:
                acc(b, K.matmul_tn(gout, ad))
        tape._record(out, vjp)
    return out


def transpose(x):
    out, tape = _result(np.ascontiguousarray(x.data.T), (x,))
    if tape is not None:
        def vjp(gout, acc):
            acc(x, np.ascontiguousarray(gout.T))
        tape._record(out, vjp)
    return out


def row_softmax(x):
    """Softmax within each row (max-subtracted; rows sum to 1)."""
    y = K.row_softmax(x.data)
    out, tape = _result(y, (x,))
    if tape is not None:
        def vjp(gout, acc):
            acc(x, K.row_softmax_grad(y, gout))
        tape._record(out, vjp)
    return out


def layer_norm(x, gain, bias, eps=1e-6):
    """Row-wise normalization to zero mean / unit variance, then gain & bias."""
    if eps <= 0.0:
        raise ShapeError("layer_norm: eps must be positive")
    if gain.shape != (1, x.cols) or bias.shape != (1, x.cols):
        raise ShapeError(
            f"layer_norm: gain/bias must be (1, {x.cols}), "
            f"got {gain.shape} / {bias.shape}")
    y, xhat, inv_std = K.layer_norm(x.data, gain.data, bias.data, eps)
    out, tape = _result(y, (x, gain, bias))
    if tape is not None:
        gd = gain.data

        def vjp(gout, acc):
            gx, ggain, gbias = K.layer_norm_grad(xhat, inv_std, gd, gout)
            if x.requires_grad:
                acc(x, gx)
            if gain.requires_grad:
                acc(gain, ggain)
            if bias.requires_grad:
                acc(bias, gbias)
        tape._record(out, vjp)
    return out


def relu(x):
    out, tape = _result(K.relu(x.data), (x,))
    if tape is not None:
        xd = x.data

        def vjp(gout, acc):
            acc(x, K.relu_grad(xd, gout))
        tape._record(out, vjp)
    return out


def affine(x, w, b):
    """x @ w + b with the bias row broadcast over rows of x."""
    if x.cols != w.rows:
        raise ShapeError(f"affine: inner dimensions differ ({x.shape} x {w.shape})")
    if b.shape != (1, w.cols):
        raise ShapeError(f"affine: bias must be (1, {w.cols}), got {b.shape}")
    out, tape = _result(K.matmul(x.data, w.data) + b.data, (x, w, b))
    if tape is not None:
        xd, wd = x.data, w.data

        def vjp(gout, acc):
            if x.requires_grad:
                acc(x, K.matmul_nt(gout, wd))
            if w.requires_grad:
                acc(w, K.matmul_tn(xd, gout))
            if b.requires_grad:
                acc(b, gout.sum(axis=0, keepdims=True))
        tape._record(out, vjp)
    return out


def add(a, b):
    if a.shape != b.shape:
        raise ShapeError(f"add: shapes differ ({a.shape} vs {b.shape})")
    out, tape = _result(a.data + b.data, (a, b))
    if tape is not None:
        def vjp(gout, acc):
            if a.requires_grad:
                acc(a, gout)
            if b.requires_grad:
                acc(b, gout)
        tape._record(out, vjp)
    return out


def concat_cols(parts):
    """Column-wise concatenation; all parts share the row count."""
    parts = list(parts)
    if not parts:
        raise ShapeError("concat_cols: need at least one part")
    rows = parts[0].rows
    for p in parts:
        if p.rows != rows:
            raise ShapeError("concat_cols: row counts differ")
    out, tape = _result(
        np.ascontiguousarray(np.concatenate([p.data for p in parts], axis=1)),
        parts)
    if tape is not None:
        widths = [p.cols for p in parts]

        def vjp(gout, acc):
            lo = 0
            for p, w in zip(parts, widths):
                if p.requires_grad:
                    acc(p, gout[:, lo:lo + w])
                lo += w
        tape._record(out, vjp)
    return out


def scale_shift(x, scale=1.0, shift=0.0):
    """Elementwise alpha * x + beta with scalar constants."""
    out, tape = _result(x.data * scale + shift, (x,))
    if tape is not None:
        def vjp(gout, acc):
            acc(x, gout * scale)
        tape._record(out, vjp)
    return out


def mul(a, b):
    """Elementwise (Hadamard) product of same-shape tensors."""
    if a.shape != b.shape:
        raise ShapeError(f"mul: shapes differ ({a.shape} vs {b.shape})")
    out, tape = _result(a.data * b.data, (a, b))
    if tape is not None:
        ad, bd = a.data, b.data

        def vjp(gout, acc):
            if a.requires_grad:
                acc(a, gout * bd)
            if b.requires_grad:
                acc(b, gout * ad)
        tape._record(out, vjp)
    return out


def log(x):
    if np.any(x.data <= 0.0):
        raise NumericError("log: input must be strictly positive")
    out, tape = _result(np.log(x.data), (x,))
    if tape is not None:
        xd = x.data

        def vjp(gout, acc):
            acc(x, gout / xd)
        tape._record(out, vjp)
    return out


def clip(x, lo, hi):
    """Clamp values to [lo, hi]; gradient passes only where not clamped."""
    out, tape = _result(np.clip(x.data, lo, hi), (x,))
    if tape is not None:
        mask = (x.data > lo) & (x.data < hi)

        def vjp(gout, acc):
            acc(x, np.where(mask, gout, 0.0))
        tape._record(out, vjp)
    return out


def sum_all(x):
    """Sum of all entries, as a 1x1 tensor."""
    out, tape = _result(np.array([[x.data.sum()]]), (x,))
    if tape is not None:
        shape = x.shape

        def vjp(gout, acc):
            acc(x, np.full(shape, gout[0, 0]))
        tape._record(out, vjp)
    return out


def gather_rows(table, indices):
    """Select rows of a table; backward scatter-adds into the table."""
    idx = np.asarray(indices, dtype=np.intp)
    if idx.ndim != 1:
        raise ShapeError("gather_rows: indices must be 1-D")
    if idx.size and (idx.min() < 0 or idx.max() >= table.rows):
        raise ShapeError(
            f"gather_rows: index out of range for table with {table.rows} rows")
    out, tape = _result(table.data[idx], (table,))
    if tape is not None:
        def vjp(gout, acc):
            g = np.zeros_like(table.data)
            np.add.at(g, idx, gout)
            acc(table, g)
        tape._record(out, vjp)
    return out


# ---------------------------------------------------------------------------
# Verification oracle
# ---------------------------------------------------------------------------

def finite_diff_check(f, params, h=1e-5, samples=50, rng=None):
    """Compare analytic gradients of ``f`` against central differences.

    ``f`` is a zero-argument callable returning a scalar (1x1) Tensor;
    evaluating it must depend on the current values of ``params`` (a Tensor
    or a sequence of Tensors).  The analytic side records one forward pass
    on a fresh tape and runs :func:`backward`; the numeric side re-evaluates
    ``f`` at +/- h on up to ``samples`` coordinates sampled across all
    parameters.  Returns the maximum relative error
    ``|analytic - numeric| / (|analytic| + |numeric| + 1e-12)``.
    """
    if h <= 0.0:
        raise ShapeError("finite_diff_check: h must be positive")
    plist = [params] if isinstance(params, Tensor) else list(params)
    rng = np.random.default_rng(0) if rng is None else rng

    for p in plist:
        p.zero_grad()
    with Graph() as tape:
        out = f()
    if out.shape != (1, 1):
        raise ShapeError("finite_diff_check: f must return a scalar tensor")
    backward(out, tape)
    analytic = [p.grad_or_zeros() for p in plist]

    coords = [(pi, i, j)
              for pi, p in enumerate(plist)
              for i in range(p.rows)
              for j in range(p.cols)]
    if len(coords) > samples:
        chosen = rng.choice(len(coords), size=samples, replace=False)
        coords = [coords[c] for c in chosen]

    max_err = 0.0
    for pi, i, j in coords:
        p = plist[pi]
        orig = p.data[i, j]
        p.data[i, j] = orig + h
        f_plus = f().item()
        p.data[i, j] = orig - h
        f_minus = f().item()
        p.data[i, j] = orig
        numeric = (f_plus - f_minus) / (2.0 * h)
        a = analytic[pi][i, j]
        err = abs(a - numeric) / (abs(a) + abs(numeric) + 1e-12)
        max_err = max(max_err, err)
    return max_err


# ---------------------------------------------------------------------------
# Optimizer
# ---------------------------------------------------------------------------

@dataclass
class AdamState:
    """Adam moment buffers and hyperparameters for a fixed parameter list."""

    m: list = field(default_factory=list)
    v: list = field(default_factory=list)
    t: int = 0
    learning_rate: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_params(cls, params, learning_rate=0.001, beta1=0.9,
                   beta2=0.999, eps=1e-8):
        return cls(
            m=[np.zeros_like(p.data) for p in params],
            v=[np.zeros_like(p.data) for p in params],
            t=0,
            learning_rate=learning_rate,
            beta1=beta1,
            beta2=beta2,
            eps=eps,
        )


def adam_step(params, grads, state):
    """One in-place Adam update with bias correction.

    ``grads`` entries may be None (treated as zero).  A non-finite gradient
    rejects the whole step before any parameter is touched.
    """
    if len(params) != len(state.m) or len(grads) != len(params):
        raise ShapeError("adam_step: params/grads/state lengths differ")
    gs = []
    for p, g, m in zip(params, grads, state.m):
        g = np.zeros_like(p.data) if g is None else np.asarray(g, dtype=np.float64)
        if g.shape != m.shape or g.shape != p.data.shape:
            raise ShapeError("adam_step: gradient shape does not match parameter")
        if not np.all(np.isfinite(g)):
            raise NumericError("adam_step: non-finite gradient; step rejected")
        gs.append(g)

    state.t += 1
    bc1 = 1.0 - state.beta1 ** state.t
    bc2 = 1.0 - state.beta2 ** state.t
    for p, g, m, v in zip(params, gs, state.m, state.v):
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * np.square(g)
        p.data -= state.learning_rate * (m / bc1) / (np.sqrt(v / bc2) + state.eps)
