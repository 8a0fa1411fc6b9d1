"""Dense float64 tensors with reverse-mode automatic differentiation.

Everything downstream (the translation model, the relaxed decoders) is
built from the primitives in this module.  A ComputeTape records the
primitive calls of one forward pass in execution order; replaying the
records backwards once yields gradients with respect to any leaf.  Tapes
are cheap throwaway objects recorded per sentence, so variable sequence
lengths need no padding or graph compilation.  Running with no tape
active skips all recording, which is the fast path for pure inference.

Gradient arrays are never mutated in place: accumulation always builds a
new array.  This lets backward rules hand out views without aliasing
bugs.
"""

from __future__ import annotations

import threading

import numpy as np
from scipy.special import expit

__all__ = [
    "ShapeMismatch",
    "NonFiniteError",
    "Tensor",
    "Tape",
    "tensor",
    "add",
    "mul",
    "scale",
    "matmul",
    "affine",
    "add_rowvec",
    "tanh",
    "sigmoid",
    "concat",
    "vslice",
    "stack",
    "row_select",
    "weighted_row_sum",
    "softmax",
    "log_softmax",
    "pick",
    "dot",
    "tsum",
]


class ShapeMismatch(ValueError):
    """Operand shapes are incompatible for the requested primitive."""


class NonFiniteError(ValueError):
    """An operation received or would produce NaN/Inf where forbidden."""


_STACK = threading.local()


def _active():
    try:
        return _STACK.tapes[-1]
    except (AttributeError, IndexError):
        return None


class Tensor:
    """A dense float64 array plus the gradient slot filled by backward().

    `data` is row-major float64.  `grad` stays None until a backward pass
    deposits something; a leaf that the loss never touches keeps grad
    None, which readers must treat as zero.
    """

    __slots__ = ("data", "grad", "requires_grad")

    def __init__(self, data, requires_grad=False):
        self.data = data
        self.grad = None
        self.requires_grad = requires_grad

    @property
    def shape(self):
        return np.shape(self.data)

    def __repr__(self):
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"


def tensor(data, requires_grad=False):
    """Build a Tensor from user data, validating dtype and finiteness."""
    arr = np.asarray(data, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise NonFiniteError("tensor data contains NaN or Inf")
    return Tensor(arr, requires_grad)


def _acc(t, g):
    # Functional accumulation; never += (see module docstring).
    if t.grad is None:
        t.grad = g
    else:
        t.grad = t.grad + g


class Tape:
    """Ordered record of one forward pass.

    Appending order is a topological order of the dataflow, so the
    backward pass is a single reversed sweep visiting each node exactly
    once.  A tape is single-owner: it must not be shared across threads,
    though many tapes may run concurrently over shared read-only
    parameter tensors (the stack of active tapes is thread-local).
    """

    __slots__ = ("nodes", "_done")

    def __init__(self):
        self.nodes = []
        self._done = False

    def __enter__(self):
        try:
            _STACK.tapes.append(self)
        except AttributeError:
            _STACK.tapes = [self]
        return self

    def __exit__(self, *exc):
        _STACK.tapes.pop()
        return False

    def backward(self, loss, wrt=None):
        """Reverse sweep from scalar `loss`; returns a gradient map for `wrt`.

        Tensors in `wrt` that the loss does not depend on map to zeros.
        """
        if self._done:
            raise RuntimeError("tape already consumed by a backward pass")
        if np.shape(loss.data) != ():
            raise ShapeMismatch(
                f"backward needs a scalar loss, got shape {np.shape(loss.data)}"
            )
        self._done = True
        loss.grad = np.float64(1.0)
        for node in reversed(self.nodes):
            node()
        if wrt is None:
            return None
        return {
            t: (t.grad if t.grad is not None else np.zeros_like(t.data))
            for t in wrt
        }


def add(a, b):
    if np.shape(a.data) != np.shape(b.data):
        raise ShapeMismatch(
            f"add: shapes {np.shape(a.data)} and {np.shape(b.data)} differ"
        )
    out = Tensor(a.data + b.data)
    tape = _active()
    if tape is not None and (a.requires_grad or b.requires_grad):
        out.requires_grad = True

        def node():
            g = out.grad
            if g is None:
                return
            if a.requires_grad:
                _acc(a, g)
            if b.requires_grad:
                _acc(b, g)

        tape.nodes.append(node)
    return out


def mul(a, b):
    if np.shape(a.data) != np.shape(b.data):
        raise ShapeMismatch(
            f"mul: shapes {np.shape(a.data)} and {np.shape(b.data)} differ"
        )
    out = Tensor(a.data * b.data)
    tape = _active()
    if tape is not None and (a.requires_grad or b.requires_grad):
        out.requires_grad = True

        def node():
            g = out.grad
            if g is None:
                return
            if a.requires_grad:
                _acc(a, g * b.data)
            if b.requires_grad:
                _acc(b, g * a.data)

        tape.nodes.append(node)
    return out


def scale(a, c):
    """Multiply by a python float constant (not differentiated in c)."""
    c = float(c)
    out = Tensor(a.data * c)
    tape = _active()
    if tape is not None and a.requires_grad:
        out.requires_grad = True

        def node():
            g = out.grad
            if g is not None:
                _acc(a, g * c)

        tape.nodes.append(node)
    return out


def matmul(a, b):
    """Matrix/vector product with the usual numpy `@` shape rules."""
    ad, bd = a.data, b.data
    if ad.ndim not in (1, 2) or bd.ndim not in (1, 2):
        raise ShapeMismatch(
            f"matmul: operands must be 1-d or 2-d, got {ad.shape} @ {bd.shape}"
        )
    if ad.shape[-1] != bd.shape[0]:
        raise ShapeMismatch(f"matmul: inner dims of {ad.shape} @ {bd.shape} differ")
    out = Tensor(ad @ bd)
    tape = _active()
    if tape is not None and (a.requires_grad or b.requires_grad):
        out.requires_grad = True

        def node():
            g = out.grad
            if g is None:
                return
            if ad.ndim == 2 and bd.ndim == 2:
                if a.requires_grad:
                    _acc(a, g @ bd.T)
                if b.requires_grad:
                    _acc(b, ad.T @ g)
            elif ad.ndim == 2:  # (m,n) @ (n,) -> (m,)
                if a.requires_grad:
                    _acc(a, np.outer(g, bd))
                if b.requires_grad:
                    _acc(b, ad.T @ g)
            elif bd.ndim == 2:  # (n,) @ (n,k) -> (k,)
                if a.requires_grad:
                    _acc(a, bd @ g)
                if b.requires_grad:
                    _acc(b, np.outer(ad, g))
            else:  # inner product
                if a.requires_grad:
                    _acc(a, g * bd)
                if b.requires_grad:
                    _acc(b, g * ad)

        tape.nodes.append(node)
    return out


def affine(w, x, b):
    """w @ x + b for a weight matrix, input vector, and bias vector."""
    wd, xd, bd = w.data, x.data, b.data
    if wd.ndim != 2 or xd.ndim != 1 or bd.ndim != 1:
        raise ShapeMismatch(
            f"affine: need (m,n) @ (n,) + (m,), got {wd.shape}, {xd.shape}, {bd.shape}"
        )
    if wd.shape[1] != xd.shape[0] or wd.shape[0] != bd.shape[0]:
        raise ShapeMismatch(
            f"affine: shapes {wd.shape}, {xd.shape}, {bd.shape} are inconsistent"
        )
    out = Tensor(wd @ xd + bd)
    tape = _active()
    if tape is not None and (w.requires_grad or x.requires_grad or b.requires_grad):
        out.requires_grad = True

        def node():
            g = out.grad
            if g is None:
                return
            if w.requires_grad:
                _acc(w, np.outer(g, xd))
            if x.requires_grad:
                _acc(x, wd.T @ g)
            if b.requires_grad:
                _acc(b, g)

        tape.nodes.append(node)
    return out


def add_rowvec(m, v):
    """Add a vector to every row of a matrix."""
    md, vd = m.data, v.data
    if md.ndim != 2 or vd.ndim != 1 or md.shape[1] != vd.shape[0]:
        raise ShapeMismatch(f"add_rowvec: shapes {md.shape} and {vd.shape} mismatch")
    out = Tensor(md + vd)
    tape = _active()
    if tape is not None and (m.requires_grad or v.requires_grad):
        out.requires_grad = True

        def node():
            g = out.grad
            if g is None:
                return
            if m.requires_grad:
                _acc(m, g)
            if v.requires_grad:
                _acc(v, g.sum(axis=0))

        tape.nodes.append(node)
    return out


def tanh(x):
    out = Tensor(np.tanh(x.data))
    tape = _active()
    if tape is not None and x.requires_grad:
        out.requires_grad = True

        def node():
            g = out.grad
            if g is not None:
                _acc(x, g * (1.0 - out.data * out.data))

        tape.nodes.append(node)
    return out


def sigmoid(x):
    out = Tensor(expit(x.data))
    tape = _active()
    if tape is not None and x.requires_grad:
        out.requires_grad = True

        def node():
            g = out.grad
            if g is not None:
                _acc(x, g * out.data * (1.0 - out.data))

        tape.nodes.append(node)
    return out


def concat(*parts):
    """Concatenate vectors into one vector."""
    datas = [p.data for p in parts]
    for d in datas:
        if d.ndim != 1:
            raise ShapeMismatch(
                f"concat: only vectors, got shapes {[d.shape for d in datas]}"
            )
    out = Tensor(np.concatenate(datas))
    tape = _active()
    if tape is not None and any(p.requires_grad for p in parts):
        out.requires_grad = True
        offsets = np.cumsum([0] + [d.shape[0] for d in datas])

        def node():
            g = out.grad
            if g is None:
                return
            for p, a, b in zip(parts, offsets[:-1], offsets[1:]):
                if p.requires_grad:
                    _acc(p, g[a:b])

        tape.nodes.append(node)
    return out


def vslice(x, start, stop):
    """Contiguous slice of a vector."""
    xd = x.data
    if xd.ndim != 1 or not (0 <= start <= stop <= xd.shape[0]):
        raise ShapeMismatch(f"vslice: [{start}:{stop}] invalid for shape {xd.shape}")
    out = Tensor(xd[start:stop])
    tape = _active()
    if tape is not None and x.requires_grad:
        out.requires_grad = True

        def node():
            g = out.grad
            if g is not None:
                full = np.zeros_like(xd)
                full[start:stop] = g
                _acc(x, full)

        tape.nodes.append(node)
    return out


def stack(rows):
    """Stack equal-length vectors into a matrix, one per row."""
    rows = list(rows)
    if not rows:
        raise ShapeMismatch("stack: need at least one row")
    n = rows[0].data.shape[0]
    for r in rows:
        if r.data.ndim != 1 or r.data.shape[0] != n:
            raise ShapeMismatch(
                f"stack: rows of shapes {[r.data.shape for r in rows]} differ"
            )
    out = Tensor(np.stack([r.data for r in rows]))
    tape = _active()
    if tape is not None and any(r.requires_grad for r in rows):
        out.requires_grad = True

        def node():
            g = out.grad
            if g is None:
                return
            for k, r in enumerate(rows):
                if r.requires_grad:
                    _acc(r, g[k])

        tape.nodes.append(node)
    return out


def row_select(m, i):
    """Row i of a matrix (used for embedding lookups)."""
    md = m.data
    if md.ndim != 2:
        raise ShapeMismatch(f"row_select: need a matrix, got shape {md.shape}")
    i = int(i)
    if not 0 <= i < md.shape[0]:
        raise ShapeMismatch(f"row_select: row {i} outside matrix of shape {md.shape}")
    out = Tensor(md[i])
    tape = _active()
    if tape is not None and m.requires_grad:
        out.requires_grad = True

        def node():
            g = out.grad
            if g is not None:
                full = np.zeros_like(md)
                full[i] = g
                _acc(m, full)

        tape.nodes.append(node)
    return out


def weighted_row_sum(d, m):
    """Sum of the rows of `m` weighted by the vector `d` (d @ m).

    This is the expected-embedding primitive: with `d` a distribution
    over rows, the result is the expectation of the row vectors.
    """
    dd, md = d.data, m.data
    if dd.ndim != 1 or md.ndim != 2 or dd.shape[0] != md.shape[0]:
        raise ShapeMismatch(
            f"weighted_row_sum: weights {dd.shape} vs matrix {md.shape}"
        )
    out = Tensor(dd @ md)
    tape = _active()
    if tape is not None and (d.requires_grad or m.requires_grad):
        out.requires_grad = True

        def node():
            g = out.grad
            if g is None:
                return
            if d.requires_grad:
                _acc(d, md @ g)
            if m.requires_grad:
                _acc(m, np.outer(dd, g))

        tape.nodes.append(node)
    return out


def softmax(v):
    """Numerically stable softmax of a vector (max-subtracted)."""
    vd = v.data
    if vd.ndim != 1:
        raise ShapeMismatch(f"softmax: need a vector, got shape {vd.shape}")
    if not np.all(np.isfinite(vd)):
        raise NonFiniteError("softmax input contains NaN or Inf")
    e = np.exp(vd - vd.max())
    out = Tensor(e / e.sum())
    tape = _active()
    if tape is not None and v.requires_grad:
        out.requires_grad = True

        def node():
            g = out.grad
            if g is not None:
                s = out.data
                _acc(v, (g - np.dot(g, s)) * s)

        tape.nodes.append(node)
    return out


def log_softmax(v):
    """Numerically stable log softmax of a vector (max-subtracted)."""
    vd = v.data
    if vd.ndim != 1:
        raise ShapeMismatch(f"log_softmax: need a vector, got shape {vd.shape}")
    if not np.all(np.isfinite(vd)):
        raise NonFiniteError("log_softmax input contains NaN or Inf")
    z = vd - vd.max()
    out = Tensor(z - np.log(np.exp(z).sum()))
    tape = _active()
    if tape is not None and v.requires_grad:
        out.requires_grad = True

        def node():
            g = out.grad
            if g is not None:
                _acc(v, g - np.exp(out.data) * g.sum())

        tape.nodes.append(node)
    return out


def pick(v, i):
    """Scalar entry i of a vector."""
    vd = v.data
    if vd.ndim != 1:
        raise ShapeMismatch(f"pick: need a vector, got shape {vd.shape}")
    i = int(i)
    if not 0 <= i < vd.shape[0]:
        raise ShapeMismatch(f"pick: index {i} outside vector of shape {vd.shape}")
    out = Tensor(vd[i])
    tape = _active()
    if tape is not None and v.requires_grad:
        out.requires_grad = True

        def node():
            g = out.grad
            if g is not None:
                full = np.zeros_like(vd)
                full[i] = g
                _acc(v, full)

        tape.nodes.append(node)
    return out


def dot(a, b):
    """Inner product of two vectors (scalar output)."""
    ad, bd = a.data, b.data
    if ad.ndim != 1 or bd.ndim != 1 or ad.shape[0] != bd.shape[0]:
        raise ShapeMismatch(f"dot: shapes {ad.shape} and {bd.shape} mismatch")
    out = Tensor(np.dot(ad, bd))
    tape = _active()
    if tape is not None and (a.requires_grad or b.requires_grad):
        out.requires_grad = True

        def node():
            g = out.grad
            if g is None:
                return
            if a.requires_grad:
                _acc(a, g * bd)
            if b.requires_grad:
                _acc(b, g * ad)

        tape.nodes.append(node)
    return out


def tsum(x):
    """Sum of all entries (scalar output)."""
    out = Tensor(np.float64(x.data.sum()))
    tape = _active()
    if tape is not None and x.requires_grad:
        out.requires_grad = True

        def node():
            g = out.grad
            if g is not None:
                _acc(x, np.full_like(x.data, g))

        tape.nodes.append(node)
    return out
