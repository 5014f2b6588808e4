"""Minimal reverse-mode automatic differentiation over numpy arrays.

A ``Tape`` is an ordered record of the forward operations executed while it
is active; ``Tape.gradients`` walks the record backwards and accumulates
vector-Jacobian products.  Operations accept either ``Var`` objects or raw
numpy arrays; raw inputs are treated as constants, and calls with no ``Var``
argument stay in plain numpy (no recording, no overhead), so the same
transform code serves both training and inference.

Complex support follows the usual convention for real-valued objectives:
the gradient stored for a complex tensor ``z`` is
``dL/dRe(z) + i dL/dIm(z)``, so linear maps pull back through their
conjugate transpose and parameter updates can treat real and imaginary
parts as independent real coordinates.
"""

from __future__ import annotations

import numpy as np

from .errors import ValidationError

_ACTIVE_TAPE: "Tape | None" = None


class Var:
    """A tensor tracked for differentiation."""

    __slots__ = ("data", "requires_grad")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data)
        self.requires_grad = requires_grad

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def detach(self) -> np.ndarray:
        return self.data

    def __repr__(self):
        flag = ", grad" if self.requires_grad else ""
        return f"Var(shape={self.data.shape}, dtype={self.data.dtype}{flag})"


class _Node:
    __slots__ = ("out", "inputs", "vjp")

    def __init__(self, out, inputs, vjp):
        self.out = out
        self.inputs = inputs
        self.vjp = vjp


class Tape:
    """Ordered record of forward operations for reverse-mode differentiation."""

    def __init__(self):
        self.nodes: list[_Node] = []

    def __enter__(self):
        global _ACTIVE_TAPE
        if _ACTIVE_TAPE is not None:
            raise ValidationError("a tape is already active")
        _ACTIVE_TAPE = self
        return self

    def __exit__(self, *exc):
        global _ACTIVE_TAPE
        _ACTIVE_TAPE = None
        return False

    def __len__(self):
        return len(self.nodes)

    def gradients(self, loss: Var, sources) -> list[np.ndarray]:
        """Gradients of a scalar real loss with respect to ``sources``.

        Returns arrays aligned with ``sources``; untouched sources get
        zero gradients.
        """
        if not isinstance(loss, Var):
            raise ValidationError("loss must be a Var")
        if loss.data.size != 1:
            raise ValidationError("loss must be a scalar")
        grads: dict[int, np.ndarray] = {
            id(loss): np.ones_like(loss.data, dtype=loss.data.dtype)
        }
        for node in reversed(self.nodes):
            g = grads.pop(id(node.out), None)
            if g is None:
                continue
            for v, gv in zip(node.inputs, node.vjp(g)):
                if v is None or gv is None or not v.requires_grad:
                    continue
                gv = _match(gv, v.data)
                acc = grads.get(id(v))
                grads[id(v)] = gv if acc is None else acc + gv
        out = []
        for s in sources:
            g = grads.get(id(s))
            out.append(np.zeros_like(s.data) if g is None else g)
        return out


def _match(g: np.ndarray, ref: np.ndarray) -> np.ndarray:
    """Cast a cotangent onto the dtype/shape of the tensor it belongs to."""
    if np.iscomplexobj(g) and not np.iscomplexobj(ref):
        g = g.real
    if g.dtype != ref.dtype:
        g = g.astype(ref.dtype)
    if g.shape != ref.shape:
        raise ValidationError(f"gradient shape {g.shape} != value shape {ref.shape}")
    return g


def val(x) -> np.ndarray:
    return x.data if isinstance(x, Var) else np.asarray(x)


def _record(out_data, inputs, vjp):
    """Wrap an op result; record on the active tape when gradients are needed."""
    tracked = [x if isinstance(x, Var) else None for x in inputs]
    if not any(v is not None and v.requires_grad for v in tracked):
        if any(v is not None for v in tracked):
            return Var(out_data, requires_grad=False)
        return out_data
    out = Var(out_data, requires_grad=True)
    if _ACTIVE_TAPE is not None:
        _ACTIVE_TAPE.nodes.append(_Node(out, tuple(tracked), vjp))
    return out


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, (gs, s) in enumerate(zip(g.shape, shape)) if s == 1 and gs != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


# ---------------------------------------------------------------------------
# arithmetic

def add(a, b):
    av, bv = val(a), val(b)
    return _record(av + bv, (a, b), lambda g: (_unbroadcast(g, av.shape),
                                               _unbroadcast(g, bv.shape)))


def sub(a, b):
    av, bv = val(a), val(b)
    return _record(av - bv, (a, b), lambda g: (_unbroadcast(g, av.shape),
                                               _unbroadcast(-g, bv.shape)))


def neg(a):
    return _record(-val(a), (a,), lambda g: (-g,))


def mul(a, b):
    av, bv = val(a), val(b)
    return _record(av * bv, (a, b),
                   lambda g: (_unbroadcast(g * np.conj(bv), av.shape),
                              _unbroadcast(g * np.conj(av), bv.shape)))


def div(a, b):
    av, bv = val(a), val(b)
    out = av / bv
    def vjp(g):
        ga = _unbroadcast(g / np.conj(bv), av.shape)
        gb = _unbroadcast(-g * np.conj(out / bv), bv.shape)
        return ga, gb
    return _record(out, (a, b), vjp)


def scale(a, s: float):
    return _record(val(a) * s, (a,), lambda g: (g * np.conj(s),))


def pow_const(a, p: float):
    av = val(a)
    out = av ** p
    return _record(out, (a,), lambda g: (g * p * av ** (p - 1.0),))


def exp(a):
    out = np.exp(val(a))
    return _record(out, (a,), lambda g: (g * out,))


def log(a):
    av = val(a)
    return _record(np.log(av), (a,), lambda g: (g / av,))


def relu(a):
    av = val(a)
    mask = av > 0
    return _record(av * mask, (a,), lambda g: (g * mask,))


# ---------------------------------------------------------------------------
# structure

def reshape(a, shape):
    av = val(a)
    return _record(av.reshape(shape), (a,), lambda g: (g.reshape(av.shape),))


def transpose(a, axes):
    axes = tuple(axes)
    inv = tuple(np.argsort(axes))
    return _record(val(a).transpose(axes), (a,), lambda g: (g.transpose(inv),))


def concat(parts, axis: int):
    datas = [val(p) for p in parts]
    sizes = [d.shape[axis] for d in datas]
    splits = np.cumsum(sizes)[:-1]
    out = np.concatenate(datas, axis=axis)
    return _record(out, tuple(parts), lambda g: tuple(np.split(g, splits, axis=axis)))


def flip(a, axes):
    axes = tuple(axes)
    return _record(np.flip(val(a), axes), (a,), lambda g: (np.flip(g, axes),))


def take(a, idx: np.ndarray, axis: int):
    """Gather along one axis with an integer index array (duplicates allowed)."""
    av = val(a)
    idx = np.asarray(idx)
    def vjp(g):
        buf = np.zeros(av.shape, dtype=g.dtype)
        np.add.at(np.moveaxis(buf, axis, 0), idx, np.moveaxis(g, axis, 0))
        return (buf,)
    return _record(np.take(av, idx, axis=axis), (a,), vjp)


def scatter(a, idx: np.ndarray, axis: int, size: int):
    """Place slices of ``a`` at positions ``idx`` (injective) of a zero tensor."""
    av = val(a)
    idx = np.asarray(idx)
    shape = list(av.shape)
    shape[axis] = size
    out = np.zeros(shape, dtype=av.dtype)
    np.moveaxis(out, axis, 0)[idx] = np.moveaxis(av, axis, 0)
    return _record(out, (a,), lambda g: (np.take(g, idx, axis=axis),))


def select_columns(a, idx: np.ndarray):
    """out[i] = a[i, idx[i]] for a 2-D tensor."""
    av = val(a)
    idx = np.asarray(idx)
    rows = np.arange(av.shape[0])
    def vjp(g):
        buf = np.zeros(av.shape, dtype=g.dtype)
        buf[rows, idx] = g
        return (buf,)
    return _record(av[rows, idx], (a,), vjp)


def sum_axes(a, axes, keepdims: bool = False):
    av = val(a)
    axes = tuple(axes) if not isinstance(axes, int) else (axes,)
    axes = tuple(ax % av.ndim for ax in axes)
    def vjp(g):
        if not keepdims:
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g, av.shape).copy(),)
    return _record(av.sum(axis=axes, keepdims=keepdims), (a,), vjp)


def mean_axes(a, axes, keepdims: bool = False):
    av = val(a)
    axes_t = tuple(axes) if not isinstance(axes, int) else (axes,)
    n = 1
    for ax in axes_t:
        n *= av.shape[ax]
    return scale(sum_axes(a, axes_t, keepdims), 1.0 / n)


# ---------------------------------------------------------------------------
# complex / spectral

def to_complex(a):
    av = val(a)
    cdtype = np.complex64 if av.dtype == np.float32 else np.complex128
    return _record(av.astype(cdtype), (a,), lambda g: (g.real,))


def real(a):
    return _record(val(a).real.copy(), (a,), lambda g: (g.astype(val(a).dtype),))


def conj(a):
    return _record(np.conj(val(a)), (a,), lambda g: (np.conj(g),))


def fftn(a, axes):
    axes = tuple(axes)
    av = val(a)
    n = 1
    for ax in axes:
        n *= av.shape[ax]
    return _record(np.fft.fftn(av, axes=axes), (a,),
                   lambda g: (np.fft.ifftn(g, axes=axes) * n,))


def ifftn(a, axes):
    axes = tuple(axes)
    av = val(a)
    n = 1
    for ax in axes:
        n *= av.shape[ax]
    return _record(np.fft.ifftn(av, axes=axes), (a,),
                   lambda g: (np.fft.fftn(g, axes=axes) / n,))


def einsum(spec: str, a, b):
    """Two-operand einsum.  Every index of each operand must appear in the
    output or in the other operand (plain tensor contraction)."""
    av, bv = val(a), val(b)
    lhs, out_spec = spec.split("->")
    a_spec, b_spec = lhs.split(",")
    out = np.einsum(spec, av, bv)
    def vjp(g):
        ga = gb = None
        if isinstance(a, Var) and a.requires_grad:
            ga = np.einsum(f"{out_spec},{b_spec}->{a_spec}", g, np.conj(bv))
        if isinstance(b, Var) and b.requires_grad:
            gb = np.einsum(f"{a_spec},{out_spec}->{b_spec}", np.conj(av), g)
        return ga, gb
    return _record(out, (a, b), vjp)


def extract_patches(a, kernel: int, stride: int, pad: int):
    """im2col for square kernels: (B, C, H, W) -> (B, C, Ho, Wo, k, k)."""
    av = val(a)
    bsz, c, h, w = av.shape
    hp, wp = h + 2 * pad, w + 2 * pad
    ho = (hp - kernel) // stride + 1
    wo = (wp - kernel) // stride + 1
    xp = np.zeros((bsz, c, hp, wp), dtype=av.dtype)
    xp[:, :, pad:pad + h, pad:pad + w] = av
    out = np.empty((bsz, c, ho, wo, kernel, kernel), dtype=av.dtype)
    for u in range(kernel):
        for v in range(kernel):
            out[..., u, v] = xp[:, :, u:u + stride * ho:stride, v:v + stride * wo:stride]
    def vjp(g):
        buf = np.zeros((bsz, c, hp, wp), dtype=g.dtype)
        for u in range(kernel):
            for v in range(kernel):
                buf[:, :, u:u + stride * ho:stride, v:v + stride * wo:stride] += g[..., u, v]
        return (buf[:, :, pad:pad + h, pad:pad + w],)
    return _record(out, (a,), vjp)


def log_softmax(a, axis: int = -1):
    """Numerically stable log-softmax (the max shift is treated as constant,
    which leaves both the value and the gradient exact)."""
    shift = val(a).max(axis=axis, keepdims=True)
    z = sub(a, shift)
    return sub(z, log(sum_axes(exp(z), axis, keepdims=True)))
