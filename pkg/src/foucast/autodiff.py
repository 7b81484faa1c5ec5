"""Reverse-mode differentiation over numpy arrays, real or complex.

Complex values are differentiated by treating their real and imaginary parts
as independent real coordinates.  The cotangent stored for a complex node is
itself complex, with ``Re(grad) = dL/dRe(value)`` and ``Im(grad) =
dL/dIm(value)``; under this convention the reverse rule of a complex product
``u*v`` is ``g*conj(v)``, and a complex128 gradient viewed as float64 pairs
lines up with the flat real parameter view used by the optimizer and the
finite-difference checker.

The graph built by the ops below is the tape: nodes are created in execution
order and replayed strictly in reverse, so gradients are deterministic for a
fixed forward pass.
"""

from __future__ import annotations

import contextlib
import contextvars
import itertools
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .params import ParamSet

_GRAD_ENABLED: contextvars.ContextVar[bool] = contextvars.ContextVar(
    "foucast_grad_enabled", default=True
)
_NODE_COUNTER = itertools.count()


class AutodiffError(RuntimeError):
    pass


@contextlib.contextmanager
def no_grad():
    """Disable graph recording; ops compute values only."""
    token = _GRAD_ENABLED.set(False)
    try:
        yield
    finally:
        _GRAD_ENABLED.reset(token)


class Var:
    """One node of the tape: a value, its parents, and the reverse rule."""

    __slots__ = ("value", "grad", "op", "_parents", "_vjp", "_id")

    def __init__(self, value, parents=(), vjp=None, op="leaf"):
        v = np.asarray(value)
        if np.iscomplexobj(v):
            v = v.astype(np.complex128, copy=False)
        else:
            v = v.astype(np.float64, copy=False)
        self.value = v
        self.grad = None
        self.op = op
        if _GRAD_ENABLED.get():
            self._parents = tuple(parents)
            self._vjp = vjp
        else:
            self._parents = ()
            self._vjp = None
        self._id = next(_NODE_COUNTER)

    @property
    def shape(self):
        return self.value.shape

    def __repr__(self):
        return f"Var(op={self.op}, shape={self.value.shape})"

    # convenience arithmetic; constants are wrapped on the fly
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __neg__(self):
        return mul(self, -1.0)

    def __truediv__(self, other):
        return div(self, other)


def as_var(x) -> Var:
    return x if isinstance(x, Var) else Var(x)


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum a gradient down to the shape it was broadcast from."""
    g = np.asarray(g)
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g.reshape(shape)


def _accumulate(node: Var, contrib: np.ndarray, op: str) -> None:
    c = np.asarray(contrib)
    if not np.all(np.isfinite(c)):
        raise AutodiffError(f"non-finite gradient produced by op {op!r}")
    if np.iscomplexobj(node.value):
        c = c.astype(np.complex128, copy=False)
    else:
        if np.iscomplexobj(c):
            c = c.real
        c = c.astype(np.float64, copy=False)
    if c.shape != node.value.shape:
        raise AutodiffError(
            f"op {op!r} produced gradient {c.shape} for parent {node.value.shape}"
        )
    if node.grad is None:
        node.grad = c.copy()
    else:
        node.grad += c


def backward(loss: Var) -> None:
    """Reverse sweep from a scalar real loss; fills ``grad`` on reachable Vars."""
    if loss.value.size != 1:
        raise AutodiffError(f"loss must be scalar, got shape {loss.value.shape}")
    if np.iscomplexobj(loss.value):
        raise AutodiffError("loss must be real")

    # Reachable subgraph; creation ids increase parent -> child, so sorting
    # by id descending is a topological order of the reverse sweep.
    seen = {loss._id: loss}
    stack = [loss]
    while stack:
        node = stack.pop()
        for p in node._parents:
            if p._id not in seen:
                seen[p._id] = p
                stack.append(p)
    order = sorted(seen.values(), key=lambda v: v._id, reverse=True)

    for v in order:
        v.grad = None
    loss.grad = np.ones_like(loss.value)

    for v in order:
        if v._vjp is None or v.grad is None:
            continue
        contribs = v._vjp(v.grad)
        for parent, contrib in zip(v._parents, contribs):
            if contrib is None:
                continue
            _accumulate(parent, contrib, v.op)


# ---------------------------------------------------------------------------
# elementwise arithmetic


def add(a, b) -> Var:
    a, b = as_var(a), as_var(b)
    out = a.value + b.value

    def vjp(g):
        return _unbroadcast(g, a.value.shape), _unbroadcast(g, b.value.shape)

    return Var(out, (a, b), vjp, op="add")


def sub(a, b) -> Var:
    a, b = as_var(a), as_var(b)
    out = a.value - b.value

    def vjp(g):
        return _unbroadcast(g, a.value.shape), _unbroadcast(-g, b.value.shape)

    return Var(out, (a, b), vjp, op="sub")


def mul(a, b) -> Var:
    a, b = as_var(a), as_var(b)
    out = a.value * b.value

    def vjp(g):
        ga = _unbroadcast(g * np.conj(b.value), a.value.shape)
        gb = _unbroadcast(g * np.conj(a.value), b.value.shape)
        return ga, gb

    return Var(out, (a, b), vjp, op="mul")


def div(a, b) -> Var:
    """Elementwise division by a real denominator."""
    a, b = as_var(a), as_var(b)
    if np.iscomplexobj(b.value):
        raise AutodiffError("div expects a real denominator")
    out = a.value / b.value

    def vjp(g):
        ga = _unbroadcast(g / b.value, a.value.shape)
        gb = _unbroadcast(-g * np.conj(a.value) / (b.value * b.value), b.value.shape)
        return ga, gb

    return Var(out, (a, b), vjp, op="div")


def relu(x) -> Var:
    """ReLU; acts independently on real and imaginary parts of complex input."""
    x = as_var(x)
    if np.iscomplexobj(x.value):
        out = np.maximum(x.value.real, 0.0) + 1j * np.maximum(x.value.imag, 0.0)

        def vjp(g):
            return (g.real * (x.value.real > 0) + 1j * (g.imag * (x.value.imag > 0)),)

    else:
        out = np.maximum(x.value, 0.0)

        def vjp(g):
            return (g * (x.value > 0),)

    return Var(out, (x,), vjp, op="relu")


def exp(x) -> Var:
    x = as_var(x)
    out = np.exp(x.value)

    def vjp(g):
        return (g * np.conj(out) if np.iscomplexobj(out) else g * out,)

    return Var(out, (x,), vjp, op="exp")


def log(x) -> Var:
    x = as_var(x)
    out = np.log(x.value)

    def vjp(g):
        return (g / x.value,)

    return Var(out, (x,), vjp, op="log")


def sqrt(x) -> Var:
    x = as_var(x)
    out = np.sqrt(x.value)

    def vjp(g):
        return (g / (2.0 * out),)

    return Var(out, (x,), vjp, op="sqrt")


def sin(x) -> Var:
    x = as_var(x)

    def vjp(g):
        return (g * np.cos(x.value),)

    return Var(np.sin(x.value), (x,), vjp, op="sin")


def cos(x) -> Var:
    x = as_var(x)

    def vjp(g):
        return (-g * np.sin(x.value),)

    return Var(np.cos(x.value), (x,), vjp, op="cos")


def sigmoid(x) -> Var:
    x = as_var(x)
    v = x.value
    out = np.where(v >= 0, 1.0 / (1.0 + np.exp(-np.abs(v))), np.exp(-np.abs(v)) / (1.0 + np.exp(-np.abs(v))))

    def vjp(g):
        return (g * out * (1.0 - out),)

    return Var(out, (x,), vjp, op="sigmoid")


def softmax(x, axis: int = -1) -> Var:
    x = as_var(x)
    shifted = x.value - np.max(x.value, axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = e / np.sum(e, axis=axis, keepdims=True)

    def vjp(g):
        dot = np.sum(g * out, axis=axis, keepdims=True)
        return (out * (g - dot),)

    return Var(out, (x,), vjp, op="softmax")


# ---------------------------------------------------------------------------
# reductions and shape ops


def sum_(x, axis=None, keepdims: bool = False) -> Var:
    x = as_var(x)
    out = np.sum(x.value, axis=axis, keepdims=keepdims)

    def vjp(g):
        g = np.asarray(g)
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, x.value.shape).copy(),)

    return Var(out, (x,), vjp, op="sum")


def mean(x, axis=None, keepdims: bool = False) -> Var:
    x = as_var(x)
    out = np.mean(x.value, axis=axis, keepdims=keepdims)
    n = x.value.size / max(out.size, 1)

    def vjp(g):
        g = np.asarray(g) / n
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, x.value.shape).copy(),)

    return Var(out, (x,), vjp, op="mean")


def reshape(x, shape) -> Var:
    x = as_var(x)

    def vjp(g):
        return (np.reshape(g, x.value.shape),)

    return Var(np.reshape(x.value, shape), (x,), vjp, op="reshape")


def transpose(x, axes) -> Var:
    x = as_var(x)
    inv = np.argsort(axes)

    def vjp(g):
        return (np.transpose(g, inv),)

    return Var(np.transpose(x.value, axes), (x,), vjp, op="transpose")


def where(mask: np.ndarray, a, b) -> Var:
    """Select by a boolean mask fixed at record time (not differentiated)."""
    a, b = as_var(a), as_var(b)
    mask = np.asarray(mask, dtype=bool)
    out = np.where(mask, a.value, b.value)

    def vjp(g):
        ga = _unbroadcast(np.where(mask, g, 0.0), a.value.shape)
        gb = _unbroadcast(np.where(mask, 0.0, g), b.value.shape)
        return ga, gb

    return Var(out, (a, b), vjp, op="where")


def matmul(a, b) -> Var:
    """Matrix product with numpy broadcasting over leading dimensions."""
    a, b = as_var(a), as_var(b)
    out = a.value @ b.value

    def vjp(g):
        ga = _unbroadcast(g @ np.conj(b.value).swapaxes(-1, -2), a.value.shape)
        gb = _unbroadcast(np.conj(a.value).swapaxes(-1, -2) @ g, b.value.shape)
        return ga, gb

    return Var(out, (a, b), vjp, op="matmul")


# ---------------------------------------------------------------------------
# complex structure ops

_GUARD = 1e-12  # adjoints of |z|, arg(z), z/|z| vanish below this magnitude


def make_complex(re, im) -> Var:
    re, im = as_var(re), as_var(im)
    out = re.value + 1j * im.value

    def vjp(g):
        return _unbroadcast(g.real, re.value.shape), _unbroadcast(g.imag, im.value.shape)

    return Var(out, (re, im), vjp, op="make_complex")


def creal(z) -> Var:
    z = as_var(z)

    def vjp(g):
        return (g.astype(np.complex128),)

    return Var(z.value.real, (z,), vjp, op="creal")


def cimag(z) -> Var:
    z = as_var(z)

    def vjp(g):
        return (1j * g,)

    return Var(z.value.imag, (z,), vjp, op="cimag")


def conj(z) -> Var:
    z = as_var(z)

    def vjp(g):
        return (np.conj(g),)

    return Var(np.conj(z.value), (z,), vjp, op="conj")


def cabs(z) -> Var:
    """Complex magnitude; zero gradient within the branch-point guard."""
    z = as_var(z)
    r = np.abs(z.value)

    def vjp(g):
        safe = np.where(r < _GUARD, 1.0, r)
        return (np.where(r < _GUARD, 0.0, g * z.value / safe),)

    return Var(r, (z,), vjp, op="cabs")


def carg(z) -> Var:
    """Complex argument in (-pi, pi]; zero gradient within the guard."""
    z = as_var(z)
    r2 = z.value.real**2 + z.value.imag**2

    def vjp(g):
        safe = np.where(r2 < _GUARD**2, 1.0, r2)
        return (np.where(r2 < _GUARD**2, 0.0, g * (1j * z.value) / safe),)

    return Var(np.angle(z.value), (z,), vjp, op="carg")


def cunit(z, eps: float = 1e-12) -> Var:
    """z/|z| with entries of magnitude < eps mapped to 1+0j (zero gradient)."""
    z = as_var(z)
    r = np.abs(z.value)
    small = r < eps
    out = np.divide(z.value, np.where(small, 1.0, r))
    out = np.where(small, 1.0 + 0.0j, out)

    def vjp(g):
        r3 = np.where(small, 1.0, r**3)
        coeff = (np.conj(g) * z.value).imag / r3
        return (np.where(small, 0.0 + 0.0j, coeff * (-1j * z.value)),)

    return Var(out, (z,), vjp, op="cunit")


# ---------------------------------------------------------------------------
# Fourier transforms (axes (0, 1); unnormalized forward, 1/(H*W) inverse)


def rfft2(x) -> Var:
    """Forward DFT of a real array over axes (0, 1), Hermitian half layout."""
    x = as_var(x)
    if np.iscomplexobj(x.value):
        raise AutodiffError("rfft2 expects a real input")
    h, w = x.value.shape[0], x.value.shape[1]
    out = np.fft.rfft2(x.value, axes=(0, 1))

    def vjp(g):
        full = np.zeros((h, w) + x.value.shape[2:], dtype=np.complex128)
        full[:, : g.shape[1]] = g
        return (np.fft.ifft2(full, axes=(0, 1)).real * (h * w),)

    return Var(out, (x,), vjp, op="rfft2")


def fft2(x) -> Var:
    """Full-spectrum forward DFT of a real array over axes (0, 1)."""
    x = as_var(x)
    if np.iscomplexobj(x.value):
        raise AutodiffError("fft2 expects a real input")
    h, w = x.value.shape[0], x.value.shape[1]

    def vjp(g):
        return (np.fft.ifft2(g, axes=(0, 1)).real * (h * w),)

    return Var(np.fft.fft2(x.value, axes=(0, 1)), (x,), vjp, op="fft2")


def ifft2(z) -> Var:
    """Full-spectrum inverse DFT (complex to complex), scaled by 1/(H*W)."""
    z = as_var(z)
    h, w = z.value.shape[0], z.value.shape[1]

    def vjp(g):
        return (np.fft.fft2(g, axes=(0, 1)) / (h * w),)

    return Var(np.fft.ifft2(z.value, axes=(0, 1)), (z,), vjp, op="ifft2")


def hermitian_expand(z, width: int) -> Var:
    """Expand a half-spectrum to full width by conjugate mirroring."""
    from . import spectral

    z = as_var(z)
    h = z.value.shape[0]
    hf = z.value.shape[1]
    if spectral.half_width(width) != hf:
        raise AutodiffError(f"half-spectrum width {hf} does not match width {width}")
    out = spectral.hermitian_expand(z.value, width)
    rows = (-np.arange(h)) % h

    def vjp(g):
        gz = g[:, :hf].copy()
        for w in range(hf, width):
            gz[rows, width - w] += np.conj(g[:, w])
        return (gz,)

    return Var(out, (z,), vjp, op="hermitian_expand")


def irfft2_real(z, width: int) -> Var:
    """Real field from a half-spectrum: Re(ifft2(hermitian_expand(z)))."""
    return creal(ifft2(hermitian_expand(z, width)))


# ---------------------------------------------------------------------------
# convolution (channel-first single-sample layout)


def _im2col(x: np.ndarray, k: int, stride: int, pad: int) -> tuple[np.ndarray, int, int]:
    c = x.shape[0]
    if pad:
        x = np.pad(x, ((0, 0), (pad, pad), (pad, pad)))
    win = np.lib.stride_tricks.sliding_window_view(x, (k, k), axis=(1, 2))
    win = win[:, ::stride, ::stride]
    n_h, n_w = win.shape[1], win.shape[2]
    cols = win.transpose(0, 3, 4, 1, 2).reshape(c * k * k, n_h * n_w)
    return np.ascontiguousarray(cols), n_h, n_w


def _col2im(cols: np.ndarray, c: int, k: int, stride: int, padded_hw: tuple[int, int],
            n_h: int, n_w: int) -> np.ndarray:
    buf = np.zeros((c,) + padded_hw)
    cols = cols.reshape(c, k, k, n_h, n_w)
    for i in range(k):
        for j in range(k):
            buf[:, i : i + stride * (n_h - 1) + 1 : stride,
                j : j + stride * (n_w - 1) + 1 : stride] += cols[:, i, j]
    return buf


def conv2d(x, w, b=None, stride: int = 1, pad: int = 0) -> Var:
    """2D convolution: x (Cin, H, W), w (Cout, Cin, k, k), b (Cout,)."""
    x, w = as_var(x), as_var(w)
    cin, h, ww = x.value.shape
    cout, cin_w, k, _ = w.value.shape
    if cin != cin_w:
        raise AutodiffError(f"conv2d channel mismatch: input {cin}, weight {cin_w}")
    cols, n_h, n_w = _im2col(x.value, k, stride, pad)
    w2 = w.value.reshape(cout, cin * k * k)
    out = (w2 @ cols).reshape(cout, n_h, n_w)
    parents = [x, w]
    if b is not None:
        b = as_var(b)
        out = out + b.value[:, None, None]
        parents.append(b)

    def vjp(g):
        g2 = g.reshape(cout, n_h * n_w)
        gw = (g2 @ cols.T).reshape(w.value.shape)
        gcols = w2.T @ g2
        gx = _col2im(gcols, cin, k, stride, (h + 2 * pad, ww + 2 * pad), n_h, n_w)
        if pad:
            gx = gx[:, pad:-pad, pad:-pad]
        grads = [gx, gw]
        if b is not None:
            grads.append(g.sum(axis=(1, 2)))
        return tuple(grads)

    return Var(out, tuple(parents), vjp, op="conv2d")


def conv2d_transpose(x, w, b=None, stride: int = 1, pad: int = 0) -> Var:
    """Transposed 2D convolution: x (Cin, H, W), w (Cin, Cout, k, k).

    Output spatial size is ``stride*(H-1) + k - 2*pad``.
    """
    x, w = as_var(x), as_var(w)
    cin, h, ww = x.value.shape
    cin_w, cout, k, _ = w.value.shape
    if cin != cin_w:
        raise AutodiffError(f"conv2d_transpose channel mismatch: input {cin}, weight {cin_w}")
    hp = stride * (h - 1) + k
    wp = stride * (ww - 1) + k
    w2 = w.value.reshape(cin, cout * k * k)
    x2 = x.value.reshape(cin, h * ww)
    cols = w2.T @ x2
    full = _col2im(cols, cout, k, stride, (hp, wp), h, ww)
    out = full[:, pad : hp - pad, pad : wp - pad]
    parents = [x, w]
    if b is not None:
        b = as_var(b)
        out = out + b.value[:, None, None]
        parents.append(b)

    def vjp(g):
        gp = np.pad(g, ((0, 0), (pad, pad), (pad, pad))) if pad else g
        gcols, gn_h, gn_w = _im2col(gp, k, stride, 0)
        assert (gn_h, gn_w) == (h, ww)
        gx = (w2 @ gcols).reshape(x.value.shape)
        gw = (x2 @ gcols.T).reshape(w.value.shape)
        grads = [gx, gw]
        if b is not None:
            grads.append(g.sum(axis=(1, 2)))
        return tuple(grads)

    return Var(out, tuple(parents), vjp, op="conv2d_transpose")


# ---------------------------------------------------------------------------
# gradient checking


@dataclass
class GradCheckReport:
    """Per-coordinate comparison of reverse-mode and central differences."""

    max_rel_err: float
    worst: str
    passed: bool
    tol: float
    n_coords: int
    rel_errs: np.ndarray = field(repr=False)

    def __str__(self):
        verdict = "PASS" if self.passed else "FAIL"
        return (
            f"grad_check {verdict}: max rel err {self.max_rel_err:.3e} "
            f"at {self.worst} over {self.n_coords} coordinates (tol {self.tol:g})"
        )


def _rel_err(a: float, b: float) -> float:
    denom = max(abs(a), abs(b), 1e-6)
    return abs(a - b) / denom


def grad_check(
    f: Callable[[dict[str, Var]], Var],
    theta: ParamSet,
    h: float = 1e-5,
    tol: float = 1e-4,
    coords: Sequence[int] | None = None,
) -> GradCheckReport:
    """Compare reverse-mode gradients of ``f`` against central differences.

    ``f`` receives leaf Vars keyed by parameter name and returns a scalar
    loss Var.  Steps are scaled per coordinate: ``h * max(1, |theta_i|)``.
    ``coords`` optionally restricts the check to a subset of flat indices.
    """
    if h <= 0:
        raise ValueError("h must be positive")

    leaves = {name: Var(a.copy(), op=f"param:{name}") for name, a in theta}
    loss = f(leaves)
    backward(loss)
    grads = ParamSet()
    for name, a in theta:
        g = leaves[name].grad
        grads.add(name, np.zeros_like(a) if g is None else g)
    analytic = grads.to_flat()

    flat = theta.to_flat()
    idx = np.arange(flat.size) if coords is None else np.asarray(coords, dtype=int)

    def eval_at(vec: np.ndarray) -> float:
        ps = theta.from_flat(vec)
        with no_grad():
            out = f({name: Var(a) for name, a in ps})
        return float(out.value)

    rel_errs = np.zeros(len(idx))
    for j, i in enumerate(idx):
        step = h * max(1.0, abs(flat[i]))
        up = flat.copy()
        up[i] += step
        down = flat.copy()
        down[i] -= step
        fd = (eval_at(up) - eval_at(down)) / (2.0 * step)
        if abs(fd - analytic[i]) < 1e-9:
            continue
        rel_errs[j] = _rel_err(analytic[i], fd)

    worst_j = int(np.argmax(rel_errs)) if len(idx) else 0
    max_err = float(rel_errs[worst_j]) if len(idx) else 0.0
    worst = theta.label(int(idx[worst_j])) if len(idx) else "<empty>"
    return GradCheckReport(
        max_rel_err=max_err,
        worst=worst,
        passed=max_err < tol,
        tol=tol,
        n_coords=len(idx),
        rel_errs=rel_errs,
    )
