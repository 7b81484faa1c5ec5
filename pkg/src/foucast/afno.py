"""Block-diagonal complex MLP applied independently at every frequency bin.

Weights are shared across spatial bins; only channels mix.  The activation is
split ReLU (real and imaginary parts rectified independently).  The same
kernel serves both the spectral token-mixing blocks and the channel-alignment
step in front of the memory bank.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class AfnoError(ValueError):
    pass


@dataclass
class AfnoWeights:
    """Two block-diagonal complex layers with optional biases.

    ``w1``: (n_blocks, hidden_b, in_b), ``w2``: (n_blocks, out_b, hidden_b);
    per-block channel counts multiply with ``n_blocks`` to give the full
    widths.  Off-block entries are structurally absent.
    """

    w1: np.ndarray
    w2: np.ndarray
    b1: np.ndarray
    b2: np.ndarray

    def __post_init__(self):
        if self.w1.ndim != 3 or self.w2.ndim != 3 or self.w1.shape[0] != self.w2.shape[0]:
            raise AfnoError("w1/w2 must be (n_blocks, out, in) stacks with equal n_blocks")
        if self.w2.shape[2] != self.w1.shape[1]:
            raise AfnoError("w2 input width must match w1 output width")
        if self.b1.shape != self.w1.shape[:2] or self.b2.shape != self.w2.shape[:2]:
            raise AfnoError("bias shapes must be (n_blocks, width)")

    @property
    def n_blocks(self) -> int:
        return self.w1.shape[0]

    @property
    def c_in(self) -> int:
        return self.w1.shape[0] * self.w1.shape[2]

    @property
    def c_out(self) -> int:
        return self.w2.shape[0] * self.w2.shape[1]


def init_weights(
    c_in: int,
    c_out: int,
    n_blocks: int,
    rng: np.random.Generator,
    c_hidden: int | None = None,
) -> AfnoWeights:
    """Variance-preserving complex init, zero biases."""
    c_hidden = c_in if c_hidden is None else c_hidden
    for name, c in (("c_in", c_in), ("c_hidden", c_hidden), ("c_out", c_out)):
        if c % n_blocks:
            raise AfnoError(f"{name}={c} not divisible by n_blocks={n_blocks}")
    ib, hb, ob = c_in // n_blocks, c_hidden // n_blocks, c_out // n_blocks

    def draw(shape, fan_in):
        scale = 1.0 / np.sqrt(2.0 * fan_in)
        return scale * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))

    return AfnoWeights(
        w1=draw((n_blocks, hb, ib), ib),
        w2=draw((n_blocks, ob, hb), hb),
        b1=np.zeros((n_blocks, hb), dtype=np.complex128),
        b2=np.zeros((n_blocks, ob), dtype=np.complex128),
    )


def identity_weights(c: int, n_blocks: int) -> AfnoWeights:
    """Identity blocks with zero biases (exact pass-through of nonnegatives)."""
    if c % n_blocks:
        raise AfnoError(f"c={c} not divisible by n_blocks={n_blocks}")
    eye = np.broadcast_to(np.eye(c // n_blocks, dtype=np.complex128), (n_blocks, c // n_blocks, c // n_blocks)).copy()
    zeros = np.zeros((n_blocks, c // n_blocks), dtype=np.complex128)
    return AfnoWeights(w1=eye.copy(), w2=eye.copy(), b1=zeros.copy(), b2=zeros.copy())


def _split_relu(z: np.ndarray) -> np.ndarray:
    return np.maximum(z.real, 0.0) + 1j * np.maximum(z.imag, 0.0)


def afno_apply(z: np.ndarray, w: AfnoWeights) -> np.ndarray:
    """Per-bin channel mixing: W2 * relu(W1 * z + b1) + b2.

    ``z`` is (H, W, C_in) complex; returns (H, W, C_out).
    """
    z = np.asarray(z, dtype=np.complex128)
    if z.ndim != 3 or z.shape[2] != w.c_in:
        raise AfnoError(f"input has {z.shape} but weights expect C_in={w.c_in}")
    nb = w.n_blocks
    zb = z.reshape(z.shape[0], z.shape[1], nb, -1)
    h = np.einsum("ned,hwnd->hwne", w.w1, zb) + w.b1
    h = _split_relu(h)
    out = np.einsum("noe,hwne->hwno", w.w2, h) + w.b2
    return out.reshape(z.shape[0], z.shape[1], w.c_out)


def channel_align(f_in: np.ndarray, w: AfnoWeights) -> np.ndarray:
    """Map a spectrum's channel dimension onto the memory slot width."""
    return afno_apply(f_in, w)
