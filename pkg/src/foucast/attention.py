"""Learned per-frequency attention with gated reinjection of the residual.

The elementwise attention tends to act as a low-pass filter; whatever it
discards is recovered through a per-channel gate applied to the difference
between input and attended output.  At gate 1 the operation is the identity,
at gate 0 it reduces to the bare attention.
"""

from __future__ import annotations

import numpy as np


class AttentionError(ValueError):
    pass


def init_attention(h: int, w: int, c: int, rng: np.random.Generator, noise: float = 0.02) -> np.ndarray:
    """Near-identity complex attention weights: ones plus small noise."""
    return (
        np.ones((h, w, c), dtype=np.complex128)
        + noise * (rng.standard_normal((h, w, c)) + 1j * rng.standard_normal((h, w, c)))
    )


def init_gate(c: int, value: float = 0.1) -> np.ndarray:
    return np.full(c, value)


def freq_attention(f_in: np.ndarray, w_learned: np.ndarray) -> np.ndarray:
    """Elementwise complex product with the learned per-frequency operator."""
    f_in = np.asarray(f_in, dtype=np.complex128)
    w_learned = np.asarray(w_learned, dtype=np.complex128)
    if f_in.shape != w_learned.shape:
        raise AttentionError(f"shape mismatch: {f_in.shape} vs {w_learned.shape}")
    return w_learned * f_in


def reinject_highfreq(f_in: np.ndarray, w_learned: np.ndarray, gate: np.ndarray) -> np.ndarray:
    """Attended output plus the gated discarded residual.

    ``gate`` is real of length C, broadcast over the spatial bins.
    """
    f_in = np.asarray(f_in, dtype=np.complex128)
    gate = np.asarray(gate, dtype=np.float64)
    if gate.shape != (f_in.shape[-1],):
        raise AttentionError(f"gate has shape {gate.shape}, expected ({f_in.shape[-1]},)")
    f_out = freq_attention(f_in, w_learned)
    return f_out + gate * (f_in - f_out)
