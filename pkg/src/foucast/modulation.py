"""Covariate-guided frequency modulation.

Hidden-feature amplitudes are reweighted by channelwise attention over
phase-alignment scores against the covariate spectrum, then phases are fused
by interpolating unit phasors with a learnable mixing factor.  Fusion never
changes magnitudes: the output modulus is exactly the reweighted amplitude.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .spectral import unit_normalize

PER_BIN = "per_bin"
PER_CHANNEL = "per_channel"


class ModulationError(ValueError):
    pass


@dataclass
class ModulationParams:
    """Phase-mixing factor, kept in (0, 1) through a logistic."""

    beta_logit: float = 0.0

    @property
    def beta(self) -> float:
        return float(1.0 / (1.0 + np.exp(-self.beta_logit)))


def _check_pair(a: np.ndarray, b: np.ndarray) -> None:
    if a.shape != b.shape:
        raise ModulationError(f"shape mismatch: {a.shape} vs {b.shape}")


def _softmax(x: np.ndarray, axis: int) -> np.ndarray:
    e = np.exp(x - np.max(x, axis=axis, keepdims=True))
    return e / np.sum(e, axis=axis, keepdims=True)


def alignment_scores(
    f_hid: np.ndarray, f_met: np.ndarray, eps: float = 1e-8, mode: str = PER_BIN
) -> np.ndarray:
    """Cosine-like phase-alignment score per channel, in [-1, 1].

    ``per_bin`` scores each (h, w, c) entry from the normalized product of the
    two coefficients; ``per_channel`` reduces the inner product over bins
    first and broadcasts one score per channel.
    """
    f_hid = np.asarray(f_hid, dtype=np.complex128)
    f_met = np.asarray(f_met, dtype=np.complex128)
    _check_pair(f_hid, f_met)
    if eps <= 0:
        raise ModulationError("eps must be positive")
    if mode == PER_BIN:
        num = (f_hid * np.conj(f_met)).real
        den = np.abs(f_hid) * np.abs(f_met) + eps
        return num / den
    if mode == PER_CHANNEL:
        num = np.sum(f_hid * np.conj(f_met), axis=(0, 1)).real
        den = np.linalg.norm(f_hid, axis=(0, 1)) * np.linalg.norm(f_met, axis=(0, 1)) + eps
        return np.broadcast_to(num / den, f_hid.shape).copy()
    raise ModulationError(f"unknown alignment mode {mode!r}")


def alignment_weights(
    f_hid: np.ndarray, f_met: np.ndarray, eps: float = 1e-8, mode: str = PER_BIN
) -> np.ndarray:
    """Softmax of alignment scores across channels, per spatial-frequency bin."""
    return _softmax(alignment_scores(f_hid, f_met, eps, mode), axis=-1)


def amplitude_reweight(a_hid: np.ndarray, weights: np.ndarray) -> np.ndarray:
    a_hid = np.asarray(a_hid, dtype=np.float64)
    weights = np.asarray(weights, dtype=np.float64)
    _check_pair(a_hid, weights)
    if np.any(a_hid < 0) or np.any(weights < 0):
        raise ModulationError("amplitudes and weights must be nonnegative")
    return a_hid * weights


def phasor_fuse(
    phi_hid: np.ndarray, phi_met: np.ndarray, beta: float, eps: float = 1e-6
) -> np.ndarray:
    """Unit phasor interpolated between two phase fields.

    ``beta`` weighs the hidden phase.  Near-antipodal phases at beta ~ 0.5 can
    cancel; entries with |interpolation| < eps fall back to the hidden phasor.
    """
    phi_hid = np.asarray(phi_hid, dtype=np.float64)
    phi_met = np.asarray(phi_met, dtype=np.float64)
    _check_pair(phi_hid, phi_met)
    if not 0.0 < beta < 1.0:
        raise ModulationError(f"beta must lie in (0, 1), got {beta}")
    p_hid = np.exp(1j * phi_hid)
    z = beta * p_hid + (1.0 - beta) * np.exp(1j * phi_met)
    mag = np.abs(z)
    degenerate = mag < eps
    fused = np.divide(z, np.where(degenerate, 1.0, mag))
    return np.where(degenerate, p_hid, fused)


def modulate(
    f_hid: np.ndarray,
    f_met: np.ndarray,
    params: ModulationParams,
    eps_align: float = 1e-8,
    eps_fuse: float = 1e-6,
    mode: str = PER_BIN,
) -> np.ndarray:
    """Full modulation: attention-reweighted amplitude, fused phase."""
    f_hid = np.asarray(f_hid, dtype=np.complex128)
    f_met = np.asarray(f_met, dtype=np.complex128)
    _check_pair(f_hid, f_met)
    w = alignment_weights(f_hid, f_met, eps_align, mode)
    amp = amplitude_reweight(np.abs(f_hid), w)
    beta = params.beta
    p_hid = unit_normalize(f_hid)
    p_met = unit_normalize(f_met)
    z = beta * p_hid + (1.0 - beta) * p_met
    mag = np.abs(z)
    degenerate = mag < eps_fuse
    fused = np.where(degenerate, p_hid, np.divide(z, np.where(degenerate, 1.0, mag)))
    return amp * fused


__all__ = [
    "ModulationError",
    "ModulationParams",
    "PER_BIN",
    "PER_CHANNEL",
    "alignment_scores",
    "alignment_weights",
    "amplitude_reweight",
    "phasor_fuse",
    "modulate",
]
