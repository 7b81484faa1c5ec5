"""Frequency memory: a bank of unit-magnitude complex slots, per-bin
attention matching against a spectral query, and phase alignment of hidden
features toward the matched pattern.

Slots are kept at unit magnitude per complex entry; the matched feature is a
convex combination of unit-modulus values, so its amplitude is bounded by 1
and doubles as a confidence signal for the phase rotation.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .spectral import unit_normalize

STORING_PHASE = 1   # bank trainable, queries from ground-truth sequences
MATCHING_PHASE = 2  # bank frozen, queries from the input sequence


class MemoryError_(ValueError):
    pass


@dataclass
class MemoryBank:
    slots: np.ndarray  # (S, C_emb) complex128
    frozen: bool = False

    def __post_init__(self):
        self.slots = np.asarray(self.slots, dtype=np.complex128)
        if self.slots.ndim != 2 or self.slots.shape[0] < 1:
            raise MemoryError_(f"slots must be (S>=1, C), got {self.slots.shape}")

    @property
    def n_slots(self) -> int:
        return self.slots.shape[0]

    @property
    def width(self) -> int:
        return self.slots.shape[1]

    def renormalized(self) -> "MemoryBank":
        """Copy with every slot entry forced back to unit magnitude."""
        return MemoryBank(slots=unit_normalize(self.slots), frozen=self.frozen)

    def magnitude_drift(self) -> float:
        return float(np.max(np.abs(np.abs(self.slots) - 1.0)))


def init_bank(n_slots: int, width: int, rng: np.random.Generator) -> MemoryBank:
    """Unit phasors with independent uniformly random phases."""
    phases = rng.uniform(-np.pi, np.pi, size=(n_slots, width))
    return MemoryBank(slots=np.exp(1j * phases), frozen=False)


def set_training_phase(bank: MemoryBank, phase: int) -> MemoryBank:
    """Phase 1 leaves the bank trainable; phase 2 freezes it bit-exactly."""
    if phase not in (STORING_PHASE, MATCHING_PHASE):
        raise MemoryError_(f"invalid training phase {phase!r}")
    return MemoryBank(slots=bank.slots, frozen=(phase == MATCHING_PHASE))


class MatchResult(NamedTuple):
    alpha: np.ndarray    # (H, W, S) attention over slots, sums to 1 per bin
    f_match: np.ndarray  # (H, W, C) convex combination of normalized slots


def memory_match(query: np.ndarray, bank: MemoryBank) -> MatchResult:
    """Per-bin softmax attention of a normalized query over the slot bank."""
    query = np.asarray(query, dtype=np.complex128)
    if query.ndim != 3 or query.shape[2] != bank.width:
        raise MemoryError_(
            f"query shape {query.shape} incompatible with bank width {bank.width}"
        )
    q = unit_normalize(query)
    slots = unit_normalize(bank.slots)
    # real part of the complex inner product over channels
    scores = np.einsum("hwc,sc->hws", q, np.conj(slots)).real
    shifted = scores - scores.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    alpha = e / e.sum(axis=-1, keepdims=True)
    f_match = np.einsum("hws,sc->hwc", alpha, slots)
    return MatchResult(alpha=alpha, f_match=f_match)


def phase_align(f_hid: np.ndarray, f_match: np.ndarray, eps: float = 1e-6) -> np.ndarray:
    """Rotate hidden phases toward the matched phases.

    The rotation fraction is (1 - sim)/2 where sim = |f_match| * cos(dPhi);
    the matched amplitude is deliberately left unnormalized so low-confidence
    matches rotate less.  Entries with |f_match| < eps pass through.
    Magnitudes are preserved exactly.
    """
    f_hid = np.asarray(f_hid, dtype=np.complex128)
    f_match = np.asarray(f_match, dtype=np.complex128)
    if f_hid.shape != f_match.shape:
        raise MemoryError_(f"shape mismatch: {f_hid.shape} vs {f_match.shape}")
    match_mag = np.abs(f_match)
    if np.max(match_mag, initial=0.0) > 1.0 + 1e-6:
        raise MemoryError_(
            f"matched feature magnitude {np.max(match_mag):.6f} exceeds 1; "
            "bank slots are not unit-normalized"
        )
    unit_hid = unit_normalize(f_hid)
    sim = (unit_hid * np.conj(f_match)).real
    w_phase = 0.5 * (1.0 - sim)
    dphi = np.angle(f_match * np.conj(unit_hid))  # shortest arc, in (-pi, pi]
    rotated = f_hid * np.exp(1j * w_phase * dphi)
    return np.where(match_mag < eps, f_hid, rotated)
