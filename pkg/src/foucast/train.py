"""Two-phase training loop.

Phase 1 learns to populate the memory bank: slots are ordinary trainable
parameters queried with ground-truth sequences, renormalized to unit
magnitude after every optimizer step.  Phase 2 freezes the bank bit-exactly
and switches the query to the input-sequence path; everything else keeps
training.  Batch composition depends only on (seed, step), so an interrupted
run resumed from a checkpoint retraces the original trajectory.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .model import NowcastModel, collect_grads, forward_tape, loss_tape, make_leaves
from .optim import OptimizerState, adamw_step, init_state
from .spectral import unit_normalize
from .synth import CovariateGrid, RadarSequence


class TrainError(RuntimeError):
    pass


@dataclass
class TrainConfig:
    lr: float = 0.001
    batch: int = 2
    phase1_steps: int = 100
    phase2_steps: int = 300
    seed: int = 0
    weight_decay: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @property
    def total_steps(self) -> int:
        return self.phase1_steps + self.phase2_steps

    def phase_of(self, step: int) -> int:
        return 1 if step < self.phase1_steps else 2


@dataclass
class PreparedEvent:
    """Event with covariates already regridded to the hidden grid."""

    frames: np.ndarray       # (T+K, 1, hw, hw)
    cov_aligned: np.ndarray | None


@dataclass
class TrainState:
    model: NowcastModel
    opt: OptimizerState
    step: int = 0
    history: list[tuple[int, int, float]] = field(default_factory=list)


def prepare_events(
    model: NowcastModel, events: list[tuple[RadarSequence, CovariateGrid]]
) -> list[PreparedEvent]:
    out = []
    for seq, cov in events:
        aligned = model.align_covariates(cov) if model.cfg.enable_pfm else None
        out.append(PreparedEvent(frames=seq.frames, cov_aligned=aligned))
    return out


def batch_indices(seed: int, step: int, n_events: int, batch: int) -> np.ndarray:
    """Deterministic per-step sampling, independent of training history."""
    rng = np.random.default_rng([seed, step])
    return rng.integers(0, n_events, size=min(batch, n_events))


def train_step(state: TrainState, prepared: list[PreparedEvent], tcfg: TrainConfig) -> float:
    """One optimizer step; returns the batch loss."""
    model = state.model
    cfg = model.cfg
    phase = tcfg.phase_of(state.step)
    if phase == 2:
        model.frozen_memory = True
    idx = batch_indices(tcfg.seed, state.step, len(prepared), tcfg.batch)

    leaves = make_leaves(model.params)
    total = None
    for i in idx:
        ev = prepared[i]
        inputs = ev.frames[: cfg.t_in]
        targets = ev.frames[cfg.t_in :]
        pred, _ = forward_tape(
            leaves, cfg, inputs, ev.cov_aligned, phase=phase,
            gt_frames=ev.frames if phase == 1 else None,
        )
        sample_loss = loss_tape(pred, targets, cfg.lam)
        total = sample_loss if total is None else ad.add(total, sample_loss)
    loss = ad.mul(total, 1.0 / len(idx))
    loss_value = float(loss.value)
    if not np.isfinite(loss_value):
        raise TrainError(f"non-finite loss {loss_value} at step {state.step}")

    ad.backward(loss)
    grads = collect_grads(model.params, leaves)
    frozen = frozenset({"memory.slots"}) if model.frozen_memory else frozenset()
    model.params, state.opt = adamw_step(model.params, grads, state.opt, frozen=frozen)
    if not model.frozen_memory:
        model.params["memory.slots"] = unit_normalize(model.params["memory.slots"])
    state.history.append((state.step, phase, loss_value))
    state.step += 1
    return loss_value


def train_model(
    model: NowcastModel,
    events: list[tuple[RadarSequence, CovariateGrid]],
    tcfg: TrainConfig,
    log_path: str | Path | None = None,
    state: TrainState | None = None,
) -> TrainState:
    """Run the two-phase protocol from ``state`` (or fresh) to completion."""
    if not events:
        raise TrainError("no training events")
    if state is None:
        opt = init_state(
            model.params, lr=tcfg.lr, beta1=tcfg.beta1, beta2=tcfg.beta2,
            eps=tcfg.eps, weight_decay=tcfg.weight_decay,
        )
        state = TrainState(model=model, opt=opt)
    prepared = prepare_events(model, events)

    log_fh = None
    writer = None
    if log_path is not None:
        fresh = state.step == 0
        log_fh = open(log_path, "a", newline="")
        writer = csv.writer(log_fh)
        if fresh:
            writer.writerow(["step", "phase", "loss"])
    try:
        while state.step < tcfg.total_steps:
            loss = train_step(state, prepared, tcfg)
            if writer is not None:
                writer.writerow([state.step - 1, tcfg.phase_of(state.step - 1), f"{loss:.8f}"])
    finally:
        if log_fh is not None:
            log_fh.close()
    return state
