"""Checkpoint serialization: a JSON header line followed by FCT1 tensor blobs.

The header carries the architecture config, training phase, step count, and
optimizer scalars; the blobs carry every parameter plus the optimizer moment
vectors in declared order.  Round trips are bit-exact, and loading against a
mismatched config is an error naming the offending field.
"""

from __future__ import annotations

import dataclasses
import json
from pathlib import Path

from . import tensorfile
from .model import ModelConfig, NowcastModel
from .optim import OptimizerState
from .params import ParamSet

FORMAT_VERSION = 1


class CheckpointError(IOError):
    pass


def save_checkpoint(
    path: str | Path,
    model: NowcastModel,
    opt: OptimizerState | None = None,
    step: int = 0,
    phase: int = 1,
) -> None:
    cfg_dict = dataclasses.asdict(model.cfg)
    header = {
        "version": FORMAT_VERSION,
        "config": cfg_dict,
        "frozen_memory": model.frozen_memory,
        "step": step,
        "phase": phase,
        "param_names": model.params.names(),
        "optimizer": None,
    }
    if opt is not None:
        header["optimizer"] = {
            "step": opt.step, "lr": opt.lr, "beta1": opt.beta1,
            "beta2": opt.beta2, "eps": opt.eps, "weight_decay": opt.weight_decay,
        }
    tmp = Path(str(path) + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(json.dumps(header).encode("utf-8") + b"\n")
        for name in model.params.names():
            tensorfile.write_stream(fh, model.params[name])
        if opt is not None:
            tensorfile.write_stream(fh, opt.m)
            tensorfile.write_stream(fh, opt.v)
    tmp.replace(path)


def load_checkpoint(
    path: str | Path, expect_cfg: ModelConfig | None = None
) -> tuple[NowcastModel, OptimizerState | None, dict]:
    with open(path, "rb") as fh:
        header_line = fh.readline()
        try:
            header = json.loads(header_line.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise CheckpointError(f"unreadable checkpoint header: {exc}") from exc
        if header.get("version") != FORMAT_VERSION:
            raise CheckpointError(
                f"checkpoint version {header.get('version')} != {FORMAT_VERSION}"
            )
        cfg_dict = dict(header["config"])
        cfg_dict["enc_channels"] = tuple(cfg_dict["enc_channels"])
        cfg = ModelConfig(**cfg_dict)
        if expect_cfg is not None:
            mismatches = [
                f"{f.name}: checkpoint={getattr(cfg, f.name)!r} vs config={getattr(expect_cfg, f.name)!r}"
                for f in dataclasses.fields(ModelConfig)
                if getattr(cfg, f.name) != getattr(expect_cfg, f.name)
            ]
            if mismatches:
                raise CheckpointError("config mismatch: " + "; ".join(mismatches))
        params = ParamSet()
        for name in header["param_names"]:
            params.add(name, tensorfile.read_stream(fh))
        opt = None
        if header["optimizer"] is not None:
            meta = header["optimizer"]
            opt = OptimizerState(
                m=tensorfile.read_stream(fh), v=tensorfile.read_stream(fh),
                step=int(meta["step"]), lr=meta["lr"], beta1=meta["beta1"],
                beta2=meta["beta2"], eps=meta["eps"], weight_decay=meta["weight_decay"],
            )
    model = NowcastModel(cfg=cfg, params=params, frozen_memory=bool(header["frozen_memory"]))
    meta = {"step": int(header["step"]), "phase": int(header["phase"])}
    return model, opt, meta
