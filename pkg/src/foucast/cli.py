"""Command-line entry point: synth, train, eval, report."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .config import ConfigError, load_config
from .evaluate import default_workers, evaluate_model, write_reports
from .model import ModelError, NowcastModel
from .synth import Manifest, SynthError, load_event, read_manifest, synth_dataset
from .tensorfile import TensorFileError
from .train import TrainConfig, TrainError, TrainState, train_model


def _load_split(manifest: Manifest, split: str):
    entries = manifest.split(split)
    return [load_event(entry, manifest) for entry in entries]


def cmd_synth(args) -> int:
    cfg = load_config(args.config)
    out = Path(args.out)
    scfg = cfg.synth_config(seed=args.seed)
    manifest_path = synth_dataset(scfg, cfg.data.n_events, out, cfg.data.train_frac)
    print(f"wrote {cfg.data.n_events} events, manifest {manifest_path}")
    return 0


def cmd_train(args) -> int:
    cfg = load_config(args.config)
    manifest_path = args.manifest or cfg.data.manifest
    if manifest_path is None:
        raise ConfigError("no manifest: pass --manifest or set [data] manifest")
    manifest = read_manifest(manifest_path)
    events = _load_split(manifest, "train")
    if not events:
        raise TrainError("manifest has no train events")

    tcfg = cfg.train
    if args.seed is not None:
        tcfg = TrainConfig(
            lr=tcfg.lr, batch=tcfg.batch, phase1_steps=tcfg.phase1_steps,
            phase2_steps=tcfg.phase2_steps, seed=args.seed,
            weight_decay=tcfg.weight_decay,
        )

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.checkpoint:
        model, opt, meta = load_checkpoint(args.checkpoint, expect_cfg=cfg.model)
        state = TrainState(model=model, opt=opt, step=meta["step"])
        print(f"resuming from step {meta['step']}")
    else:
        model = NowcastModel.initialize(cfg.model, seed=tcfg.seed)
        state = None

    state = train_model(model, events, tcfg, log_path=out / "train_log.csv", state=state)
    ckpt = out / "model.ckpt"
    save_checkpoint(
        ckpt, state.model, state.opt, step=state.step,
        phase=tcfg.phase_of(max(state.step - 1, 0)),
    )
    final = state.history[-1][2] if state.history else float("nan")
    print(f"trained {state.step} steps, final loss {final:.6f}, checkpoint {ckpt}")
    return 0


def cmd_eval(args) -> int:
    cfg = load_config(args.config)
    manifest_path = args.manifest or cfg.data.manifest
    if manifest_path is None:
        raise ConfigError("no manifest: pass --manifest or set [data] manifest")
    manifest = read_manifest(manifest_path)
    events = _load_split(manifest, "test")
    if not events:
        raise ConfigError("manifest has no test events")
    model, _, _ = load_checkpoint(args.checkpoint, expect_cfg=cfg.model)
    report = evaluate_model(
        model, events, list(cfg.eval.thresholds), tag=cfg.tag(),
        max_workers=default_workers(),
    )
    paths = write_reports(args.out, report)
    print(f"csi_avg {report.csi_avg:.4f} hss_avg {report.hss_avg:.4f} "
          f"mse {report.mse:.4f} mae {report.mae:.4f} "
          f"psnr {report.psnr:.4f} ssim {report.ssim:.4f}")
    for p in paths:
        print(f"wrote {p}")
    return 0


def cmd_report(args) -> int:
    out = Path(args.out)
    any_found = False
    for name in ("metrics_csi.csv", "metrics_pixel.csv", "metrics_leadtime.csv"):
        path = out / name
        if not path.exists():
            continue
        any_found = True
        print(f"== {name}")
        lines = path.read_text().strip().splitlines()
        cols = [line.split(",") for line in lines]
        widths = [max(len(row[i]) for row in cols) for i in range(len(cols[0]))]
        for row in cols:
            print("  ".join(cell.ljust(w) for cell, w in zip(row, widths)))
        print()
    if not any_found:
        print(f"error: no metric CSVs under {out}", file=sys.stderr)
        return 2
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="foucast",
        description="Frequency-domain multimodal nowcasting: synthesize data, "
                    "train the two-phase model, evaluate, and report.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic dataset + manifest")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="run the two-phase training protocol")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--manifest", default=None)
    p.add_argument("--checkpoint", default=None, help="resume from this checkpoint")
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="score a checkpoint on the test split")
    p.add_argument("--config", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--manifest", default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("report", help="print the metric CSVs as tables")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, SynthError, ModelError, TrainError,
            CheckpointError, TensorFileError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
