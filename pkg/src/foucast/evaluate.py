"""Model evaluation over a dataset split, with CSV report emission.

Samples are scored independently (optionally fanned out over a bounded
thread pool, capped by FOUCAST_THREADS) and reduced in manifest order, so
results do not depend on scheduling.  Categorical scores aggregate the
contingency counts over all pixels before the ratio; pixel errors aggregate
sums; SSIM averages per-frame scores.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import metrics
from .metrics import ContingencyCounts
from .model import NowcastModel
from .synth import CovariateGrid, RadarSequence


def default_workers() -> int:
    env = os.environ.get("FOUCAST_THREADS")
    if env:
        return max(1, int(env))
    return min(4, os.cpu_count() or 1)


@dataclass
class _SampleStats:
    counts: dict[float, ContingencyCounts]
    lead_counts: dict[int, dict[float, ContingencyCounts]]
    sq_err: float
    abs_err: float
    n_pix: int
    ssim_sum: float
    n_frames: int
    lead_sq: np.ndarray
    lead_abs: np.ndarray
    lead_ssim: np.ndarray
    lead_pix: np.ndarray


def _score_sample(pred: np.ndarray, target: np.ndarray, thresholds) -> _SampleStats:
    k = pred.shape[0]
    counts = {t: ContingencyCounts() for t in thresholds}
    lead_counts = {j: {t: ContingencyCounts() for t in thresholds} for j in range(k)}
    lead_sq = np.zeros(k)
    lead_abs = np.zeros(k)
    lead_ssim = np.zeros(k)
    lead_pix = np.zeros(k)
    ssim_sum = 0.0
    for j in range(k):
        p, g = pred[j, 0], target[j, 0]
        for t in thresholds:
            c = metrics.contingency(p, g, t)
            counts[t] = counts[t] + c
            lead_counts[j][t] = lead_counts[j][t] + c
        d = metrics.PIXEL_SCALE * (p - g)
        lead_sq[j] = float(np.sum(d * d))
        lead_abs[j] = float(np.sum(np.abs(d)))
        lead_pix[j] = d.size
        s = metrics.ssim(p[None], g[None])
        lead_ssim[j] = s
        ssim_sum += s
    return _SampleStats(
        counts=counts, lead_counts=lead_counts,
        sq_err=float(lead_sq.sum()), abs_err=float(lead_abs.sum()),
        n_pix=int(lead_pix.sum()), ssim_sum=ssim_sum, n_frames=k,
        lead_sq=lead_sq, lead_abs=lead_abs, lead_ssim=lead_ssim, lead_pix=lead_pix,
    )


@dataclass
class EvalReport:
    tag: str
    thresholds: list[float]
    csi: dict[float, float] = field(default_factory=dict)
    hss: dict[float, float] = field(default_factory=dict)
    csi_avg: float = 0.0
    hss_avg: float = 0.0
    mse: float = 0.0
    mae: float = 0.0
    psnr: float = 0.0
    ssim: float = 0.0
    lead_rows: list[dict] = field(default_factory=list)  # per-lead breakdown


def evaluate_model(
    model: NowcastModel,
    events: list[tuple[RadarSequence, CovariateGrid]],
    thresholds: list[float],
    tag: str = "model",
    max_workers: int | None = None,
) -> EvalReport:
    if not events:
        raise ValueError("no evaluation events")
    cfg = model.cfg

    def work(pair):
        seq, cov = pair
        pred = model.predict(seq, cov)
        return _score_sample(pred, seq.frames[cfg.t_in :], thresholds)

    workers = max_workers or default_workers()
    if workers > 1 and len(events) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            stats = list(pool.map(work, events))
    else:
        stats = [work(pair) for pair in events]

    report = EvalReport(tag=tag, thresholds=list(thresholds))
    total = {t: ContingencyCounts() for t in thresholds}
    k = cfg.k_out
    lead_total = {j: {t: ContingencyCounts() for t in thresholds} for j in range(k)}
    sq = ab = pix = ssim_sum = frames = 0.0
    lead_sq = np.zeros(k)
    lead_ab = np.zeros(k)
    lead_ssim = np.zeros(k)
    lead_pix = np.zeros(k)
    for s in stats:
        for t in thresholds:
            total[t] = total[t] + s.counts[t]
        for j in range(k):
            for t in thresholds:
                lead_total[j][t] = lead_total[j][t] + s.lead_counts[j][t]
        sq += s.sq_err
        ab += s.abs_err
        pix += s.n_pix
        ssim_sum += s.ssim_sum
        frames += s.n_frames
        lead_sq += s.lead_sq
        lead_ab += s.lead_abs
        lead_ssim += s.lead_ssim
        lead_pix += s.lead_pix

    report.csi = {t: metrics.csi(total[t]) for t in thresholds}
    report.hss = {t: metrics.hss(total[t]) for t in thresholds}
    report.csi_avg = metrics.average_over_thresholds(report.csi)
    report.hss_avg = metrics.average_over_thresholds(report.hss)
    report.mse = sq / pix
    report.mae = ab / pix
    report.psnr = metrics.PSNR_PERFECT if report.mse == 0 else 10.0 * math.log10(
        metrics.PIXEL_SCALE**2 / report.mse
    )
    report.ssim = ssim_sum / frames
    for j in range(k):
        m = lead_sq[j] / lead_pix[j]
        report.lead_rows.append({
            "lead": (j + 1) * 10.0,
            "csi": float(np.mean([metrics.csi(lead_total[j][t]) for t in thresholds])),
            "hss": float(np.mean([metrics.hss(lead_total[j][t]) for t in thresholds])),
            "mse": m,
            "mae": lead_ab[j] / lead_pix[j],
            "psnr": metrics.PSNR_PERFECT if m == 0 else 10.0 * math.log10(metrics.PIXEL_SCALE**2 / m),
            "ssim": lead_ssim[j] / len(stats),
        })
    return report


def write_reports(out_dir: str | Path, report: EvalReport) -> list[Path]:
    """Emit the three CSV reports; returns the written paths."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    def emit(name: str, header: str, rows: list[str]) -> Path:
        path = out_dir / name
        tmp = path.with_suffix(".tmp")
        tmp.write_text(header + "\n" + "".join(r + "\n" for r in rows))
        tmp.replace(path)
        return path

    paths = [
        emit(
            "metrics_csi.csv",
            "model,threshold,csi,hss",
            [f"{report.tag},{t:g},{report.csi[t]:.6f},{report.hss[t]:.6f}" for t in report.thresholds]
            + [f"{report.tag},avg,{report.csi_avg:.6f},{report.hss_avg:.6f}"],
        ),
        emit(
            "metrics_pixel.csv",
            "model,mse,mae,psnr,ssim",
            [f"{report.tag},{report.mse:.6f},{report.mae:.6f},{report.psnr:.6f},{report.ssim:.6f}"],
        ),
        emit(
            "metrics_leadtime.csv",
            "model,lead_minutes,csi,hss,mse,mae,psnr,ssim",
            [
                f"{report.tag},{r['lead']:g},{r['csi']:.6f},{r['hss']:.6f},"
                f"{r['mse']:.6f},{r['mae']:.6f},{r['psnr']:.6f},{r['ssim']:.6f}"
                for r in report.lead_rows
            ],
        ),
    ]
    return paths
