"""Run configuration: INI-style ``key = value`` files with [section] headers.

Every key is validated against the known schema before any work starts;
unknown keys and malformed values are errors that name the offending key.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field
from pathlib import Path

from .model import ModelConfig
from .modulation import PER_BIN, PER_CHANNEL
from .synth import SyntheticEventConfig
from .train import TrainConfig

DEFAULT_THRESHOLDS = (16.0, 74.0, 133.0, 160.0, 181.0, 219.0)


class ConfigError(ValueError):
    pass


@dataclass
class DataConfig:
    manifest: str | None = None
    n_events: int = 16
    train_frac: float = 0.8
    seed: int | None = None  # generator seed; falls back to [train] seed
    n_blobs: int = 3
    advect: tuple[float, float] = (0.5, 3.0)
    growth: tuple[float, float] = (-0.05, 0.05)
    anisotropy: tuple[float, float] = (1.0, 2.5)
    noise_amp: float = 0.02
    cov_hw: int = 16
    turn: tuple[float, float] = (-0.1, 0.1)
    direction_modes: int = 0
    size: tuple[float, float] = (0.045, 0.08)


@dataclass
class EvalConfig:
    thresholds: tuple[float, ...] = DEFAULT_THRESHOLDS
    model_tag: str = ""


@dataclass
class RunConfig:
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    data: DataConfig = field(default_factory=DataConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)

    def synth_config(self, seed: int | None = None) -> SyntheticEventConfig:
        if seed is None:
            seed = self.data.seed if self.data.seed is not None else self.train.seed
        return SyntheticEventConfig(
            seed=seed, hw=self.model.hw, t_in=self.model.t_in, k_out=self.model.k_out,
            n_blobs=self.data.n_blobs, advect_range=self.data.advect,
            growth_range=self.data.growth, anisotropy_range=self.data.anisotropy,
            noise_amp=self.data.noise_amp, cov_hw=self.data.cov_hw,
            turn_range=self.data.turn, direction_modes=self.data.direction_modes,
            size_range=self.data.size,
        )

    def tag(self) -> str:
        if self.eval.model_tag:
            return self.eval.model_tag
        parts = [name for name, on in (
            ("pfm", self.model.enable_pfm),
            ("fm", self.model.enable_fm),
            ("ifa", self.model.enable_ifa),
        ) if on]
        return "+".join(parts) if parts else "baseline"


class _Section:
    """One section's keys; every access marks the key as consumed."""

    def __init__(self, name: str, values: dict[str, str]):
        self.name = name
        self.values = dict(values)

    def _take(self, key: str) -> str | None:
        return self.values.pop(key, None)

    def parse(self, key: str, kind, default):
        raw = self._take(key)
        if raw is None:
            return default
        try:
            return kind(raw)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"invalid value for [{self.name}] {key}: {raw!r} ({exc})")

    def leftovers(self):
        if self.values:
            key = sorted(self.values)[0]
            raise ConfigError(f"unknown key [{self.name}] {key}")


def _bool(raw: str) -> bool:
    low = raw.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {raw!r}")


def _pair(raw: str) -> tuple[float, float]:
    parts = [p for p in raw.replace(",", " ").split() if p]
    if len(parts) != 2:
        raise ValueError(f"expected two numbers, got {raw!r}")
    return float(parts[0]), float(parts[1])


def _floats(raw: str) -> tuple[float, ...]:
    parts = [p for p in raw.replace(",", " ").split() if p]
    if not parts:
        raise ValueError("empty list")
    return tuple(float(p) for p in parts)


def _ints(raw: str) -> tuple[int, ...]:
    return tuple(int(p) for p in raw.replace(",", " ").split() if p)


def _modules(raw: str) -> set[str]:
    cleaned = raw.strip().strip("{}")
    toks = {t for t in cleaned.replace(",", " ").split() if t}
    unknown = toks - {"pfm", "fm", "ifa"}
    if unknown:
        raise ValueError(f"unknown module(s) {sorted(unknown)}")
    return toks


def _mode(raw: str) -> str:
    if raw not in (PER_BIN, PER_CHANNEL):
        raise ValueError(f"must be {PER_BIN!r} or {PER_CHANNEL!r}")
    return raw


def load_config(path: str | Path) -> RunConfig:
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str  # keys are case-sensitive
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        parser.read(path)
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse {path}: {exc}")

    known_sections = {"model", "train", "data", "eval"}
    for section in parser.sections():
        if section not in known_sections:
            raise ConfigError(f"unknown section [{section}]")

    def section(name: str) -> _Section:
        return _Section(name, dict(parser[name]) if parser.has_section(name) else {})

    m = section("model")
    model = ModelConfig(
        t_in=m.parse("t_in", int, 5),
        k_out=m.parse("k_out", int, 20),
        hw=m.parse("hw", int, 128),
        hidden_hw=m.parse("hidden_hw", int, 32),
        c_emb=m.parse("c_emb", int, 32),
        depth_l=m.parse("depth_l", int, 6),
        n_blocks=m.parse("n_blocks", int, 4),
        memory_slots=m.parse("memory_slots", int, 64),
        lam=m.parse("lambda", float, 0.57),
        fusion_per_block=m.parse("fusion_per_block", _bool, False),
        pfm_mode=m.parse("pfm_mode", _mode, PER_BIN),
        mem_channels=m.parse("mem_channels", int, 16),
        afno_bias=m.parse("afno_bias", _bool, True),
    )
    enc = m.parse("enc_channels", _ints, (16, 32, 32))
    if len(enc) != 3:
        raise ConfigError("[model] enc_channels needs exactly three values")
    model.enc_channels = enc
    enabled = m.parse("modules_enabled", _modules, {"pfm", "fm", "ifa"})
    model.enable_pfm = "pfm" in enabled
    model.enable_fm = "fm" in enabled
    model.enable_ifa = "ifa" in enabled
    m.leftovers()
    try:
        model.validate()
    except ValueError as exc:
        raise ConfigError(f"[model] {exc}")

    t = section("train")
    steps = t.parse("steps", int, None)
    phase1 = t.parse("phase1_steps", int, None)
    phase2 = t.parse("phase2_steps", int, None)
    if phase1 is None and phase2 is None:
        total = steps if steps is not None else 400
        phase1 = total // 4  # default 1:3 split between the phases
        phase2 = total - phase1
    else:
        phase1 = phase1 or 0
        phase2 = phase2 or 0
    train = TrainConfig(
        lr=t.parse("lr", float, 0.001),
        batch=t.parse("batch", int, 2),
        phase1_steps=phase1,
        phase2_steps=phase2,
        seed=t.parse("seed", int, 0),
        weight_decay=t.parse("weight_decay", float, 0.01),
    )
    t.leftovers()
    if train.batch < 1 or train.lr <= 0:
        raise ConfigError("[train] batch must be >= 1 and lr positive")

    d = section("data")
    data = DataConfig(
        manifest=d.parse("manifest", str, None),
        n_events=d.parse("n_events", int, 16),
        train_frac=d.parse("train_frac", float, 0.8),
        seed=d.parse("seed", int, None),
        n_blobs=d.parse("n_blobs", int, 3),
        advect=d.parse("advect", _pair, (0.5, 3.0)),
        growth=d.parse("growth", _pair, (-0.05, 0.05)),
        anisotropy=d.parse("anisotropy", _pair, (1.0, 2.5)),
        noise_amp=d.parse("noise_amp", float, 0.02),
        cov_hw=d.parse("cov_hw", int, 16),
        turn=d.parse("turn", _pair, (-0.1, 0.1)),
        direction_modes=d.parse("direction_modes", int, 0),
        size=d.parse("size", _pair, (0.045, 0.08)),
    )
    d.leftovers()
    if not 0.0 <= data.train_frac <= 1.0:
        raise ConfigError("[data] train_frac must lie in [0, 1]")
    if data.n_events < 0:
        raise ConfigError("[data] n_events must be nonnegative")

    e = section("eval")
    ev = EvalConfig(
        thresholds=e.parse("thresholds", _floats, DEFAULT_THRESHOLDS),
        model_tag=e.parse("model_tag", str, ""),
    )
    e.leftovers()
    for th in ev.thresholds:
        if not 0.0 <= th <= 255.0:
            raise ConfigError(f"[eval] thresholds entry {th} outside [0, 255]")

    return RunConfig(model=model, train=train, data=data, eval=ev)
