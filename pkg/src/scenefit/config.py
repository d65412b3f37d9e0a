"""Run configuration: a flat key=value file format with CLI overrides and a
stable content hash embedded in every output artifact."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field, fields
from pathlib import Path


class ConfigError(ValueError):
    """Bad configuration file, key, or value."""


@dataclass
class RunConfig:
    # paths
    character_model: str = ""
    clip: str = ""
    catalog: str = ""
    out_dir: str = "run"
    # run identity
    seed: int = 0
    motion_index: int = 0
    n_motions: int = 8
    # env pool
    n_envs: int = 8
    steps_per_env: int = 64
    reset_noise: float = 0.0
    # imitator PPO
    iterations: int = 120
    gamma: float = 0.99
    lam: float = 0.95
    clip_eps: float = 0.2
    epochs: int = 5
    minibatch: int = 128
    lr_policy: float = 1e-4
    lr_critic: float = 1e-3
    policy_std: float = 0.05
    policy_hidden: str = "256,128,64"
    # behavior-cloning warm start (0 disables)
    bc_episodes: int = 40
    bc_steps: int = 2500
    # frame-value network / pseudo labels
    fvn_every: int = 32
    fvn_steps: int = 400
    fvn_lr: float = 1e-3
    cluster_threshold: float = 0.5
    # scene generator
    gen_window: int = 512
    gen_lr: float = 3e-3
    gen_epochs: int = 4
    gen_entropy: float = 0.01
    slots: int = 1
    slots_from_priors: bool = True
    alpha: float = 0.1
    contact_gate: bool = True
    pose_prior: bool = True
    gen_hidden: str = "64,16"
    place_std: float = 0.3
    # oracle layout for imitator-only training; a fraction of envs run a
    # jittered placement so contact outcomes vary at matched poses (the
    # contact-value contrast the frame-value net regresses on)
    oracle_object: int = 1
    oracle_tx: float = 1.2
    oracle_jitter: float = 0.35
    jitter_fraction: float = 0.25
    # evaluation
    eval_episodes: int = 10
    eval_layout_samples: int = 4
    eval_reset_noise: float = 0.01

    def hidden_sizes(self) -> list[int]:
        return [int(v) for v in self.policy_hidden.split(",") if v.strip()]

    def gen_hidden_sizes(self) -> list[int]:
        return [int(v) for v in self.gen_hidden.split(",") if v.strip()]

    def validate_paths(self) -> None:
        for key in ("character_model", "clip", "catalog"):
            p = getattr(self, key)
            if not p:
                raise ConfigError(f"missing required path '{key}'")
            if not Path(p).exists():
                raise ConfigError(f"{key}: file not found: {p}")


_FIELDS = {f.name: f for f in fields(RunConfig)}


def _coerce(name: str, raw: str):
    f = _FIELDS[name]
    raw = raw.strip()
    if f.type in ("bool", bool):
        low = raw.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"key {name}: expected a boolean, got {raw!r}")
    if f.type in ("int", int):
        try:
            return int(raw)
        except ValueError as exc:
            raise ConfigError(f"key {name}: expected an integer, got {raw!r}") from exc
    if f.type in ("float", float):
        try:
            return float(raw)
        except ValueError as exc:
            raise ConfigError(f"key {name}: expected a number, got {raw!r}") from exc
    return raw


def parse_config_text(text: str, source: str = "<config>") -> dict:
    values = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value'")
        key, raw = stripped.split("=", 1)
        key = key.strip()
        if key not in _FIELDS:
            raise ConfigError(f"{source}:{lineno}: unknown key '{key}'")
        values[key] = _coerce(key, raw)
    return values


def load_config(path, overrides: dict | None = None) -> RunConfig:
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"config file not found: {path}")
    values = parse_config_text(p.read_text(), source=str(path))
    if overrides:
        for k, v in overrides.items():
            if k not in _FIELDS:
                raise ConfigError(f"override: unknown key '{k}'")
            values[k] = v if not isinstance(v, str) else _coerce(k, v)
    return RunConfig(**values)


def config_to_text(cfg: RunConfig) -> str:
    lines = []
    for f in fields(RunConfig):
        lines.append(f"{f.name} = {getattr(cfg, f.name)}")
    return "\n".join(lines) + "\n"


def config_hash(cfg: RunConfig) -> str:
    return hashlib.sha256(config_to_text(cfg).encode()).hexdigest()[:12]


def write_config(cfg: RunConfig, path, header: str = "") -> None:
    body = config_to_text(cfg)
    text = (header + "\n" if header else "") + body
    Path(path).write_text(text)
