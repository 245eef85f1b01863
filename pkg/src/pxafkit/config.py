"""Pipeline configuration: strict YAML schema with defaults.

The whole run is driven by one human-readable document; unknown keys
are rejected with a JSON-pointer-style path, every tunable has a
default, and the normalized form hashes stably so artifacts can record
the exact configuration that produced them.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from . import PxafError


class SchemaError(PxafError):
    pass


@dataclass
class ToyDataConfig:
    train_per_class: int = 300
    val_per_class: int = 100
    test_per_class: int = 100
    train_pxaf_count: int = 0        # 0 means train_per_class (balanced)
    noise_std: float = 0.02


@dataclass
class DataConfig:
    source: str = "toy"              # "toy" | "records"
    records_dir: str = ""
    fs: int = 128
    channel: int = 0
    seg_seconds: float = 4.0
    split_fractions: tuple = (0.7, 0.15, 0.15)
    toy: ToyDataConfig = field(default_factory=ToyDataConfig)


@dataclass
class SignalConfig:
    wavelet: str = "db3"
    wavelet_levels: int = 10
    detail_levels: tuple = (2, 3, 4)
    use_approximation: bool = True
    shannon_window_seconds: float = 0.1
    recurrence_seconds: float = 4.0
    thresholded: bool = False
    epsilon: float = 0.1


@dataclass
class GanSectionConfig:
    seg_len: int = 512
    n_leads: int = 1
    depth: int = 4
    base_channels: int = 16
    epochs: int = 300               # full-scale reference setting: 8000
    lr: float = 1e-4
    batch_size: int = 8
    phase_shuffle_n: int = 2
    kernel_size: int = 25
    dtype: str = "float32"
    generate_count: int = 300


@dataclass
class CertifyThresholdConfig:
    min_peaks: int = 3
    min_envelope_snr: float = 4.0
    tau2: float = 0.65
    tau3: float = 0.60
    min_rr_ms: float = 250.0
    tau4: float = 6.0
    tau5: float = 3.5
    cv_floor: float = 0.05
    min_rr_per_half: int = 3


@dataclass
class CertifyConfig:
    thresholds: CertifyThresholdConfig = field(default_factory=CertifyThresholdConfig)
    host: str = "127.0.0.1"
    port: int = 8214


@dataclass
class NasSearchConfig:
    epochs: int = 50
    batch_size: int = 6
    lr: float = 0.025
    momentum: float = 0.9
    weight_decay: float = 3e-4
    alpha_lr: float = 3e-4
    alpha_weight_decay: float = 1e-3
    init_channels: int = 16
    n_normal: int = 6
    n_reduction: int = 2
    normal_per_block: int = 3
    dtype: str = "float32"


@dataclass
class FinetuneConfig:
    epochs: int = 200
    batch_size: int = 10
    lr: float = 0.025
    momentum: float = 0.9
    weight_decay: float = 3e-4
    init_channels: int = 16
    include_baseline: bool = True
    dataset: str = "cgan"            # original | cgan | gan


@dataclass
class NasConfig:
    search: NasSearchConfig = field(default_factory=NasSearchConfig)
    finetune: FinetuneConfig = field(default_factory=FinetuneConfig)


@dataclass
class EvalConfig:
    threshold: float = 0.5


@dataclass
class PipelineConfig:
    version: int = 1
    seed: int = 0
    data: DataConfig = field(default_factory=DataConfig)
    signal: SignalConfig = field(default_factory=SignalConfig)
    gan: GanSectionConfig = field(default_factory=GanSectionConfig)
    certify: CertifyConfig = field(default_factory=CertifyConfig)
    nas: NasConfig = field(default_factory=NasConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)


_SCALARS = (int, float, str, bool)


def _coerce_scalar(value, target, path):
    if isinstance(target, bool):
        if not isinstance(value, bool):
            raise SchemaError(f"{path}: expected bool, got {value!r}")
        return value
    if isinstance(target, int) and not isinstance(target, bool):
        if isinstance(value, bool) or not isinstance(value, (int, float)) \
                or int(value) != value:
            raise SchemaError(f"{path}: expected integer, got {value!r}")
        return int(value)
    if isinstance(target, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise SchemaError(f"{path}: expected number, got {value!r}")
        return float(value)
    if isinstance(target, str):
        if not isinstance(value, str):
            raise SchemaError(f"{path}: expected string, got {value!r}")
        return value
    if isinstance(target, tuple):
        if not isinstance(value, (list, tuple)):
            raise SchemaError(f"{path}: expected list, got {value!r}")
        return tuple(value)
    raise SchemaError(f"{path}: unsupported value {value!r}")


def _build(cls, data: dict, path: str = ""):
    if not isinstance(data, dict):
        raise SchemaError(f"{path or '/'}: expected mapping, got {type(data).__name__}")
    fields = {f.name: f for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - set(fields))
    if unknown:
        raise SchemaError(f"{path}/{unknown[0]}: unknown key")
    kwargs = {}
    for name, f in fields.items():
        if name not in data:
            continue
        sub_path = f"{path}/{name}"
        default = (f.default_factory() if f.default_factory is not dataclasses.MISSING
                   else f.default)
        if dataclasses.is_dataclass(default):
            kwargs[name] = _build(type(default), data[name], sub_path)
        else:
            kwargs[name] = _coerce_scalar(data[name], default, sub_path)
    return cls(**kwargs)


def _check_invariants(cfg: PipelineConfig):
    checks = [
        (cfg.signal.wavelet_levels >= 1, "/signal/wavelet_levels: must be >= 1"),
        (cfg.signal.shannon_window_seconds > 0,
         "/signal/shannon_window_seconds: must be positive"),
        (cfg.signal.wavelet in ("db3",), "/signal/wavelet: only db3 is available"),
        (cfg.data.source in ("toy", "records"),
         "/data/source: must be 'toy' or 'records'"),
        (cfg.gan.seg_len % (2 ** cfg.gan.depth) == 0,
         "/gan/seg_len: must be divisible by 2^depth"),
        (cfg.gan.epochs >= 1, "/gan/epochs: must be >= 1"),
        (0.0 < cfg.eval.threshold < 1.0, "/eval/threshold: must be in (0, 1)"),
        (cfg.nas.finetune.dataset in ("original", "cgan", "gan"),
         "/nas/finetune/dataset: must be original, cgan, or gan"),
        (all(k >= 1 for k in cfg.signal.detail_levels),
         "/signal/detail_levels: levels start at 1"),
        (abs(sum(cfg.data.split_fractions) - 1.0) < 1e-9,
         "/data/split_fractions: must sum to 1"),
    ]
    for ok, message in checks:
        if not ok:
            raise SchemaError(message)


def validate_config(path: str | Path | None = None,
                    overrides: dict | None = None) -> PipelineConfig:
    """Load, default-fill, override, and validate a configuration file.

    An absent or empty file yields the full default configuration.
    Overrides use dotted paths ("gan.epochs") with YAML-parsed values.
    """
    raw = {}
    if path is not None and Path(path).exists():
        text = Path(path).read_text()
        raw = yaml.safe_load(text) or {}
    cfg = _build(PipelineConfig, raw)
    for dotted, value in (overrides or {}).items():
        cfg = _apply_override(cfg, dotted, value)
    _check_invariants(cfg)
    return cfg


def _apply_override(cfg: PipelineConfig, dotted: str, value):
    doc = to_dict(cfg)
    node = doc
    parts = dotted.split(".")
    for part in parts[:-1]:
        if part not in node or not isinstance(node[part], dict):
            raise SchemaError(f"/{dotted.replace('.', '/')}: unknown key")
        node = node[part]
    if parts[-1] not in node:
        raise SchemaError(f"/{dotted.replace('.', '/')}: unknown key")
    node[parts[-1]] = yaml.safe_load(str(value)) if isinstance(value, str) else value
    return _build(PipelineConfig, doc)


def to_dict(cfg) -> dict:
    out = {}
    for f in dataclasses.fields(cfg):
        v = getattr(cfg, f.name)
        if dataclasses.is_dataclass(v):
            out[f.name] = to_dict(v)
        elif isinstance(v, tuple):
            out[f.name] = list(v)
        else:
            out[f.name] = v
    return out


def config_hash(cfg, sections: list[str] | None = None) -> str:
    """Stable hash of the normalized config (optionally a subset of
    top-level sections plus the seed)."""
    doc = to_dict(cfg)
    if sections is not None:
        doc = {k: doc[k] for k in sorted(sections)}
        doc["seed"] = cfg.seed
    return hashlib.sha256(
        json.dumps(doc, sort_keys=True, separators=(",", ":")).encode()).hexdigest()


def stage_seed(seed: int, stage: str) -> int:
    """Deterministic per-stage seed fan-out."""
    digest = hashlib.sha256(f"{seed}:{stage}".encode()).digest()
    return int.from_bytes(digest[:8], "little") % (2 ** 31)
