"""Experiment manifests (versioned JSON; unknown keys are errors) and seed fan-out."""

from __future__ import annotations

import dataclasses
import json
import zlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from legr.nn import TrainConfig
from legr.search import SearchConfig

SCHEMA_VERSION = 1


class ConfigError(ValueError):
    """Invalid manifest; names the file and the offending field."""

    def __init__(self, message: str, field: str | None = None, path: str | None = None):
        self.field = field
        self.path = path
        prefix = f"{path}: " if path else ""
        if field:
            prefix += f"field '{field}': "
        super().__init__(prefix + message)


def derive_seed(seed: int, stream: str) -> int:
    """Independent 63-bit seed for a named sub-stream of ``seed``."""
    ss = np.random.SeedSequence(int(seed), spawn_key=(zlib.crc32(stream.encode()),))
    return int(ss.generate_state(1, np.uint64)[0] >> np.uint64(1))


@dataclass
class DatasetSpec:
    kind: str = "synth"
    # synthetic generator
    n: int = 3000
    classes: int = 4
    size: int = 32
    noise: float = 0.25
    test_fraction: float = 0.2
    # IDX files (relative paths resolve against the manifest directory)
    train_images: str | None = None
    train_labels: str | None = None
    test_images: str | None = None
    test_labels: str | None = None


@dataclass
class SweepSpec:
    zetas: list[float] = field(default_factory=lambda: [0.8, 0.7, 0.6, 0.5, 0.4, 0.3, 0.2])
    finetune_steps: int = 2000


@dataclass
class ExperimentManifest:
    architecture: str
    dataset: DatasetSpec = field(default_factory=DatasetSpec)
    val_fraction: float = 0.10
    pretrain: TrainConfig = field(default_factory=lambda: TrainConfig(learning_rate=0.01, batch_size=16))
    pretrain_steps: int = 2000
    finetune: TrainConfig = field(default_factory=lambda: TrainConfig(learning_rate=0.005, batch_size=16))
    search: SearchConfig = field(default_factory=SearchConfig)
    sweep: SweepSpec = field(default_factory=SweepSpec)
    output_dir: str = "runs"
    seed: int = 0
    base_dir: Path = field(default=Path("."), repr=False)
    # search.zeta_hat_low follows min(sweep.zetas) unless set explicitly
    auto_zeta_hat: bool = field(default=True, repr=False)

    def __post_init__(self):
        z = self.sweep.zetas
        if not z:
            raise ConfigError("needs at least one target", "sweep.zetas")
        if any(not 0.0 < v <= 1.0 for v in z):
            raise ConfigError("values must lie in (0, 1]", "sweep.zetas")
        if any(b >= a for a, b in zip(z, z[1:])):
            raise ConfigError("values must be sorted descending and distinct", "sweep.zetas")

    def resolve(self, rel: str) -> Path:
        p = Path(rel)
        return p if p.is_absolute() else self.base_dir / p

    @property
    def out_path(self) -> Path:
        return self.resolve(self.output_dir)

    def with_seed(self, seed: int) -> "ExperimentManifest":
        return dataclasses.replace(self, seed=seed)

    def with_zetas(self, zetas: list[float]) -> "ExperimentManifest":
        m = dataclasses.replace(self, sweep=dataclasses.replace(self.sweep, zetas=list(zetas)))
        if self.auto_zeta_hat:
            m.search = dataclasses.replace(m.search, zeta_hat_low=min(m.sweep.zetas))
        return m


_NO_SEED = {"seed"}


def _build(cls, data, section: str, path: str | None, skip=frozenset()):
    if not isinstance(data, dict):
        raise ConfigError("must be an object", section, path)
    names = {f.name for f in dataclasses.fields(cls)} - set(skip)
    unknown = set(data) - names
    if unknown:
        raise ConfigError(f"unknown keys {sorted(unknown)}", section, path)
    try:
        return cls(**data)
    except (TypeError, ValueError) as e:
        raise ConfigError(str(e), section, path) from None


def manifest_from_dict(doc: dict, base_dir: Path = Path("."), path: str | None = None) -> ExperimentManifest:
    doc = dict(doc)
    version = doc.pop("schema_version", None)
    if version != SCHEMA_VERSION:
        raise ConfigError(f"expected {SCHEMA_VERSION}, got {version!r}", "schema_version", path)
    top = {"architecture", "dataset", "val_fraction", "pretrain", "pretrain_steps", "finetune",
           "search", "sweep", "output_dir", "seed"}
    unknown = set(doc) - top
    if unknown:
        raise ConfigError(f"unknown keys {sorted(unknown)}", None, path)
    if "architecture" not in doc:
        raise ConfigError("missing", "architecture", path)
    kwargs = {k: doc[k] for k in ("architecture", "val_fraction", "pretrain_steps", "output_dir", "seed") if k in doc}
    if "dataset" in doc:
        kwargs["dataset"] = _build(DatasetSpec, doc["dataset"], "dataset", path)
        ds = kwargs["dataset"]
        if ds.kind == "idx":
            for key in ("train_images", "train_labels", "test_images", "test_labels"):
                if getattr(ds, key) is None:
                    raise ConfigError("missing for an idx dataset", f"dataset.{key}", path)
        elif ds.kind != "synth":
            raise ConfigError(f"unknown kind {ds.kind!r} (synth or idx)", "dataset.kind", path)
    for key in ("pretrain", "finetune"):
        if key in doc:
            kwargs[key] = _build(TrainConfig, doc[key], key, path, skip=_NO_SEED)
    kwargs["search"] = _build(_SearchSection, doc.get("search", {}), "search", path)
    if "sweep" in doc:
        kwargs["sweep"] = _build(SweepSpec, doc["sweep"], "sweep", path)
    try:
        m = ExperimentManifest(**kwargs, base_dir=base_dir)
    except TypeError as e:
        raise ConfigError(str(e), None, path) from None
    m.auto_zeta_hat = m.search.zeta_hat_low is None
    try:
        m.search = m.search.finalize(min(m.sweep.zetas))
    except ValueError as e:
        raise ConfigError(str(e), "search", path) from None
    if not 0.0 < m.val_fraction < 1.0:
        raise ConfigError("must lie in (0, 1)", "val_fraction", path)
    return m


@dataclass
class _SearchSection:
    """SearchConfig whose lowest target defaults to the smallest sweep target."""

    zeta_hat_low: float | None = None
    sigma: float = 0.1
    total_iters: int = 400
    sample_size: int = 16
    mutation_percent: float = 10.0
    pool_size: int = 64
    tau_hat: int = 200

    def finalize(self, default_zeta: float) -> SearchConfig:
        args = dataclasses.asdict(self)
        if args["zeta_hat_low"] is None:
            args["zeta_hat_low"] = default_zeta
        return SearchConfig(**args)


def load_manifest(path: str | Path) -> ExperimentManifest:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except FileNotFoundError:
        raise ConfigError("manifest file not found", None, str(path)) from None
    except json.JSONDecodeError as e:
        raise ConfigError(f"invalid JSON at line {e.lineno} column {e.colno}: {e.msg}", None, str(path)) from None
    try:
        return manifest_from_dict(doc, path.parent, str(path))
    except ValueError as e:
        if isinstance(e, ConfigError):
            raise
        raise ConfigError(str(e), None, str(path)) from None


def manifest_to_dict(m: ExperimentManifest) -> dict:
    """Inverse of manifest_from_dict (sub-stream seeds are not serialized)."""
    def train(cfg: TrainConfig):
        d = dataclasses.asdict(cfg)
        d.pop("seed")
        d["lr_schedule"] = [list(p) for p in d["lr_schedule"]]
        return d

    search = dataclasses.asdict(m.search)
    search.pop("seed")
    if m.auto_zeta_hat:
        search.pop("zeta_hat_low")
    return {
        "schema_version": SCHEMA_VERSION,
        "architecture": m.architecture,
        "dataset": dataclasses.asdict(m.dataset),
        "val_fraction": m.val_fraction,
        "pretrain": train(m.pretrain),
        "pretrain_steps": m.pretrain_steps,
        "finetune": train(m.finetune),
        "search": search,
        "sweep": dataclasses.asdict(m.sweep),
        "output_dir": m.output_dir,
        "seed": m.seed,
    }
