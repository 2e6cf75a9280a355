"""Experiment configuration: one TOML file + master seed drives every stage."""

from __future__ import annotations

import sys
from dataclasses import dataclass, field, replace
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib


@dataclass(frozen=True)
class PopulationConfig:
    num_users: int = 300
    num_db: int = 5000
    num_train: int = 2200
    num_holdout: int = 250
    d_latent: int = 128
    num_clusters: int = 0
    cluster_spread: float = 0.45

    @property
    def total(self) -> int:
        return self.num_users + self.num_db + self.num_train + self.num_holdout

    def user_range(self) -> range:
        return range(0, self.num_users)

    def db_range(self) -> range:
        return range(self.num_users, self.num_users + self.num_db)

    def train_range(self) -> range:
        start = self.num_users + self.num_db
        return range(start, start + self.num_train)

    def holdout_range(self) -> range:
        start = self.num_users + self.num_db + self.num_train
        return range(start, start + self.num_holdout)


@dataclass(frozen=True)
class ExtractorConfig:
    name: str
    noise_sigma: float = 0.35
    d: int = 128


@dataclass(frozen=True)
class CalibrationConfig:
    num_identities: int = 1200
    samples_per_identity: int = 4
    num_impostor_pairs: int = 150_000


@dataclass(frozen=True)
class TrainingConfig:
    lambda_cyc: float = 0.85
    learning_rate: float = 0.9
    batch_size: int = 50
    epochs: int = 200
    patience: int = 20
    pairs_per_identity: int = 10
    holdout_pairs_per_identity: int = 10


@dataclass(frozen=True)
class ExperimentConfig:
    master_seed: int = 20260801
    out_dir: str = "runs/default"
    far_targets: tuple[float, ...] = (0.01, 0.001)
    attack_far: float = 0.001
    backend: str = "bch"  # "bch" or "pinsketch"
    n_out: int = 127
    population: PopulationConfig = field(default_factory=PopulationConfig)
    extractor: ExtractorConfig = field(default_factory=lambda: ExtractorConfig(name="alpha"))
    extractor_alt: ExtractorConfig = field(default_factory=lambda: ExtractorConfig(name="beta"))
    calibration: CalibrationConfig = field(default_factory=CalibrationConfig)
    training: TrainingConfig = field(default_factory=TrainingConfig)
    ridge_lambda: float = 1e-3

    def __post_init__(self):
        if self.backend not in ("bch", "pinsketch"):
            raise ValueError(f"unknown backend {self.backend!r}")
        if self.backend == "bch":
            m = self.n_out.bit_length()
            if (1 << m) - 1 != self.n_out:
                raise ValueError(f"bch backend needs n_out = 2^m - 1, got {self.n_out}")
        elif self.n_out > 255:
            raise ValueError("pinsketch backend supports templates up to 255 bits")
        if self.attack_far not in self.far_targets:
            raise ValueError("attack_far must be one of far_targets")
        if self.extractor.name == self.extractor_alt.name:
            raise ValueError("the two extractors must have distinct names")
        if self.extractor.d != self.extractor_alt.d:
            raise ValueError("extractor dimensions must agree")
        min_imp = max(1.0 / min(self.far_targets), 1)
        if self.calibration.num_impostor_pairs < min_imp:
            raise ValueError(
                f"calibration needs >= {int(min_imp)} impostor pairs for the "
                f"smallest FAR target"
            )


_SECTION_TYPES = {
    "population": PopulationConfig,
    "extractor": ExtractorConfig,
    "extractor_alt": ExtractorConfig,
    "calibration": CalibrationConfig,
    "training": TrainingConfig,
}


def load_config(path) -> ExperimentConfig:
    """Parse a TOML experiment file; unknown keys are rejected loudly."""
    with open(path, "rb") as fh:
        raw = tomllib.load(fh)
    kwargs = {}
    for key, value in raw.items():
        if key in _SECTION_TYPES:
            section_cls = _SECTION_TYPES[key]
            try:
                kwargs[key] = section_cls(**value)
            except TypeError as exc:
                raise ValueError(f"bad [{key}] section in {path}: {exc}") from None
        elif key == "far_targets":
            kwargs[key] = tuple(float(x) for x in value)
        elif key in ("master_seed", "n_out"):
            kwargs[key] = int(value)
        elif key in ("attack_far", "ridge_lambda"):
            kwargs[key] = float(value)
        elif key in ("out_dir", "backend"):
            kwargs[key] = str(value)
        else:
            raise ValueError(f"unknown key {key!r} in {path}")
    return ExperimentConfig(**kwargs)


def apply_overrides(cfg: ExperimentConfig, seed: int | None = None,
                    out_dir: str | None = None, far: float | None = None,
                    backend: str | None = None) -> ExperimentConfig:
    """Apply the CLI's global overrides on top of a loaded config."""
    if seed is not None:
        cfg = replace(cfg, master_seed=seed)
    if out_dir is not None:
        cfg = replace(cfg, out_dir=out_dir)
    if far is not None:
        targets = tuple(sorted(set(cfg.far_targets) | {far}, reverse=True))
        cfg = replace(cfg, attack_far=far, far_targets=targets)
    if backend is not None:
        n_out = 127 if backend == "bch" else 128
        cfg = replace(cfg, backend=backend, n_out=n_out)
    return cfg
