"""Experiment configuration: TOML loading, resolution presets and hashing."""

from __future__ import annotations

import hashlib

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from importlib.resources import files
from pathlib import Path

from pydantic import BaseModel, ConfigDict, Field, model_validator

from mcpl_zones.core.models import (
    AirMedium,
    AxialSpec,
    Backend,
    CarrierSet,
    FactorMode,
    PistonSource,
    Preset,
    QuadSpec,
    TruncationPolicy,
    ZoneSpec,
)

# Fields that change where results go, not what they are
_HASH_EXCLUDE = {"run": {"cache_dir", "output_dir", "workers"}}

# Resolution overrides per preset
PRESETS: dict[Preset, dict] = {
    Preset.DESK: {
        "field_map": {"nx": 61, "nz": 121},
        "quadrature": {"axial_nodes": 200, "radial_nodes": 100},
    },
    Preset.PAPER: {
        "field_map": {"nx": 121, "nz": 241},
        "quadrature": {"axial_nodes": 400, "radial_nodes": 200},
    },
}


class RunSettings(BaseModel):
    model_config = ConfigDict(frozen=True)

    preset: Preset = Preset.DESK
    backend: Backend = Backend.KING
    audio_frequencies: list[float] = [500.0, 1000.0, 2000.0, 4000.0]
    carrier_frequencies: list[float] = [40_000.0, 80_000.0, 120_000.0, 160_000.0]
    reference_carrier_hz: float = 40_000.0
    regularization: float | None = Field(default=None, ge=0.0)
    cache_dir: Path = Path(".mcpl-cache")
    output_dir: Path = Path("results")
    workers: int = Field(default=1, ge=1)


class Zones(BaseModel):
    model_config = ConfigDict(frozen=True)

    bright: ZoneSpec = ZoneSpec(x_range=(-0.2, 0.2), z_range=(0.1, 1.0), nx=10, nz=10)
    dark: ZoneSpec = ZoneSpec(x_range=(-1.0, 1.0), z_range=(1.5, 6.0), nx=30, nz=45)


class SignalSettings(BaseModel):
    model_config = ConfigDict(frozen=True)

    sample_rate: float = Field(default=400_000.0, gt=0.0)
    duration: float = Field(default=0.05, gt=0.0)
    factorization: FactorMode = FactorMode.CANONICAL


class ExperimentConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    run: RunSettings = RunSettings()
    medium: AirMedium = AirMedium()
    piston: PistonSource = PistonSource()
    zones: Zones = Zones()
    axial: AxialSpec = AxialSpec()
    field_map: ZoneSpec = ZoneSpec(x_range=(-1.0, 1.0), z_range=(0.05, 6.0), nx=61, nz=121)
    quadrature: QuadSpec = QuadSpec()
    truncation: TruncationPolicy = TruncationPolicy()
    signal: SignalSettings = SignalSettings()

    @model_validator(mode="after")
    def _carriers_valid(self) -> ExperimentConfig:
        if not self.run.audio_frequencies:
            raise ValueError("at least one audio frequency is required")
        # CarrierSet enforces spacing and ultrasonic sidebands for every f_a
        for fa in self.run.audio_frequencies:
            self.carrier_set(fa)
        return self

    def carrier_set(self, audio_frequency: float) -> CarrierSet:
        return CarrierSet.from_frequencies(self.run.carrier_frequencies, audio_frequency)

    def config_hash(self) -> str:
        return hashlib.sha256(self.model_dump_json(exclude=_HASH_EXCLUDE).encode()).hexdigest()


def default_config_path() -> Path:
    return Path(str(files("mcpl_zones") / "configs" / "default.toml"))


def load_config(path: Path | None = None) -> ExperimentConfig:
    """Parse a TOML file (the shipped default when `path` is None).

    The file's preset supplies only the resolution keys the file leaves unset;
    explicit `[quadrature]` and `[field_map]` values win.
    """
    path = path or default_config_path()
    with open(path, "rb") as fh:
        data = tomllib.load(fh)
    preset = Preset(data.get("run", {}).get("preset", RunSettings().preset))
    defaults = ExperimentConfig()
    for section, values in PRESETS[preset].items():
        base = getattr(defaults, section).model_dump()
        data[section] = {**base, **values, **data.get(section, {})}
    return ExperimentConfig.model_validate(data)


def apply_preset(config: ExperimentConfig, preset: Preset | None = None) -> ExperimentConfig:
    """Force a preset's resolution onto `config`, replacing any explicit values."""
    preset = Preset(preset or config.run.preset)
    overrides = PRESETS[preset]
    return with_overrides(
        config,
        run={"preset": preset},
        field_map=overrides["field_map"],
        quadrature=overrides["quadrature"],
    )


def with_overrides(config: ExperimentConfig, **sections: dict) -> ExperimentConfig:
    """Merge per-section overrides and re-validate."""
    data = config.model_dump()
    for name, values in sections.items():
        data[name] = {**data[name], **values}
    return ExperimentConfig.model_validate(data)
