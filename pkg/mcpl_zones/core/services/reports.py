"""Per-variant records and the experiment summary."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field


def _json_float(value: float):
    return float(value) if math.isfinite(value) else str(value)


@dataclass
class VariantRecord:
    audio_frequency: float
    carrier_count: int
    carriers_hz: list[float]
    weights: list[list[float]]  # [re, im] per carrier
    contrast: float
    contrast_db: float
    mean_contrast_db: float
    eigen_residual: float
    effective_distance_m: float
    effective_distance_unbounded: bool = False
    map_extent_m: float = math.nan
    files: dict[str, str] = field(default_factory=dict)

    @property
    def label(self) -> str:
        return f"fa{self.audio_frequency:.0f}_n{self.carrier_count}"

    def to_dict(self) -> dict:
        data = asdict(self)
        for key in ("contrast", "contrast_db", "mean_contrast_db", "map_extent_m"):
            data[key] = _json_float(data[key])
        return data


@dataclass
class ExperimentSummary:
    config_hash: str
    preset: str
    backend: str
    variants: list[VariantRecord] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)

    def variant(self, audio_frequency: float, carrier_count: int) -> VariantRecord | None:
        for record in self.variants:
            if record.audio_frequency == audio_frequency and record.carrier_count == carrier_count:
                return record
        return None

    def audio_frequencies(self) -> list[float]:
        return sorted({r.audio_frequency for r in self.variants})

    def contrast_is_monotone(self, audio_frequency: float) -> bool:
        """Optimal contrast never drops as carriers are added."""
        records = sorted(
            (r for r in self.variants if r.audio_frequency == audio_frequency),
            key=lambda r: r.carrier_count,
        )
        return all(b.contrast >= a.contrast * (1.0 - 1e-9) for a, b in zip(records, records[1:]))

    def to_dict(self) -> dict:
        return {
            "config_hash": self.config_hash,
            "preset": self.preset,
            "backend": self.backend,
            "warnings": list(self.warnings),
            "variants": [r.to_dict() for r in self.variants],
        }
