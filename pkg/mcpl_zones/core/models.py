"""Core domain models: medium, source, carriers, zones and quadrature settings."""

from __future__ import annotations

import enum
import math

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

# Lowest frequency still treated as ultrasonic
ULTRASONIC_FLOOR_HZ = 20_000.0

# Minimum spacing between carrier center frequencies
CARRIER_SPACING_HZ = 20_000.0


# ── Enums ────────────────────────────────────────────────────────────────────


class Backend(str, enum.Enum):
    RAYLEIGH = "rayleigh"
    KING = "king"


class FactorMode(str, enum.Enum):
    CANONICAL = "canonical"
    BALANCED = "balanced"


class Preset(str, enum.Enum):
    DESK = "desk"
    PAPER = "paper"


# ── Physical setup ───────────────────────────────────────────────────────────


class AirMedium(BaseModel):
    """Ambient air. c0 and rho0 are taken as given, not derived from temperature."""

    model_config = ConfigDict(frozen=True)

    temperature_celsius: float = 20.0
    relative_humidity: float = Field(default=70.0, ge=0.0, le=100.0)
    density_rho0: float = Field(default=1.21, gt=0.0)
    sound_speed_c0: float = Field(default=343.0, gt=0.0)
    nonlinearity_beta: float = Field(default=1.2, gt=0.0)
    ambient_pressure: float = Field(default=101_325.0, gt=0.0)
    lossless: bool = False  # drop absorption at every frequency
    lossless_audio: bool = False  # drop absorption at audio frequencies only


class PistonSource(BaseModel):
    model_config = ConfigDict(frozen=True)

    radius_a: float = Field(default=0.1, gt=0.0)
    surface_velocity_v0: float = Field(default=1.0, gt=0.0)


class CarrierChannel(BaseModel):
    """One modulated carrier: sidebands at f_c ± f_a/2 with complex drive weights."""

    model_config = ConfigDict(frozen=True)

    center_frequency_fc: float = Field(gt=0.0)
    audio_frequency_fa: float = Field(gt=0.0)
    lower_sideband_w1: complex = 1.0 + 0.0j
    upper_sideband_w2: complex = 1.0 + 0.0j

    @model_validator(mode="after")
    def _sidebands_ultrasonic(self) -> CarrierChannel:
        if self.lower_frequency <= ULTRASONIC_FLOOR_HZ:
            raise ValueError(
                f"lower sideband {self.lower_frequency:.1f} Hz of the "
                f"{self.center_frequency_fc:.0f} Hz carrier is not ultrasonic"
            )
        return self

    @property
    def lower_frequency(self) -> float:
        return self.center_frequency_fc - self.audio_frequency_fa / 2.0

    @property
    def upper_frequency(self) -> float:
        return self.center_frequency_fc + self.audio_frequency_fa / 2.0

    @property
    def omega_lower(self) -> float:
        return 2.0 * math.pi * self.lower_frequency

    @property
    def omega_upper(self) -> float:
        return 2.0 * math.pi * self.upper_frequency

    @property
    def audio_weight(self) -> complex:
        """w_n = conj(w1) * w2, the weight seen by the demodulated audio."""
        return self.lower_sideband_w1.conjugate() * self.upper_sideband_w2


class CarrierSet(BaseModel):
    model_config = ConfigDict(frozen=True)

    channels: tuple[CarrierChannel, ...]

    @model_validator(mode="after")
    def _shared_audio_and_spacing(self) -> CarrierSet:
        if not self.channels:
            raise ValueError("a carrier set needs at least one channel")
        fa = self.channels[0].audio_frequency_fa
        if any(ch.audio_frequency_fa != fa for ch in self.channels):
            raise ValueError("all channels must share one audio frequency")
        fcs = sorted(ch.center_frequency_fc for ch in self.channels)
        for lo, hi in zip(fcs, fcs[1:]):
            if hi - lo <= CARRIER_SPACING_HZ:
                raise ValueError(
                    f"carriers {lo:.0f} Hz and {hi:.0f} Hz are closer than "
                    f"{CARRIER_SPACING_HZ:.0f} Hz"
                )
        return self

    @classmethod
    def from_frequencies(cls, carriers: list[float], audio_frequency: float) -> CarrierSet:
        return cls(channels=tuple(
            CarrierChannel(center_frequency_fc=fc, audio_frequency_fa=audio_frequency)
            for fc in carriers
        ))

    @property
    def audio_frequency(self) -> float:
        return self.channels[0].audio_frequency_fa

    @property
    def center_frequencies(self) -> list[float]:
        return [ch.center_frequency_fc for ch in self.channels]

    def __len__(self) -> int:
        return len(self.channels)

    def prefix(self, n: int) -> CarrierSet:
        return CarrierSet(channels=self.channels[:n])

    def reference_index(self, reference_hz: float) -> int | None:
        for i, fc in enumerate(self.center_frequencies):
            if math.isclose(fc, reference_hz, rel_tol=0.0, abs_tol=1e-6):
                return i
        return None


# ── Sampling geometry ────────────────────────────────────────────────────────


class ZoneSpec(BaseModel):
    """Rectangular control-point region in the Oxz plane."""

    model_config = ConfigDict(frozen=True)

    x_range: tuple[float, float]
    z_range: tuple[float, float]
    nx: int = Field(ge=1)
    nz: int = Field(ge=1)

    @model_validator(mode="after")
    def _ordered(self) -> ZoneSpec:
        if not self.x_range[0] < self.x_range[1]:
            raise ValueError(f"x_range must be increasing, got {self.x_range}")
        if not self.z_range[0] < self.z_range[1]:
            raise ValueError(f"z_range must be increasing, got {self.z_range}")
        if self.z_range[0] <= 0.0:
            raise ValueError("zones must lie in front of the baffle (z > 0)")
        return self

    @property
    def count(self) -> int:
        return self.nx * self.nz

    def x_nodes(self) -> np.ndarray:
        return _uniform(self.x_range, self.nx)

    def z_nodes(self) -> np.ndarray:
        return _uniform(self.z_range, self.nz)

    def points(self) -> np.ndarray:
        """(nx*nz, 2) array of (x, z), x varying fastest."""
        X, Z = np.meshgrid(self.x_nodes(), self.z_nodes())
        return np.column_stack([X.ravel(), Z.ravel()])


def _uniform(bounds: tuple[float, float], n: int) -> np.ndarray:
    # A single node sits at the center of the range
    if n == 1:
        return np.array([0.5 * (bounds[0] + bounds[1])])
    return np.linspace(bounds[0], bounds[1], n)


class AxialSpec(BaseModel):
    model_config = ConfigDict(frozen=True)

    z_min: float = Field(default=0.05, gt=0.0)
    z_max: float = Field(default=10.0, gt=0.0)
    n: int = Field(default=200, ge=2)
    log_spacing: bool = True

    @model_validator(mode="after")
    def _ordered(self) -> AxialSpec:
        if not self.z_min < self.z_max:
            raise ValueError("axial z_min must be below z_max")
        return self

    def z_nodes(self) -> np.ndarray:
        if self.log_spacing:
            return np.geomspace(self.z_min, self.z_max, self.n)
        return np.linspace(self.z_min, self.z_max, self.n)

    def points(self) -> np.ndarray:
        z = self.z_nodes()
        return np.column_stack([np.zeros_like(z), z])


# ── Numerical settings ───────────────────────────────────────────────────────


class QuadSpec(BaseModel):
    """Quadrature settings shared by the ultrasound and audio solvers."""

    model_config = ConfigDict(frozen=True)

    axial_nodes: int = Field(default=200, ge=8)
    radial_nodes: int = Field(default=100, ge=8)
    panel_order: int = Field(default=8, ge=2, le=32)
    rel_tol: float = Field(default=1e-6, gt=0.0)
    max_doublings: int = Field(default=6, ge=0)
    angular_max_panels: int = Field(default=128, ge=2)
    prune_rel: float = Field(default=1e-12, ge=0.0)


class TruncationPolicy(BaseModel):
    """How far the virtual-source volume extends."""

    model_config = ConfigDict(frozen=True)

    decay_db: float = Field(default=60.0, gt=0.0)
    radial_margin: float = Field(default=3.0, gt=0.0)  # rho_max = margin * a + ...
    z_floor: float = Field(default=0.5, gt=0.0)
    z_cap: float = Field(default=15.0, gt=0.0)
    warn_fraction: float = Field(default=1e-2, gt=0.0)


class VolumeTruncation(BaseModel):
    model_config = ConfigDict(frozen=True)

    z_max: float = Field(gt=0.0)
    rho_max: float = Field(gt=0.0)
