"""Drive-signal synthesis for the multi-carrier emitter."""

from __future__ import annotations

import cmath
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from mcpl_zones.core.models import CarrierSet, FactorMode

logger = logging.getLogger(__name__)


class NyquistError(ValueError):
    pass


def factor_weights(weight: complex, mode: FactorMode = FactorMode.CANONICAL) -> tuple[complex, complex]:
    """Split an audio weight into sideband weights with conj(w1) * w2 == weight."""
    weight = complex(weight)
    if FactorMode(mode) is FactorMode.CANONICAL:
        return 1.0 + 0.0j, weight
    root = math.sqrt(abs(weight))
    half = 0.5 * cmath.phase(weight)
    return root * cmath.exp(-1j * half), root * cmath.exp(1j * half)


@dataclass(frozen=True)
class DriveSignal:
    sample_rate: float
    samples: np.ndarray
    gain: float  # applied to reach |s| <= 1
    carriers: tuple[float, ...]
    weights: tuple[complex, ...]
    metadata: dict = field(default_factory=dict)

    @property
    def duration(self) -> float:
        return self.samples.size / self.sample_rate

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.samples.size) / self.sample_rate


def synthesize(
    carriers: CarrierSet,
    weights,
    sample_rate: float,
    duration: float,
    mode: FactorMode = FactorMode.CANONICAL,
) -> DriveSignal:
    """Real part of the summed sideband pairs, peak-normalized to 1."""
    weights = np.asarray(weights, dtype=complex)
    if weights.shape != (len(carriers),):
        raise ValueError(f"expected {len(carriers)} weights, got shape {weights.shape}")
    if not duration > 0.0:
        raise ValueError(f"duration must be positive, got {duration!r}")
    for channel in carriers.channels:
        if sample_rate <= 2.0 * channel.upper_frequency:
            raise NyquistError(
                f"sample rate {sample_rate:.0f} Hz cannot carry the "
                f"{channel.upper_frequency:.0f} Hz sideband of the "
                f"{channel.center_frequency_fc:.0f} Hz carrier; need > {2.0 * channel.upper_frequency:.0f} Hz"
            )

    t = np.arange(int(round(sample_rate * duration))) / sample_rate
    composite = np.zeros(t.size, dtype=complex)
    pairs = []
    for channel, w in zip(carriers.channels, weights):
        # A carrier with no audio weight is not driven at all
        w1, w2 = factor_weights(w, mode) if w != 0 else (0j, 0j)
        pairs.append([[w1.real, w1.imag], [w2.real, w2.imag]])
        composite += w1 * np.exp(-1j * channel.omega_lower * t) + w2 * np.exp(-1j * channel.omega_upper * t)

    samples = composite.real
    peak = float(np.max(np.abs(samples))) if samples.size else 0.0
    gain = 1.0 / peak if peak > 0.0 else 1.0
    logger.debug("synthesized %d samples at %.0f Hz, gain %.4g", t.size, sample_rate, gain)
    return DriveSignal(
        sample_rate=float(sample_rate),
        samples=samples * gain,
        gain=gain,
        carriers=tuple(carriers.center_frequencies),
        weights=tuple(complex(w) for w in weights),
        metadata={
            "audio_frequency": carriers.audio_frequency,
            "factorization": FactorMode(mode).value,
            "sideband_weights": pairs,
        },
    )


def spectrum(drive: DriveSignal) -> tuple[np.ndarray, np.ndarray]:
    """One-sided magnitude spectrum in dB relative to its strongest bin."""
    magnitude = np.abs(np.fft.rfft(drive.samples))
    freqs = np.fft.rfftfreq(drive.samples.size, d=1.0 / drive.sample_rate)
    peak = magnitude.max()
    if peak == 0.0:
        return freqs, np.full(magnitude.shape, -np.inf)
    with np.errstate(divide="ignore"):
        return freqs, 20.0 * np.log10(magnitude / peak)
