"""Atmospheric absorption and complex wavenumbers.

Pure-tone absorption per ISO 9613-1:

  alpha = f^2 * [ 1.84e-11 (pa/pr)^-1 (T/T0)^1/2
                  + (T/T0)^-5/2 ( 0.01275 e^(-2239.1/T) / (frO + f^2/frO)
                                + 0.1068  e^(-3352.0/T) / (frN + f^2/frN) ) ]   [Np/m]

The standard quotes 8.686 times this in dB/m.
"""

from __future__ import annotations

import math

from pydantic import BaseModel, ConfigDict

from mcpl_zones.core.models import AirMedium

REFERENCE_PRESSURE = 101_325.0  # Pa
REFERENCE_TEMPERATURE = 293.15  # K
TRIPLE_POINT = 273.16  # K


class DomainError(ValueError):
    pass


class ComplexWavenumber(BaseModel):
    model_config = ConfigDict(frozen=True)

    real_part: float  # rad/m
    imag_part: float  # Np/m, >= 0

    @property
    def value(self) -> complex:
        return complex(self.real_part, self.imag_part)


def _relaxation_frequencies(medium: AirMedium) -> tuple[float, float, float]:
    """Returns (T in K, oxygen and nitrogen relaxation frequencies in Hz)."""
    T = medium.temperature_celsius + 273.15
    pa_rel = medium.ambient_pressure / REFERENCE_PRESSURE

    # Saturation vapour pressure relative to the reference pressure
    C = -6.8346 * (TRIPLE_POINT / T) ** 1.261 + 4.6151
    psat_rel = 10.0 ** C
    h = medium.relative_humidity * psat_rel / pa_rel  # molar concentration, %

    fr_o = pa_rel * (24.0 + 4.04e4 * h * (0.02 + h) / (0.391 + h))
    tau = T / REFERENCE_TEMPERATURE
    fr_n = pa_rel * tau ** -0.5 * (9.0 + 280.0 * h * math.exp(-4.170 * (tau ** (-1.0 / 3.0) - 1.0)))
    return T, fr_o, fr_n


def absorption_coefficient(medium: AirMedium, frequency: float) -> float:
    """Atmospheric absorption in Np/m at a pure tone."""
    if not frequency > 0.0:
        raise DomainError(f"frequency must be positive, got {frequency!r}")

    T, fr_o, fr_n = _relaxation_frequencies(medium)
    tau = T / REFERENCE_TEMPERATURE
    pa_rel = medium.ambient_pressure / REFERENCE_PRESSURE
    f2 = frequency * frequency

    classical = 1.84e-11 / pa_rel * tau ** 0.5
    oxygen = 0.01275 * math.exp(-2239.1 / T) / (fr_o + f2 / fr_o)
    nitrogen = 0.1068 * math.exp(-3352.0 / T) / (fr_n + f2 / fr_n)
    return f2 * (classical + tau ** -2.5 * (oxygen + nitrogen))


def complex_wavenumber(
    medium: AirMedium, frequency: float, audio: bool = False
) -> ComplexWavenumber:
    """k = 2 pi f / c0 + i alpha(f).

    The imaginary part is zero when the medium is lossless, or when `audio`
    is set and the medium drops audio-band absorption.
    """
    alpha = absorption_coefficient(medium, frequency)
    if medium.lossless or (audio and medium.lossless_audio):
        alpha = 0.0
    return ComplexWavenumber(
        real_part=2.0 * math.pi * frequency / medium.sound_speed_c0,
        imag_part=alpha,
    )
