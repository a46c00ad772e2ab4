"""Linear ultrasound field of a baffled circular piston.

Two evaluators of the same field:

  rayleigh  direct quadrature of the Rayleigh integral over the disc
            p = -(i w rho0 v0 / 2 pi) ∬_S e^{ikd}/d dS
  king      axisymmetric spectral integral
            p = w rho0 v0 a ∫_0^∞ J1(mu a) J0(mu rho) e^{i kz z} / kz dmu,
            kz = sqrt(k^2 - mu^2), Im kz >= 0

The spectral path is split at mu = Re k. Below it mu = Re(k) sin(theta),
above it mu = Re(k) cosh(t); both maps cancel the 1/kz endpoint singularity.
The evanescent part is cut where e^{-|kz| z} < 1e-12.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from functools import partial

import numpy as np
from scipy.special import j0, j1

from mcpl_zones.core.models import AirMedium, Backend, PistonSource, QuadSpec
from mcpl_zones.core.rules.medium import complex_wavenumber
from mcpl_zones.core.rules.quadrature import (
    QuadratureError,
    adaptive_doubling,
    composite_rule,
    panels_for_phase,
)
from mcpl_zones.runtime.executor import parallel_map

logger = logging.getLogger(__name__)

# -ln(1e-12): evanescent cut-off exponent
EVANESCENT_DECAY = 27.631021115928547

# Gauss order used on every panel of the field integrals
FIELD_ORDER = 16

# Spectral nodes processed per block
_MU_BLOCK = 8192


# ── Grids ────────────────────────────────────────────────────────────────────


@dataclass(frozen=True)
class CylGrid:
    """Axisymmetric sampling grid; optional weights when nodes are quadrature nodes."""

    radial_nodes: np.ndarray
    axial_nodes: np.ndarray
    radial_weights: np.ndarray | None = None
    axial_weights: np.ndarray | None = None

    def __post_init__(self):
        rho = np.asarray(self.radial_nodes, dtype=float)
        z = np.asarray(self.axial_nodes, dtype=float)
        if rho.ndim != 1 or z.ndim != 1 or rho.size == 0 or z.size == 0:
            raise ValueError("grid node lists must be non-empty 1-D sequences")
        if np.any(np.diff(rho) <= 0) or np.any(np.diff(z) <= 0):
            raise ValueError("grid nodes must be strictly increasing")
        if rho[0] < 0.0:
            raise ValueError("radial nodes must be >= 0")
        if z[0] <= 0.0:
            raise ValueError("axial nodes must be > 0 (in front of the baffle)")
        object.__setattr__(self, "radial_nodes", rho)
        object.__setattr__(self, "axial_nodes", z)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.axial_nodes.size, self.radial_nodes.size)


@dataclass(frozen=True)
class UltraFieldGrid:
    grid: CylGrid
    frequency: float
    pressures: np.ndarray  # complex, shape (n_axial, n_radial)
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.pressures.shape != self.grid.shape:
            raise ValueError(
                f"pressure array {self.pressures.shape} does not match grid {self.grid.shape}"
            )
        if not np.all(np.isfinite(self.pressures)):
            raise ValueError("ultrasound field contains non-finite values")


# ── Closed forms ─────────────────────────────────────────────────────────────


def on_axis_pressure(source: PistonSource, medium: AirMedium, frequency: float, z):
    """Exact on-axis pressure (w rho0 v0 / k)(e^{ikz} - e^{ik sqrt(z^2+a^2)})."""
    k = complex_wavenumber(medium, frequency).value
    z = np.asarray(z, dtype=float)
    omega = 2.0 * math.pi * frequency
    edge = np.sqrt(z * z + source.radius_a ** 2)
    amplitude = omega * medium.density_rho0 * source.surface_velocity_v0 / k
    return amplitude * (np.exp(1j * k * z) - np.exp(1j * k * edge))


def rayleigh_distance(source: PistonSource, medium: AirMedium, frequency: float) -> float:
    k = complex_wavenumber(medium, frequency).real_part
    return source.radius_a ** 2 * k / 2.0


# ── Rayleigh integral ────────────────────────────────────────────────────────


def rayleigh_pressure(
    source: PistonSource,
    medium: AirMedium,
    frequency: float,
    point: tuple[float, float],
    quad: QuadSpec | None = None,
) -> complex:
    """Disc quadrature in polar coordinates, panels doubled until converged."""
    quad = quad or QuadSpec()
    rho, z = abs(float(point[0])), float(point[1])
    if z <= 0.0:
        raise ValueError(f"field point must satisfy z > 0, got z={z}")

    k = complex_wavenumber(medium, frequency).value
    a = source.radius_a
    omega = 2.0 * math.pi * frequency
    prefactor = -1j * omega * medium.density_rho0 * source.surface_velocity_v0 / (2.0 * math.pi)

    # Phase spans along a radius and around a ring, plus the width of the 1/d peak
    start_r = max(panels_for_phase(k.real * a), math.ceil(a / (2.0 * z)))
    span = min(rho, a)
    start_phi = max(panels_for_phase(2.0 * k.real * span), math.ceil(math.pi * span / (2.0 * z)), 2)

    def evaluate(scale: int) -> np.ndarray:
        r, wr = composite_rule(0.0, a, start_r * scale, FIELD_ORDER)
        phi, wphi = composite_rule(0.0, math.pi, start_phi * scale, FIELD_ORDER)
        d = np.sqrt(z * z + rho * rho + r[:, None] ** 2 - 2.0 * rho * r[:, None] * np.cos(phi)[None, :])
        ring = (np.exp(1j * k * d) / d) @ wphi
        # Upper half-plane of the disc mirrors the lower one
        return np.array([2.0 * np.dot(wr * r, ring)])

    try:
        integral, _ = adaptive_doubling(
            evaluate, 1, quad.rel_tol, quad.max_doublings, label="rayleigh disc quadrature"
        )
    except QuadratureError as exc:
        raise QuadratureError(
            f"Rayleigh integral at (rho={rho}, z={z}) did not converge",
            estimate=prefactor * exc.estimate[0],
            error_bound=exc.error_bound,
        ) from exc
    return complex(prefactor * integral[0])


# ── Spectral (King) integral ─────────────────────────────────────────────────


def _branch_kz(k: complex, mu: np.ndarray) -> np.ndarray:
    kz = np.sqrt(k * k - mu.astype(complex) ** 2)
    return np.where(kz.imag < 0.0, -kz, kz)


def _spectral_sum(
    k: complex, a: float, rho: np.ndarray, z: np.ndarray, mu: np.ndarray, dmu: np.ndarray
) -> np.ndarray:
    """sum_j dmu_j J1(mu_j a) J0(mu_j rho) e^{i kz_j z} / kz_j, shape (len(z), len(rho))."""
    out = np.zeros((z.size, rho.size), dtype=complex)
    for start in range(0, mu.size, _MU_BLOCK):
        m = mu[start:start + _MU_BLOCK]
        kz = _branch_kz(k, m)
        weight = dmu[start:start + _MU_BLOCK] * j1(m * a) / kz
        bessel = j0(np.outer(rho, m))
        out += (np.exp(1j * np.outer(z, kz)) * weight) @ bessel.T
    return out


def _propagating_rule(k: complex, phase: float, scale: int) -> tuple[np.ndarray, np.ndarray]:
    kr = k.real
    panels = panels_for_phase(phase, minimum=4)
    if k.imag > 0.0:
        # Width of the smoothed branch point at mu = Re k
        width = math.sqrt(2.0 * k.imag / kr)
        panels = max(panels, math.ceil(math.pi / width))
    theta, w = composite_rule(0.0, math.pi / 2.0, panels * scale, FIELD_ORDER)
    return kr * np.sin(theta), w * kr * np.cos(theta)


def _evanescent_rule(
    k: complex, a: float, rho_max: float, z_lo: float, scale: int
) -> tuple[np.ndarray, np.ndarray]:
    kr = k.real
    t_max = math.asinh(EVANESCENT_DECAY / (kr * z_lo))
    phase = kr * (a + rho_max) * (math.cosh(t_max) - 1.0)
    panels = panels_for_phase(phase, minimum=4)
    if k.imag > 0.0:
        width = math.sqrt(2.0 * k.imag / kr)
        panels = max(panels, math.ceil(2.0 * t_max / width))
    t, w = composite_rule(0.0, t_max, panels * scale, FIELD_ORDER)
    return kr * np.cosh(t), w * kr * np.sinh(t)


def _row_groups(z: np.ndarray, max_rows: int = 64) -> list[np.ndarray]:
    """Index groups of ascending z spanning at most a factor of two each."""
    order = np.argsort(z)
    groups, current = [], []
    for idx in order:
        if current and (z[idx] > 2.0 * z[current[0]] or len(current) >= max_rows):
            groups.append(np.array(current))
            current = []
        current.append(idx)
    if current:
        groups.append(np.array(current))
    return groups


def _king_field(
    source: PistonSource, medium: AirMedium, frequency: float, grid: CylGrid, quad: QuadSpec
) -> tuple[np.ndarray, float]:
    k = complex_wavenumber(medium, frequency).value
    a = source.radius_a
    rho, z = grid.radial_nodes, grid.axial_nodes
    omega = 2.0 * math.pi * frequency
    prefactor = omega * medium.density_rho0 * source.surface_velocity_v0 * a
    phase = k.real * (a + rho[-1] + z[-1])
    groups = _row_groups(z)

    def evaluate(scale: int) -> np.ndarray:
        mu, dmu = _propagating_rule(k, phase, scale)
        field = _spectral_sum(k, a, rho, z, mu, dmu)
        for rows in groups:
            mu2, dmu2 = _evanescent_rule(k, a, rho[-1], z[rows[0]], scale)
            field[rows] += _spectral_sum(k, a, rho, z[rows], mu2, dmu2)
        return prefactor * field

    try:
        return adaptive_doubling(
            evaluate, 1, quad.rel_tol, quad.max_doublings, label=f"king integral {frequency:.0f} Hz"
        )
    except QuadratureError as exc:
        raise QuadratureError(
            f"spectral integral at {frequency:.0f} Hz did not converge "
            f"(grid z in [{z[0]:.3g}, {z[-1]:.3g}] m, rho up to {rho[-1]:.3g} m)",
            estimate=exc.estimate,
            error_bound=exc.error_bound,
        ) from exc


def king_pressure(
    source: PistonSource,
    medium: AirMedium,
    frequency: float,
    point: tuple[float, float],
    quad: QuadSpec | None = None,
) -> complex:
    rho, z = abs(float(point[0])), float(point[1])
    if z <= 0.0:
        raise ValueError(f"field point must satisfy z > 0, got z={z}")
    grid = CylGrid(radial_nodes=np.array([rho]), axial_nodes=np.array([z]))
    field, _ = _king_field(source, medium, frequency, grid, quad or QuadSpec())
    return complex(field[0, 0])


# ── Grid sampling ────────────────────────────────────────────────────────────


def _rayleigh_node(node, source, medium, frequency, quad) -> complex:
    return rayleigh_pressure(source, medium, frequency, node, quad)


def sample_field(
    source: PistonSource,
    medium: AirMedium,
    frequency: float,
    grid: CylGrid,
    backend: Backend = Backend.KING,
    quad: QuadSpec | None = None,
    workers: int = 1,
) -> UltraFieldGrid:
    """Dense sampling of the field on every (rho, z) node of `grid`."""
    quad = quad or QuadSpec()
    backend = Backend(backend)
    if backend is Backend.KING:
        pressures, change = _king_field(source, medium, frequency, grid, quad)
    else:
        nodes = [(r, zz) for zz in grid.axial_nodes for r in grid.radial_nodes]
        fn = partial(_rayleigh_node, source=source, medium=medium, frequency=frequency, quad=quad)
        values = parallel_map(fn, nodes, workers)
        pressures = np.asarray(values, dtype=complex).reshape(grid.shape)
        change = float("nan")
    logger.debug(
        "sampled %s field at %.0f Hz on %dx%d grid", backend.value, frequency, *grid.shape
    )
    return UltraFieldGrid(
        grid=grid,
        frequency=frequency,
        pressures=pressures,
        metadata={"backend": backend.value, "relative_change": change},
    )
