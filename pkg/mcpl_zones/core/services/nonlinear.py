"""Quasilinear demodulation of sideband pairs into audio.

For one carrier with unit sideband drive the audio pressure at r is

  H(r) = -i rho0 w_a ∭ q(r_v) e^{i k_a |r - r_v|} / (4 pi |r - r_v|) dV
  q    = -(i beta w_a / (rho0^2 c0^4)) conj(p_lower) p_upper

q is axisymmetric, so the volume integral is a sum over source rings
(rho', z') of  rho' q G_ring,  where

  G_ring = (1 / 2 pi) ∫_0^pi e^{ikD} / D dphi,
  D^2    = (z - z')^2 + x^2 + rho'^2 - 2 x rho' cos(phi).

The ring integral is taken with phi = pi u^2, which flattens the 1/D peak at
phi = 0. Weighted multi-carrier audio is p_a = sum_n w_n H_n.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
from dataclasses import dataclass, field
from functools import partial

import numpy as np

from mcpl_zones.core.models import (
    AirMedium,
    Backend,
    CarrierChannel,
    CarrierSet,
    PistonSource,
    QuadSpec,
    TruncationPolicy,
    VolumeTruncation,
)
from mcpl_zones.core.rules.medium import complex_wavenumber
from mcpl_zones.core.rules.quadrature import composite_rule, graded_rule
from mcpl_zones.core.services.ultrasound import CylGrid, on_axis_pressure, sample_field
from mcpl_zones.runtime.executor import chunked, parallel_map

logger = logging.getLogger(__name__)

REFERENCE_PRESSURE = 20e-6  # Pa, SPL reference

# First zero of J1; sets the first-null half-angle of the lower sideband beam
_J1_FIRST_ZERO = 3.8317059702075125

# Observation points handed to one worker task
_POINTS_PER_TASK = 64


# ── Source density ───────────────────────────────────────────────────────────


def virtual_source_density(ultra_lower, ultra_upper, medium: AirMedium, audio_frequency: float):
    omega_a = 2.0 * math.pi * audio_frequency
    scale = medium.nonlinearity_beta * omega_a / (medium.density_rho0 ** 2 * medium.sound_speed_c0 ** 4)
    return -1j * scale * np.conj(ultra_lower) * ultra_upper


def spl(pressure):
    """Sound pressure level re 20 uPa; zero pressure maps to -inf."""
    magnitude = np.abs(pressure)
    with np.errstate(divide="ignore"):
        level = 20.0 * np.log10(magnitude / REFERENCE_PRESSURE)
    if np.ndim(level) == 0:
        return float(level)
    return level


def audio_pressure(carriers: CarrierSet, weights, transfer_row) -> complex:
    weights = np.asarray(weights, dtype=complex)
    transfer_row = np.asarray(transfer_row, dtype=complex)
    if weights.shape != (len(carriers),) or transfer_row.shape != (len(carriers),):
        raise ValueError(
            f"expected {len(carriers)} weights and transfer values, "
            f"got {weights.shape} and {transfer_row.shape}"
        )
    return complex(np.dot(weights, transfer_row))


# ── Truncation ───────────────────────────────────────────────────────────────


def default_truncation(
    source: PistonSource,
    medium: AirMedium,
    channel: CarrierChannel,
    policy: TruncationPolicy | None = None,
) -> VolumeTruncation:
    """Axial bound where |p_lower p_upper| on axis has fallen `decay_db` below
    its maximum; radial bound widens with the lower-sideband null angle."""
    policy = policy or TruncationPolicy()
    z = np.geomspace(source.radius_a / 100.0, policy.z_cap, 4000)
    product = np.abs(
        on_axis_pressure(source, medium, channel.lower_frequency, z)
        * on_axis_pressure(source, medium, channel.upper_frequency, z)
    )
    threshold = product.max() * 10.0 ** (-policy.decay_db / 20.0)
    above = np.nonzero(product >= threshold)[0]
    last = above[-1]
    z_max = z[min(last + 1, z.size - 1)]
    z_max = float(np.clip(z_max, policy.z_floor, policy.z_cap))

    k1 = complex_wavenumber(medium, channel.lower_frequency).real_part
    half_angle = math.asin(min(1.0, _J1_FIRST_ZERO / (k1 * source.radius_a)))
    rho_max = policy.radial_margin * source.radius_a + z_max * half_angle
    return VolumeTruncation(z_max=z_max, rho_max=rho_max)


# ── Virtual source rings ─────────────────────────────────────────────────────


@dataclass(frozen=True)
class VirtualSource:
    """Quadrature-weighted source rings of one carrier (unit sideband drive)."""

    rho: np.ndarray
    z: np.ndarray
    strength: np.ndarray  # w_rho w_z rho' q per ring
    audio_wavenumber: complex
    audio_frequency: float
    density_rho0: float
    truncation: VolumeTruncation
    warnings: tuple[str, ...] = ()


def source_grid(source: PistonSource, truncation: VolumeTruncation, quad: QuadSpec) -> CylGrid:
    """Graded axial nodes over [0, z_max]; radial nodes split at 1.5 a."""
    a = source.radius_a
    z, wz = graded_rule(0.0, truncation.z_max, a / 8.0, quad.axial_nodes, quad.panel_order)

    split = min(1.5 * a, 0.5 * truncation.rho_max)
    inner = quad.radial_nodes // 2
    outer = quad.radial_nodes - inner
    r1, w1 = composite_rule(0.0, split, max(1, math.ceil(inner / quad.panel_order)), quad.panel_order)
    r2, w2 = composite_rule(split, truncation.rho_max, max(1, math.ceil(outer / quad.panel_order)), quad.panel_order)
    return CylGrid(
        radial_nodes=np.concatenate([r1, r2]),
        axial_nodes=z,
        radial_weights=np.concatenate([w1, w2]),
        axial_weights=wz,
    )


def build_virtual_source(
    source: PistonSource,
    medium: AirMedium,
    channel: CarrierChannel,
    truncation: VolumeTruncation,
    quad: QuadSpec | None = None,
    backend: Backend = Backend.KING,
    field_cache=None,
    workers: int = 1,
    policy: TruncationPolicy | None = None,
) -> VirtualSource:
    quad = quad or QuadSpec()
    policy = policy or TruncationPolicy()
    grid = source_grid(source, truncation, quad)
    lower = _sideband_field(source, medium, channel.lower_frequency, grid, backend, quad, field_cache, workers)
    upper = _sideband_field(source, medium, channel.upper_frequency, grid, backend, quad, field_cache, workers)

    q = virtual_source_density(lower, upper, medium, channel.audio_frequency_fa)
    weights = np.outer(grid.axial_weights, grid.radial_weights * grid.radial_nodes)
    strength = weights * q

    warnings = []
    # Share of source mass in the last axial panel flags a short volume
    mass = np.abs(strength)
    tail = mass[-quad.panel_order:].sum() / mass.sum()
    if tail > policy.warn_fraction:
        message = (
            f"virtual-source volume for the {channel.center_frequency_fc:.0f} Hz carrier "
            f"may be too short: last axial panel holds {tail:.2%} of the source mass "
            f"(z_max={truncation.z_max:.2f} m)"
        )
        logger.warning(message)
        warnings.append(message)

    zz, rr = np.meshgrid(grid.axial_nodes, grid.radial_nodes, indexing="ij")
    keep = mass.ravel() > quad.prune_rel * mass.max()
    logger.debug(
        "virtual source %.0f Hz: %d of %d rings kept",
        channel.center_frequency_fc, int(keep.sum()), keep.size,
    )
    return VirtualSource(
        rho=rr.ravel()[keep],
        z=zz.ravel()[keep],
        strength=strength.ravel()[keep],
        audio_wavenumber=complex_wavenumber(medium, channel.audio_frequency_fa, audio=True).value,
        audio_frequency=channel.audio_frequency_fa,
        density_rho0=medium.density_rho0,
        truncation=truncation,
        warnings=tuple(warnings),
    )


def _sideband_field(source, medium, frequency, grid, backend, quad, field_cache, workers) -> np.ndarray:
    if field_cache is None:
        return sample_field(source, medium, frequency, grid, backend, quad, workers).pressures
    key = field_key(source, medium, frequency, grid, backend, quad)
    cached = field_cache.load_field(key)
    if cached is not None:
        return cached.pressures
    ultra = sample_field(source, medium, frequency, grid, backend, quad, workers)
    field_cache.store_field(key, ultra)
    return ultra.pressures


# ── Ring Green's function ────────────────────────────────────────────────────


def _ring_panels(vs: VirtualSource, x: float, dz2: np.ndarray, cap: int) -> tuple[np.ndarray, np.ndarray]:
    """Angular panels per ring (powers of two up to `cap`) and the rings the cap clipped."""
    d_min = np.sqrt(dz2 + (x - vs.rho) ** 2)
    d_max = np.sqrt(dz2 + (x + vs.rho) ** 2)
    by_phase = np.ceil(vs.audio_wavenumber.real * (d_max - d_min) / (4.0 * math.pi))
    by_peak = np.ceil(np.sqrt(d_max / np.maximum(d_min, 1e-300)))
    wanted = np.maximum(np.maximum(by_phase, by_peak), 1)
    # Round up to powers of two so rings share a handful of rules
    panels = np.minimum(2 ** np.ceil(np.log2(wanted)), cap).astype(int)
    return panels, wanted > cap


def _ring_sum(
    vs: VirtualSource, x: float, dz2: np.ndarray, panels: np.ndarray, idx: np.ndarray, order: int
) -> np.ndarray:
    k = vs.audio_wavenumber
    green = np.empty(idx.size, dtype=complex)
    for count in np.unique(panels[idx]):
        sel = np.nonzero(panels[idx] == count)[0]
        rings = idx[sel]
        u, w = composite_rule(0.0, 1.0, int(count), order)
        cos_phi = np.cos(math.pi * u * u)
        d = np.sqrt(
            dz2[rings, None] + x * x + vs.rho[rings, None] ** 2
            - 2.0 * x * vs.rho[rings, None] * cos_phi[None, :]
        )
        green[sel] = (np.exp(1j * k * d) / d) @ (w * u)
    return green


def ring_green(vs: VirtualSource, x: float, z: float, quad: QuadSpec) -> np.ndarray:
    """G_ring from every source ring of `vs` to the point (x, 0, z)."""
    k = vs.audio_wavenumber
    dz2 = (z - vs.z) ** 2
    if x == 0.0:
        d = np.sqrt(dz2 + vs.rho ** 2)
        return np.exp(1j * k * d) / (2.0 * d)
    panels, _ = _ring_panels(vs, x, dz2, quad.angular_max_panels)
    return _ring_sum(vs, x, dz2, panels, np.arange(vs.rho.size), quad.panel_order)


def angular_error(vs: VirtualSource, x: float, z: float, quad: QuadSpec, total: complex) -> float:
    """Relative change of the ring sum when the capped rings drop to half their panels.

    Zero when the panel cap does not bind.
    """
    if x == 0.0 or total == 0.0:
        return 0.0
    dz2 = (z - vs.z) ** 2
    panels, clipped = _ring_panels(vs, x, dz2, quad.angular_max_panels)
    idx = np.nonzero(clipped)[0]
    if idx.size == 0:
        return 0.0
    fine = _ring_sum(vs, x, dz2, panels, idx, quad.panel_order)
    halved = np.maximum(panels // 2, 1)
    coarse = _ring_sum(vs, x, dz2, halved, idx, quad.panel_order)
    return float(abs(np.dot(vs.strength[idx], fine - coarse)) / abs(total))


def transfer_at(vs: VirtualSource, point, quad: QuadSpec | None = None) -> complex:
    quad = quad or QuadSpec()
    x, z = abs(float(point[0])), float(point[-1])
    omega_a = 2.0 * math.pi * vs.audio_frequency
    total = np.dot(vs.strength, ring_green(vs, x, z, quad))
    error = angular_error(vs, x, z, quad, total)
    if error > quad.rel_tol:
        logger.warning(
            "angular quadrature capped at %d panels at (x=%.3g, z=%.3g) m, "
            "estimated relative error %.1e; raise angular_max_panels",
            quad.angular_max_panels, x, z, error,
        )
    return complex(-1j * vs.density_rho0 * omega_a * total)


def _transfer_task(points, vs: VirtualSource, quad: QuadSpec) -> list[complex]:
    return [transfer_at(vs, p, quad) for p in points]


def audio_transfer(
    source: PistonSource,
    medium: AirMedium,
    channel: CarrierChannel,
    observation_point,
    truncation: VolumeTruncation | None = None,
    quad: QuadSpec | None = None,
    backend: Backend = Backend.KING,
) -> complex:
    """H_n at one point with w1 = w2 = 1."""
    point = tuple(float(v) for v in observation_point)
    if point[-1] <= 0.0:
        raise ValueError(f"observation point must satisfy z > 0, got {point}")
    truncation = truncation or default_truncation(source, medium, channel)
    vs = build_virtual_source(source, medium, channel, truncation, quad, backend)
    return transfer_at(vs, point, quad)


# ── Transfer grids ───────────────────────────────────────────────────────────


@dataclass(frozen=True)
class AudioTransferGrid:
    points: np.ndarray  # (M, 2) of (x, z)
    carriers: tuple[float, ...]  # center frequencies, one column each
    audio_frequency: float
    values: np.ndarray  # complex (M, N)
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.values.shape != (self.points.shape[0], len(self.carriers)):
            raise ValueError(
                f"transfer values {self.values.shape} do not match "
                f"{self.points.shape[0]} points x {len(self.carriers)} carriers"
            )
        if not np.all(np.isfinite(self.values)):
            raise ValueError("transfer grid contains non-finite values")

    def index_of(self, points) -> np.ndarray:
        """Row index per point, -1 where the grid has no value."""
        lookup = {_point_key(p): i for i, p in enumerate(self.points)}
        return np.array([lookup.get(_point_key(p), -1) for p in np.asarray(points)], dtype=int)

    def prefix(self, n: int) -> AudioTransferGrid:
        """The first `n` carrier columns."""
        return AudioTransferGrid(
            points=self.points,
            carriers=self.carriers[:n],
            audio_frequency=self.audio_frequency,
            values=self.values[:, :n],
            metadata=self.metadata,
        )

    def column(self, center_frequency: float) -> int:
        for i, fc in enumerate(self.carriers):
            if math.isclose(fc, center_frequency, rel_tol=0.0, abs_tol=1e-6):
                return i
        raise KeyError(f"no transfer column for the {center_frequency:.0f} Hz carrier")


def _point_key(point) -> tuple[float, float]:
    return (round(float(point[0]), 9), round(float(point[-1]), 9))


def compute_transfer_grid(
    source: PistonSource,
    medium: AirMedium,
    carriers: CarrierSet,
    points,
    quad: QuadSpec | None = None,
    policy: TruncationPolicy | None = None,
    backend: Backend = Backend.KING,
    cache=None,
    workers: int = 1,
) -> AudioTransferGrid:
    """H_n for every carrier at every point; x and -x share one evaluation."""
    quad = quad or QuadSpec()
    policy = policy or TruncationPolicy()
    points = np.asarray(points, dtype=float).reshape(-1, 2)
    if np.any(points[:, 1] <= 0.0):
        raise ValueError("observation points must satisfy z > 0")

    folded = np.column_stack([np.abs(points[:, 0]), points[:, 1]])
    unique, inverse = np.unique(np.round(folded, 12), axis=0, return_inverse=True)
    inverse = np.asarray(inverse).ravel()

    columns, truncations, warnings = [], {}, []
    for channel in carriers.channels:
        key = transfer_key(source, medium, channel, unique, quad, policy, backend)
        cached = cache.load_transfer(key) if cache is not None else None
        if cached is not None:
            columns.append(cached.values[:, 0])
            truncations[f"{channel.center_frequency_fc:.0f}"] = cached.metadata.get("truncation")
            warnings.extend(cached.metadata.get("warnings", []))
            continue

        truncation = default_truncation(source, medium, channel, policy)
        vs = build_virtual_source(
            source, medium, channel, truncation, quad, backend, cache, workers, policy
        )
        task = partial(_transfer_task, vs=vs, quad=quad)
        chunks = parallel_map(task, chunked(list(unique), _POINTS_PER_TASK), workers)
        column = np.array([h for chunk in chunks for h in chunk], dtype=complex)
        logger.info(
            "audio transfer %.0f Hz carrier at %.0f Hz: %d points",
            channel.center_frequency_fc, channel.audio_frequency_fa, unique.shape[0],
        )

        meta = {
            "truncation": truncation.model_dump(),
            "warnings": list(vs.warnings),
        }
        if cache is not None:
            cache.store_transfer(key, AudioTransferGrid(
                points=unique,
                carriers=(channel.center_frequency_fc,),
                audio_frequency=channel.audio_frequency_fa,
                values=column[:, None],
                metadata=meta,
            ))
        columns.append(column)
        truncations[f"{channel.center_frequency_fc:.0f}"] = meta["truncation"]
        warnings.extend(vs.warnings)

    values = np.column_stack(columns)[inverse]
    return AudioTransferGrid(
        points=points,
        carriers=tuple(carriers.center_frequencies),
        audio_frequency=carriers.audio_frequency,
        values=values,
        metadata={
            "backend": Backend(backend).value,
            "quadrature": quad.model_dump(),
            "truncation": truncations,
            "warnings": warnings,
        },
    )


# ── Cache keys ───────────────────────────────────────────────────────────────


def _digest(payload: dict, arrays: tuple[np.ndarray, ...] = ()) -> str:
    h = hashlib.sha256(json.dumps(payload, sort_keys=True, default=str).encode())
    for arr in arrays:
        h.update(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    return h.hexdigest()


def field_key(source, medium, frequency, grid: CylGrid, backend, quad) -> str:
    return _digest(
        {
            "kind": "field",
            "source": source.model_dump(),
            "medium": medium.model_dump(),
            "frequency": frequency,
            "backend": Backend(backend).value,
            "rel_tol": quad.rel_tol,
            "max_doublings": quad.max_doublings,
        },
        (grid.radial_nodes, grid.axial_nodes),
    )


def transfer_key(source, medium, channel, points, quad, policy, backend) -> str:
    return _digest(
        {
            "kind": "transfer",
            "source": source.model_dump(),
            "medium": medium.model_dump(),
            "fc": channel.center_frequency_fc,
            "fa": channel.audio_frequency_fa,
            "quad": quad.model_dump(),
            "policy": policy.model_dump(),
            "backend": Backend(backend).value,
        },
        (points,),
    )
