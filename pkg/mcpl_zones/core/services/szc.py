"""Sound zone control: transfer matrices, acoustic contrast control and
localization metrics.

ACC weights maximize (w^H A w) / (w^H B w) with A = H_b^H H_b and
B = H_d^H H_d; the optimum is the top eigenvector of the pair (A, B + delta I).
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from mcpl_zones.core.models import ZoneSpec
from mcpl_zones.core.services.nonlinear import AudioTransferGrid, spl

logger = logging.getLogger(__name__)

# Carrier whose weight is pinned to 1 + 0i
REFERENCE_CARRIER_HZ = 40_000.0

# Relative gap below which top eigenvalues count as tied
_DEGENERATE_RTOL = 1e-10


class MissingTransferError(KeyError):
    """Raised when a transfer grid lacks values for requested control points."""

    def __init__(self, points):
        self.points = [tuple(float(v) for v in p) for p in points]
        shown = ", ".join(f"({x:.4g}, {z:.4g})" for x, z in self.points[:5])
        more = f" and {len(self.points) - 5} more" if len(self.points) > 5 else ""
        super().__init__(f"no transfer values at {shown}{more}")


class SingularDarkZoneError(ValueError):
    pass


# ── Transfer matrices ────────────────────────────────────────────────────────


@dataclass(frozen=True)
class TransferMatrix:
    values: np.ndarray  # complex (M, N)
    carriers: tuple[float, ...]
    points: np.ndarray | None = None

    def __post_init__(self):
        values = np.atleast_2d(np.asarray(self.values, dtype=complex))
        if values.shape[1] != len(self.carriers):
            raise ValueError(
                f"transfer matrix has {values.shape[1]} columns for {len(self.carriers)} carriers"
            )
        if not np.all(np.isfinite(values)):
            raise ValueError("transfer matrix contains non-finite entries")
        object.__setattr__(self, "values", values)

    @property
    def rows(self) -> int:
        return self.values.shape[0]

    @property
    def cols(self) -> int:
        return self.values.shape[1]

    def prefix(self, n: int) -> TransferMatrix:
        return TransferMatrix(values=self.values[:, :n], carriers=self.carriers[:n], points=self.points)

    def correlation(self) -> np.ndarray:
        return self.values.conj().T @ self.values


def _rows_for(grid: AudioTransferGrid, points: np.ndarray) -> np.ndarray:
    index = grid.index_of(points)
    missing = points[index < 0]
    if missing.size:
        raise MissingTransferError(missing)
    return grid.values[index]


def build_transfer_matrix(zone: ZoneSpec, grid: AudioTransferGrid) -> TransferMatrix:
    points = zone.points()
    matrix = TransferMatrix(values=_rows_for(grid, points), carriers=grid.carriers, points=points)
    if matrix.rows < matrix.cols:
        logger.warning(
            "zone has %d control points for %d carriers; the ACC problem is underdetermined",
            matrix.rows, matrix.cols,
        )
    return matrix


# ── ACC solve ────────────────────────────────────────────────────────────────


@dataclass(frozen=True)
class AccSolution:
    weights: np.ndarray  # complex (N,)
    contrast: float  # unregularized Rayleigh quotient
    contrast_db: float
    eigenvalue: float
    residual: float  # ||A w - lambda (B + delta I) w|| / (||w|| ||A||)
    regularization: float
    carriers: tuple[float, ...] = ()

    def to_dict(self) -> dict:
        return {
            "carriers_hz": list(self.carriers),
            "weights": [[float(w.real), float(w.imag)] for w in self.weights],
            "contrast": _finite_or_str(self.contrast),
            "contrast_db": _finite_or_str(self.contrast_db),
            "eigenvalue": float(self.eigenvalue),
            "residual": float(self.residual),
            "regularization": float(self.regularization),
        }


def _finite_or_str(value: float):
    return float(value) if math.isfinite(value) else str(value)


def rayleigh_quotient(A: np.ndarray, B: np.ndarray, w: np.ndarray) -> float:
    num = float(np.real(np.vdot(w, A @ w)))
    den = float(np.real(np.vdot(w, B @ w)))
    if den == 0.0:
        return math.inf if num > 0.0 else math.nan
    return num / den


def default_regularization(dark: TransferMatrix) -> float:
    B = dark.correlation()
    return 1e-8 * float(np.real(np.trace(B))) / dark.rows


def acc_solve(
    bright: TransferMatrix,
    dark: TransferMatrix,
    regularization: float | None = None,
    reference_hz: float = REFERENCE_CARRIER_HZ,
) -> AccSolution:
    """Top generalized eigenvector of (H_b^H H_b, H_d^H H_d + delta I).

    `regularization=None` uses delta = 1e-8 trace(B) / M_d. Weights are scaled
    so the reference carrier's entry is 1 + 0i, or the largest entry when the
    reference carrier is absent.
    """
    if bright.cols == 0:
        raise ValueError("ACC needs at least one carrier")
    if bright.cols != dark.cols:
        raise ValueError(f"bright zone has {bright.cols} carriers, dark zone {dark.cols}")
    if regularization is None:
        regularization = default_regularization(dark)
    if regularization < 0.0:
        raise ValueError("regularization must be >= 0")

    A = bright.correlation()
    B = dark.correlation()
    n = A.shape[0]
    B_reg = B + regularization * np.eye(n)
    try:
        eigenvalues, vectors = scipy.linalg.eigh(A, B_reg)
    except np.linalg.LinAlgError as exc:
        raise SingularDarkZoneError(
            "dark-zone correlation matrix is singular; pass a positive regularization"
        ) from exc

    ref = _reference_index(bright.carriers, reference_hz)
    top = eigenvalues[-1]
    tied = np.nonzero(eigenvalues >= top - _DEGENERATE_RTOL * abs(top))[0]
    pivot = ref if ref is not None else 0
    if tied.size > 1:
        # Within the tied subspace, the vector with the largest reference component
        V = vectors[:, tied]
        w = V @ np.conj(V[pivot, :])
        if np.linalg.norm(w) == 0.0:
            w = vectors[:, -1]
    else:
        w = vectors[:, -1]

    anchor = ref if ref is not None and abs(w[ref]) > 0.0 else int(np.argmax(np.abs(w)))
    w = w / w[anchor]

    contrast = rayleigh_quotient(A, B, w)
    a_norm = np.linalg.norm(A, 2)
    residual = np.linalg.norm(A @ w - top * (B_reg @ w)) / (np.linalg.norm(w) * a_norm) if a_norm else 0.0
    contrast_db = 10.0 * math.log10(contrast) if contrast > 0.0 else -math.inf
    return AccSolution(
        weights=w,
        contrast=contrast,
        contrast_db=contrast_db,
        eigenvalue=float(top),
        residual=float(residual),
        regularization=float(regularization),
        carriers=tuple(bright.carriers),
    )


def _reference_index(carriers, reference_hz: float) -> int | None:
    for i, fc in enumerate(carriers):
        if math.isclose(fc, reference_hz, rel_tol=0.0, abs_tol=1e-6):
            return i
    return None


def nested_contrast_sweep(
    bright: TransferMatrix,
    dark: TransferMatrix,
    regularization: float | None = None,
    reference_hz: float = REFERENCE_CARRIER_HZ,
) -> list[AccSolution]:
    """ACC on the carrier prefixes 1..N."""
    return [
        acc_solve(bright.prefix(n), dark.prefix(n), regularization, reference_hz)
        for n in range(1, bright.cols + 1)
    ]


def acoustic_contrast(bright: TransferMatrix, dark: TransferMatrix, weights) -> float:
    """Mean-square bright over mean-square dark pressure, in dB."""
    weights = np.asarray(weights, dtype=complex)
    if weights.shape != (bright.cols,) or dark.cols != bright.cols:
        raise ValueError("weights and transfer matrices disagree on the carrier count")
    bright_energy = float(np.mean(np.abs(bright.values @ weights) ** 2))
    dark_energy = float(np.mean(np.abs(dark.values @ weights) ** 2))
    if dark_energy == 0.0:
        return math.inf
    if bright_energy == 0.0:
        return -math.inf
    return 10.0 * math.log10(bright_energy / dark_energy)


# ── Localization metrics ─────────────────────────────────────────────────────


@dataclass(frozen=True)
class EffectiveDistance:
    distance: float
    unbounded: bool = False


def effective_propagation_distance(profile, drop_db: float = 10.0) -> EffectiveDistance:
    """Farthest z where the level stays within `drop_db` of the on-axis maximum.

    `profile` is a sequence of (z, spl_db) with z strictly increasing.
    """
    data = np.asarray(profile, dtype=float)
    if data.size == 0:
        raise ValueError("axial profile is empty")
    data = data.reshape(-1, 2)
    z, level = data[:, 0], data[:, 1]
    if np.any(np.diff(z) <= 0.0):
        raise ValueError("axial profile z must be strictly increasing")

    threshold = np.max(level) - drop_db
    last = int(np.nonzero(level >= threshold)[0][-1])
    if last == z.size - 1:
        return EffectiveDistance(distance=float(z[-1]), unbounded=True)

    l0, l1 = level[last], level[last + 1]
    if not np.isfinite(l1) or l0 == l1:
        return EffectiveDistance(distance=float(z[last]))
    frac = (threshold - l0) / (l1 - l0)
    return EffectiveDistance(distance=float(z[last] + frac * (z[last + 1] - z[last])))


@dataclass(frozen=True)
class AxialProfile:
    z: np.ndarray
    pressure: np.ndarray  # complex
    level_db: np.ndarray

    def effective_distance(self, drop_db: float = 10.0) -> EffectiveDistance:
        return effective_propagation_distance(np.column_stack([self.z, self.level_db]), drop_db)


def axial_profile(grid: AudioTransferGrid, weights, z_nodes) -> AxialProfile:
    z = np.asarray(z_nodes, dtype=float)
    points = np.column_stack([np.zeros_like(z), z])
    pressure = _rows_for(grid, points) @ np.asarray(weights, dtype=complex)
    return AxialProfile(z=z, pressure=pressure, level_db=np.atleast_1d(spl(pressure)))


@dataclass(frozen=True)
class FieldMap:
    x_nodes: np.ndarray
    z_nodes: np.ndarray
    level_db: np.ndarray  # (nz, nx), -inf where silent
    metadata: dict = field(default_factory=dict)

    @property
    def relative_db(self) -> np.ndarray:
        peak = np.max(self.level_db)
        if not np.isfinite(peak):
            return np.full_like(self.level_db, -np.inf)
        return self.level_db - peak

    def contour_extent(self, drop_db: float = 10.0) -> float:
        """Farthest z with any node within `drop_db` of the map maximum; nan for a silent map."""
        rows = np.nonzero(np.any(self.relative_db >= -drop_db, axis=1))[0]
        if rows.size == 0:
            return math.nan
        return float(self.z_nodes[rows[-1]])


def field_map(grid: AudioTransferGrid, weights, zone: ZoneSpec) -> FieldMap:
    weights = np.asarray(weights, dtype=complex)
    pressure = _rows_for(grid, zone.points()) @ weights
    level = np.atleast_1d(spl(pressure)).reshape(zone.nz, zone.nx)
    return FieldMap(
        x_nodes=zone.x_nodes(),
        z_nodes=zone.z_nodes(),
        level_db=level,
        metadata={
            "audio_frequency": grid.audio_frequency,
            "carriers_hz": list(grid.carriers),
            "weights": [[float(w.real), float(w.imag)] for w in weights],
        },
    )
