"""Nonlinear tests: source density, truncation, ring Green's function, transfer grids."""

from __future__ import annotations

import math

import numpy as np
import pytest

from mcpl_zones.core.models import (
    AirMedium,
    CarrierChannel,
    CarrierSet,
    PistonSource,
    QuadSpec,
    TruncationPolicy,
    VolumeTruncation,
)
from mcpl_zones.core.rules.medium import complex_wavenumber
from mcpl_zones.core.rules.quadrature import composite_rule
from mcpl_zones.core.services.nonlinear import (
    VirtualSource,
    angular_error,
    audio_pressure,
    audio_transfer,
    compute_transfer_grid,
    default_truncation,
    ring_green,
    spl,
    transfer_at,
    virtual_source_density,
)
from mcpl_zones.core.services.ultrasound import CylGrid, sample_field

# Coarse settings for fast end-to-end checks
COARSE = QuadSpec(axial_nodes=40, radial_nodes=24, rel_tol=1e-5)

# High-resolution preset settings, and the agreement required of audio transfer values
FINE = QuadSpec(axial_nodes=400, radial_nodes=200)
TRANSFER_RTOL = 0.01


@pytest.fixture
def piston():
    return PistonSource()


@pytest.fixture
def channel():
    return CarrierChannel(center_frequency_fc=40_000.0, audio_frequency_fa=1_000.0)


def _synthetic_source(k: complex = 2 * math.pi * 1000 / 343 + 0j) -> VirtualSource:
    rng = np.random.default_rng(3)
    n = 12
    return VirtualSource(
        rho=rng.uniform(0.01, 0.4, n),
        z=rng.uniform(0.05, 2.0, n),
        strength=rng.normal(size=n) + 1j * rng.normal(size=n),
        audio_wavenumber=k,
        audio_frequency=1_000.0,
        density_rho0=1.21,
        truncation=VolumeTruncation(z_max=2.0, rho_max=0.4),
    )


# ── Source density and levels ────────────────────────────────────────────────


class TestSourceDensity:
    def test_hand_value(self):
        q = virtual_source_density(1.0, 1.0, AirMedium(), 1_000.0)
        expected = -1j * 2 * math.pi * 1000 * 1.2 / (1.21 ** 2 * 343.0 ** 4)
        assert q == pytest.approx(expected, rel=1e-12)

    def test_zero_lower_sideband(self):
        assert virtual_source_density(0.0, 3.0 + 2.0j, AirMedium(), 1_000.0) == 0

    def test_conjugate_bilinear(self):
        p1, p2 = 0.3 + 0.7j, -1.1 + 0.2j
        base = virtual_source_density(p1, p2, AirMedium(), 2_000.0)
        scaled = virtual_source_density(2.5 * p1, 2.5 * p2, AirMedium(), 2_000.0)
        assert scaled == pytest.approx(6.25 * base, rel=1e-14)
        rotated = virtual_source_density(p1 * 1j, p2, AirMedium(), 2_000.0)
        assert rotated == pytest.approx(-1j * base, rel=1e-14)


class TestSpl:
    def test_reference_levels(self):
        assert spl(20e-6) == pytest.approx(0.0, abs=1e-12)
        assert spl(2.0) == pytest.approx(100.0)
        assert spl(0.02) == pytest.approx(60.0)
        assert spl(0.02j) == pytest.approx(60.0)

    def test_silence_is_minus_infinity(self):
        assert spl(0.0) == -math.inf
        levels = spl(np.array([0.0, 2.0]))
        assert levels[0] == -math.inf and levels[1] == pytest.approx(100.0)


class TestAudioPressure:
    def test_single_carrier_equals_transfer(self):
        carriers = CarrierSet.from_frequencies([40_000.0], 1_000.0)
        assert audio_pressure(carriers, [1.0], [0.2 - 0.1j]) == 0.2 - 0.1j

    def test_zero_weights(self):
        carriers = CarrierSet.from_frequencies([40_000.0, 80_000.0], 1_000.0)
        assert audio_pressure(carriers, [0, 0], [1 + 1j, 2 - 1j]) == 0

    def test_linear_in_weights(self):
        carriers = CarrierSet.from_frequencies([40_000.0, 80_000.0, 120_000.0], 1_000.0)
        h = np.array([0.1 + 0.2j, -0.3j, 0.05])
        w1 = np.array([1.0, 0.5j, -0.2])
        w2 = np.array([0.3 - 0.1j, 1.0, 2.0j])
        lhs = audio_pressure(carriers, 2.0 * w1 + 3.0j * w2, h)
        rhs = 2.0 * audio_pressure(carriers, w1, h) + 3.0j * audio_pressure(carriers, w2, h)
        assert lhs == pytest.approx(rhs, rel=1e-14)
        assert audio_pressure(carriers, 2 * w1, h) == pytest.approx(2 * audio_pressure(carriers, w1, h))

    def test_length_mismatch(self):
        carriers = CarrierSet.from_frequencies([40_000.0, 80_000.0], 1_000.0)
        with pytest.raises(ValueError):
            audio_pressure(carriers, [1.0], [1.0, 2.0])


# ── Carriers ─────────────────────────────────────────────────────────────────


class TestCarriers:
    def test_sideband_frequencies(self, channel):
        assert channel.lower_frequency == 39_500.0
        assert channel.upper_frequency == 40_500.0
        assert channel.omega_upper - channel.omega_lower == pytest.approx(2 * math.pi * 1_000.0)

    def test_audio_weight(self):
        ch = CarrierChannel(
            center_frequency_fc=80_000.0, audio_frequency_fa=500.0,
            lower_sideband_w1=1j, upper_sideband_w2=2.0,
        )
        assert ch.audio_weight == -2j

    def test_sideband_must_be_ultrasonic(self):
        with pytest.raises(ValueError, match="not ultrasonic"):
            CarrierChannel(center_frequency_fc=20_000.0, audio_frequency_fa=1_000.0)

    def test_spacing_enforced(self):
        with pytest.raises(ValueError, match="closer than"):
            CarrierSet.from_frequencies([40_000.0, 55_000.0], 1_000.0)

    def test_prefix(self):
        carriers = CarrierSet.from_frequencies([40_000.0, 80_000.0, 120_000.0], 2_000.0)
        assert carriers.prefix(2).center_frequencies == [40_000.0, 80_000.0]
        assert carriers.reference_index(80_000.0) == 1
        assert carriers.reference_index(50_000.0) is None


# ── Truncation ───────────────────────────────────────────────────────────────


class TestTruncation:
    def test_bounds_within_policy(self, piston, channel):
        policy = TruncationPolicy()
        trunc = default_truncation(piston, AirMedium(), channel, policy)
        assert policy.z_floor <= trunc.z_max <= policy.z_cap
        assert trunc.rho_max > 3 * piston.radius_a

    def test_lossless_reaches_cap(self, piston, channel):
        trunc = default_truncation(piston, AirMedium(lossless=True), channel)
        assert trunc.z_max == TruncationPolicy().z_cap

    def test_higher_carrier_shorter_volume(self, piston):
        low = CarrierChannel(center_frequency_fc=40_000.0, audio_frequency_fa=1_000.0)
        high = CarrierChannel(center_frequency_fc=160_000.0, audio_frequency_fa=1_000.0)
        medium = AirMedium()
        assert default_truncation(piston, medium, high).z_max < default_truncation(piston, medium, low).z_max


# ── Ring Green's function ────────────────────────────────────────────────────


def _brute_ring(vs: VirtualSource, x: float, z: float) -> np.ndarray:
    phi, w = composite_rule(0.0, math.pi, 400, 16)
    d = np.sqrt(
        (z - vs.z[:, None]) ** 2 + x * x + vs.rho[:, None] ** 2
        - 2 * x * vs.rho[:, None] * np.cos(phi)[None, :]
    )
    return (np.exp(1j * vs.audio_wavenumber * d) / d) @ w / (2 * math.pi)


class TestRingGreen:
    def test_on_axis_closed_form(self):
        vs = _synthetic_source()
        g = ring_green(vs, 0.0, 3.0, QuadSpec())
        d = np.sqrt((3.0 - vs.z) ** 2 + vs.rho ** 2)
        assert np.allclose(g, np.exp(1j * vs.audio_wavenumber * d) / (2 * d), rtol=1e-14)

    def test_near_axis_limit(self):
        vs = _synthetic_source()
        quad = QuadSpec()
        assert np.allclose(ring_green(vs, 1e-9, 3.0, quad), ring_green(vs, 0.0, 3.0, quad), rtol=1e-8)

    @pytest.mark.parametrize("x, z", [(0.8, 3.0), (1.5, 0.5), (0.3, 4.0)])
    def test_off_axis_matches_dense_quadrature(self, x, z):
        vs = _synthetic_source(2 * math.pi * 4000 / 343 + 0.01j)
        g = ring_green(vs, x, z, QuadSpec())
        assert np.allclose(g, _brute_ring(vs, x, z), rtol=1e-4, atol=0.0)

    def test_uncapped_rings_report_no_error(self, caplog):
        vs = _synthetic_source(2 * math.pi * 4000 / 343 + 0.01j)
        quad = QuadSpec()
        total = np.dot(vs.strength, ring_green(vs, 0.8, 3.0, quad))
        assert angular_error(vs, 0.8, 3.0, quad, total) == 0.0
        transfer_at(vs, (0.8, 3.0), quad)
        assert "angular quadrature capped" not in caplog.text

    def test_panel_cap_warns(self, caplog):
        vs = _synthetic_source(2 * math.pi * 4000 / 343 + 0.01j)
        quad = QuadSpec(angular_max_panels=2)
        total = np.dot(vs.strength, ring_green(vs, 1.5, 0.5, quad))
        assert angular_error(vs, 1.5, 0.5, quad, total) > quad.rel_tol
        transfer_at(vs, (1.5, 0.5), quad)
        assert "angular quadrature capped at 2 panels" in caplog.text

    def test_transfer_is_mirror_symmetric(self):
        vs = _synthetic_source()
        assert transfer_at(vs, (-0.7, 1.2)) == transfer_at(vs, (0.7, 1.2))


# ── Transfer ─────────────────────────────────────────────────────────────────


class TestAudioTransfer:
    def test_rejects_points_behind_baffle(self, piston, channel):
        with pytest.raises(ValueError):
            audio_transfer(piston, AirMedium(), channel, (0.0, -1.0), quad=COARSE)

    def test_grid_folds_mirror_points(self, piston):
        carriers = CarrierSet.from_frequencies([40_000.0], 1_000.0)
        points = np.array([[0.3, 1.0], [-0.3, 1.0], [0.0, 2.0]])
        policy = TruncationPolicy(z_cap=4.0)
        grid = compute_transfer_grid(piston, AirMedium(), carriers, points, quad=COARSE, policy=policy)
        assert grid.values.shape == (3, 1)
        assert grid.values[0, 0] == grid.values[1, 0]
        assert np.all(np.abs(grid.values) > 0)
        assert grid.metadata["truncation"]["40000"]["z_max"] <= 4.0
        assert list(grid.index_of(np.array([[-0.3, 1.0], [0.5, 0.5]]))) == [1, -1]

    def test_single_point_matches_grid(self, piston, channel):
        policy = TruncationPolicy(z_cap=4.0)
        medium = AirMedium()
        trunc = default_truncation(piston, medium, channel, policy)
        single = audio_transfer(piston, medium, channel, (0.0, 1.0), trunc, COARSE)
        carriers = CarrierSet(channels=(channel,))
        grid = compute_transfer_grid(piston, medium, carriers, [[0.0, 1.0]], quad=COARSE, policy=policy)
        assert grid.values[0, 0] == pytest.approx(single, rel=1e-12)


@pytest.mark.slow
class TestTransferConvergence:
    POINTS = [(0.0, 1.0), (0.1, 0.5), (0.5, 3.0)]

    def _column(self, piston, channel, quad, policy=None):
        carriers = CarrierSet(channels=(channel,))
        return compute_transfer_grid(
            piston, AirMedium(), carriers, self.POINTS, quad=quad, policy=policy or TruncationPolicy()
        ).values[:, 0]

    def test_self_convergence(self, piston, channel):
        base = self._column(piston, channel, QuadSpec())
        fine = self._column(piston, channel, FINE)
        assert np.all(np.abs(fine - base) <= TRANSFER_RTOL * np.abs(fine))

    def test_truncation_adequacy(self, piston, channel):
        medium = AirMedium()
        trunc = default_truncation(piston, medium, channel)
        longer = VolumeTruncation(z_max=1.5 * trunc.z_max, rho_max=trunc.rho_max)
        quad = QuadSpec(axial_nodes=300)
        for point in self.POINTS:
            h = audio_transfer(piston, medium, channel, point, trunc, quad)
            h_long = audio_transfer(piston, medium, channel, point, longer, quad)
            assert abs(h_long - h) <= 0.01 * abs(h_long)

    def test_higher_carrier_weaker_at_four_metres(self, piston):
        medium = AirMedium()
        h = {}
        for fc in (40_000.0, 120_000.0):
            ch = CarrierChannel(center_frequency_fc=fc, audio_frequency_fa=1_000.0)
            h[fc] = abs(audio_transfer(piston, medium, ch, (0.0, 4.0)))
        assert h[120_000.0] < h[40_000.0]


def _cartesian_source(piston, medium, channel, nxy=200, near_z=0.75, near_cells=300, far_dz=0.02) -> dict:
    """Midpoint cells of the audio source term on a Cartesian box.

    q is evaluated at every cell centre's own radius, with no interpolation.
    Cells are uniform in x and y, fine in z up to `near_z` and coarser beyond.
    """
    trunc = default_truncation(piston, medium, channel)
    near_z = min(near_z, 0.5 * trunc.z_max)
    near_step = near_z / near_cells
    far_cells = max(1, math.ceil((trunc.z_max - near_z) / far_dz))
    far_step = (trunc.z_max - near_z) / far_cells
    z_nodes = np.concatenate([
        (np.arange(near_cells) + 0.5) * near_step,
        near_z + (np.arange(far_cells) + 0.5) * far_step,
    ])
    dz = np.concatenate([np.full(near_cells, near_step), np.full(far_cells, far_step)])

    # Half-integer offsets keep mirrored cells on identical radii
    dx = 2.0 * trunc.rho_max / nxy
    offsets = (np.arange(nxy) + 0.5 - nxy / 2) * dx
    X, Y = np.meshgrid(offsets, offsets)
    R = np.hypot(X, Y)
    radii, counts = np.unique(R[R <= trunc.rho_max], return_counts=True)

    q = np.empty((z_nodes.size, radii.size), dtype=complex)
    for start in range(0, radii.size, 512):
        grid = CylGrid(radial_nodes=radii[start:start + 512], axial_nodes=z_nodes)
        lower = sample_field(piston, medium, channel.lower_frequency, grid).pressures
        upper = sample_field(piston, medium, channel.upper_frequency, grid).pressures
        q[:, start:start + 512] = virtual_source_density(lower, upper, medium, channel.audio_frequency_fa)

    return {
        "z": z_nodes,
        "volume": np.outer(dz, counts * dx * dx),
        "radii": radii,
        "q": q,
        "k": complex_wavenumber(medium, channel.audio_frequency_fa, audio=True).value,
        "omega": 2 * math.pi * channel.audio_frequency_fa,
        "rho0": medium.density_rho0,
    }


def _cartesian_transfer(cells: dict, z_obs: float) -> complex:
    d = np.sqrt(cells["radii"][None, :] ** 2 + (z_obs - cells["z"][:, None]) ** 2)
    total = np.sum(cells["volume"] * cells["q"] * np.exp(1j * cells["k"] * d) / (4 * math.pi * d))
    return complex(-1j * cells["rho0"] * cells["omega"] * total)


@pytest.fixture(scope="module")
def cartesian_cells():
    channel = CarrierChannel(center_frequency_fc=40_000.0, audio_frequency_fa=1_000.0)
    return _cartesian_source(PistonSource(), AirMedium(), channel)


@pytest.mark.slow
class TestCartesianOracle:
    @pytest.mark.parametrize("z", [1.0, 2.0, 4.0])
    def test_on_axis_transfer(self, piston, channel, cartesian_cells, z):
        model = audio_transfer(piston, AirMedium(), channel, (0.0, z), quad=FINE)
        oracle = _cartesian_transfer(cartesian_cells, z)
        assert abs(model - oracle) <= TRANSFER_RTOL * abs(oracle)
