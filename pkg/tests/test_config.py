"""Configuration tests: TOML loading, presets, overrides and hashing."""

from __future__ import annotations

from pathlib import Path

import pytest
from pydantic import ValidationError

from mcpl_zones.core.config import (
    ExperimentConfig,
    apply_preset,
    default_config_path,
    load_config,
    with_overrides,
)
from mcpl_zones.core.models import Backend, Preset


@pytest.fixture
def config():
    return load_config()


# ── Loading ──────────────────────────────────────────────────────────────────


class TestLoadConfig:
    def test_shipped_defaults(self, config):
        assert default_config_path().name == "default.toml"
        assert config.run.preset is Preset.DESK
        assert config.run.backend is Backend.KING
        assert config.run.carrier_frequencies == [40_000.0, 80_000.0, 120_000.0, 160_000.0]
        assert config.zones.bright.count == 100
        assert config.zones.dark.count == 1350
        assert (config.field_map.nx, config.field_map.nz) == (61, 121)
        assert config.medium.relative_humidity == 70.0
        assert config.piston.radius_a == 0.1

    def test_toml_equals_model_defaults(self, config):
        assert config.config_hash() == apply_preset(ExperimentConfig()).config_hash()

    def test_custom_file(self, tmp_path):
        path = tmp_path / "small.toml"
        path.write_text(
            '[run]\npreset = "paper"\naudio_frequencies = [1000.0]\n'
            "carrier_frequencies = [40000.0, 80000.0]\n"
            "\n[piston]\nradius_a = 0.05\n"
        )
        cfg = load_config(path)
        assert cfg.run.audio_frequencies == [1000.0]
        assert cfg.piston.radius_a == 0.05
        assert (cfg.field_map.nx, cfg.field_map.nz) == (121, 241)
        assert cfg.quadrature.axial_nodes == 400

    def test_explicit_resolution_survives_preset(self, tmp_path):
        path = tmp_path / "coarse.toml"
        path.write_text(
            '[run]\npreset = "desk"\n'
            "\n[quadrature]\naxial_nodes = 48\nradial_nodes = 24\n"
            "\n[field_map]\nx_range = [-1.0, 1.0]\nz_range = [0.05, 6.0]\nnx = 11\nnz = 21\n"
        )
        cfg = load_config(path)
        assert (cfg.quadrature.axial_nodes, cfg.quadrature.radial_nodes) == (48, 24)
        assert (cfg.field_map.nx, cfg.field_map.nz) == (11, 21)
        assert cfg.quadrature.rel_tol == 1e-6

    def test_partial_section_keeps_preset_for_unset_keys(self, tmp_path):
        path = tmp_path / "partial.toml"
        path.write_text('[run]\npreset = "paper"\n\n[quadrature]\naxial_nodes = 48\n')
        cfg = load_config(path)
        assert (cfg.quadrature.axial_nodes, cfg.quadrature.radial_nodes) == (48, 200)
        assert (cfg.field_map.nx, cfg.field_map.nz) == (121, 241)

    def test_explicit_preset_overrides_file(self, tmp_path):
        path = tmp_path / "coarse.toml"
        path.write_text("[quadrature]\naxial_nodes = 48\n")
        cfg = apply_preset(load_config(path), Preset.PAPER)
        assert cfg.quadrature.axial_nodes == 400

    def test_missing_file(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            load_config(tmp_path / "absent.toml")


# ── Validation ───────────────────────────────────────────────────────────────


class TestValidation:
    def test_carrier_spacing(self, config):
        with pytest.raises(ValidationError):
            with_overrides(config, run={"carrier_frequencies": [40_000.0, 50_000.0]})

    def test_sideband_below_ultrasound(self, config):
        with pytest.raises(ValidationError):
            with_overrides(config, run={"carrier_frequencies": [21_000.0]})

    def test_negative_regularization(self, config):
        with pytest.raises(ValidationError):
            with_overrides(config, run={"regularization": -1.0})

    def test_zone_behind_baffle(self, config):
        with pytest.raises(ValidationError):
            with_overrides(config, zones={"bright": {"x_range": (-0.2, 0.2), "z_range": (-1.0, 1.0), "nx": 2, "nz": 2}})

    def test_unknown_backend(self, config):
        with pytest.raises(ValidationError):
            with_overrides(config, run={"backend": "fdtd"})

    def test_needs_audio_frequency(self, config):
        with pytest.raises(ValidationError):
            with_overrides(config, run={"audio_frequencies": []})


# ── Presets and hashing ──────────────────────────────────────────────────────


class TestPresetsAndHash:
    def test_paper_preset(self, config):
        cfg = apply_preset(config, Preset.PAPER)
        assert cfg.run.preset is Preset.PAPER
        assert (cfg.field_map.nx, cfg.field_map.nz) == (121, 241)
        assert (cfg.quadrature.axial_nodes, cfg.quadrature.radial_nodes) == (400, 200)

    def test_hash_stable(self, config):
        assert config.config_hash() == load_config().config_hash()
        assert len(config.config_hash()) == 64

    def test_hash_ignores_output_settings(self, config):
        moved = with_overrides(config, run={"output_dir": Path("elsewhere"), "cache_dir": Path("c"), "workers": 8})
        assert moved.config_hash() == config.config_hash()

    def test_hash_tracks_physics(self, config):
        assert with_overrides(config, medium={"lossless_audio": True}).config_hash() != config.config_hash()
        assert apply_preset(config, Preset.PAPER).config_hash() != config.config_hash()

    def test_carrier_set(self, config):
        carriers = config.carrier_set(2_000.0)
        assert len(carriers) == 4
        assert carriers.channels[0].lower_frequency == 39_000.0
