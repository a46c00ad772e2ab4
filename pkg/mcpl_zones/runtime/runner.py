"""Experiment runner: transfer grids, ACC solves and result files per variant.

One variant is an (audio frequency, carrier count) pair; carrier counts run
over prefixes of the configured carrier list. Outputs carry no timestamps, so
equal config plus equal cache gives byte-identical files.
"""

from __future__ import annotations

import logging
from pathlib import Path

import numpy as np

from mcpl_zones.core.config import ExperimentConfig
from mcpl_zones.core.services.nonlinear import AudioTransferGrid, compute_transfer_grid
from mcpl_zones.core.services.reports import ExperimentSummary, VariantRecord
from mcpl_zones.core.services.szc import (
    AccSolution,
    TransferMatrix,
    acc_solve,
    acoustic_contrast,
    axial_profile,
    build_transfer_matrix,
    field_map,
)
from mcpl_zones.storage.cache import GridCache
from mcpl_zones.storage.export import write_axial_csv, write_json, write_map_csv

logger = logging.getLogger(__name__)


class ExperimentRunner:
    def __init__(
        self,
        config: ExperimentConfig,
        cache: GridCache | None = None,
        output_dir: Path | None = None,
    ):
        self.config = config
        self.cache = cache if cache is not None else GridCache(config.run.cache_dir)
        self.output_dir = Path(output_dir or config.run.output_dir)
        self.config_hash = config.config_hash()

    # ── Transfer grids ──

    def observation_points(self, include_map: bool = True) -> np.ndarray:
        cfg = self.config
        blocks = [cfg.zones.bright.points(), cfg.zones.dark.points(), cfg.axial.points()]
        if include_map:
            blocks.append(cfg.field_map.points())
        return np.concatenate(blocks)

    def transfer_grid(self, audio_frequency: float, include_map: bool = True) -> AudioTransferGrid:
        cfg = self.config
        return compute_transfer_grid(
            cfg.piston,
            cfg.medium,
            cfg.carrier_set(audio_frequency),
            self.observation_points(include_map),
            quad=cfg.quadrature,
            policy=cfg.truncation,
            backend=cfg.run.backend,
            cache=self.cache,
            workers=cfg.run.workers,
        )

    def matrices(self, grid: AudioTransferGrid) -> tuple[TransferMatrix, TransferMatrix]:
        return (
            build_transfer_matrix(self.config.zones.bright, grid),
            build_transfer_matrix(self.config.zones.dark, grid),
        )

    def solve(self, grid: AudioTransferGrid) -> AccSolution:
        bright, dark = self.matrices(grid)
        return acc_solve(bright, dark, self.config.run.regularization, self.config.run.reference_carrier_hz)

    # ── Variants ──

    def run_variant(self, grid: AudioTransferGrid, carrier_count: int) -> VariantRecord:
        cfg = self.config
        sub = grid.prefix(carrier_count)
        bright, dark = self.matrices(sub)
        solution = acc_solve(bright, dark, cfg.run.regularization, cfg.run.reference_carrier_hz)

        profile = axial_profile(sub, solution.weights, cfg.axial.z_nodes())
        distance = profile.effective_distance()
        fmap = field_map(sub, solution.weights, cfg.field_map)

        record = VariantRecord(
            audio_frequency=grid.audio_frequency,
            carrier_count=carrier_count,
            carriers_hz=list(sub.carriers),
            weights=[[float(w.real), float(w.imag)] for w in solution.weights],
            contrast=solution.contrast,
            contrast_db=solution.contrast_db,
            mean_contrast_db=acoustic_contrast(bright, dark, solution.weights),
            eigen_residual=solution.residual,
            effective_distance_m=distance.distance,
            effective_distance_unbounded=distance.unbounded,
            map_extent_m=fmap.contour_extent(),
        )

        folder = self.output_dir / record.label
        write_axial_csv(profile, folder / "axial.csv")
        write_map_csv(fmap, folder / "map.csv")
        write_json(
            {
                "config_hash": self.config_hash,
                "audio_frequency": record.audio_frequency,
                "solution": solution.to_dict(),
                "mean_contrast_db": record.to_dict()["mean_contrast_db"],
                "effective_distance_m": record.effective_distance_m,
                "effective_distance_unbounded": record.effective_distance_unbounded,
                "map_extent_m": record.map_extent_m,
                "transfer_metadata": sub.metadata,
            },
            folder / "solution.json",
        )
        record.files = {
            "axial": f"{record.label}/axial.csv",
            "map": f"{record.label}/map.csv",
            "solution": f"{record.label}/solution.json",
        }
        logger.info(
            "f_a=%.0f Hz N=%d: contrast %.2f dB, effective distance %.2f m%s",
            record.audio_frequency, carrier_count, solution.contrast_db,
            distance.distance, " (unbounded)" if distance.unbounded else "",
        )
        return record

    def run(self) -> ExperimentSummary:
        cfg = self.config
        summary = ExperimentSummary(
            config_hash=self.config_hash,
            preset=cfg.run.preset.value,
            backend=cfg.run.backend.value,
        )
        for fa in cfg.run.audio_frequencies:
            grid = self.transfer_grid(fa)
            summary.warnings.extend(w for w in grid.metadata.get("warnings", []) if w not in summary.warnings)
            for n in range(1, len(cfg.run.carrier_frequencies) + 1):
                summary.variants.append(self.run_variant(grid, n))

        write_json(
            {"config_hash": self.config_hash, "config": cfg.model_dump(mode="json")},
            self.output_dir / "config.json",
        )
        write_json(summary.to_dict(), self.output_dir / "summary.json")
        logger.info(
            "experiment %s: %d variants, cache hits %d, misses %d",
            self.config_hash[:12], len(summary.variants), self.cache.hits, self.cache.misses,
        )
        return summary


def run_experiment(config: ExperimentConfig, output_dir: Path | None = None) -> ExperimentSummary:
    return ExperimentRunner(config, output_dir=output_dir).run()
