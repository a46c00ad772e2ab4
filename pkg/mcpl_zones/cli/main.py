"""Command line interface for the multi-carrier zone simulator."""

from __future__ import annotations

import logging
from contextlib import contextmanager
from pathlib import Path

import numpy as np
import typer
from pydantic import ValidationError
from rich.console import Console
from rich.logging import RichHandler
from rich.panel import Panel
from rich.table import Table

from mcpl_zones.core.config import ExperimentConfig, apply_preset, load_config, with_overrides
from mcpl_zones.core.models import Backend, FactorMode, Preset
from mcpl_zones.core.rules.quadrature import QuadratureError
from mcpl_zones.core.services.signal import spectrum, synthesize
from mcpl_zones.core.services.szc import axial_profile, field_map
from mcpl_zones.runtime.runner import ExperimentRunner
from mcpl_zones.storage.cache import CacheError, GridCache
from mcpl_zones.storage.export import export_csv, export_wav, write_axial_csv, write_json, write_map_csv

app = typer.Typer(
    name="mcpl",
    help="Multi-carrier parametric loudspeaker sound zone simulator",
    no_args_is_help=True,
)
cache_app = typer.Typer(help="Manage the grid cache.", no_args_is_help=True)
app.add_typer(cache_app, name="cache")
console = Console()


@app.callback()
def main(verbose: bool = typer.Option(False, "--verbose", "-v", help="Debug logging")):
    """Simulate single-emitter multi-carrier sound zones."""
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format="%(message)s",
        handlers=[RichHandler(console=console, show_path=False)],
        force=True,
    )


@contextmanager
def _errors():
    """Turn domain failures into a one-line message and an exit code."""
    try:
        yield
    except ValidationError as exc:
        console.print("[red]Invalid configuration:[/red]")
        for err in exc.errors():
            loc = ".".join(str(part) for part in err["loc"]) or "<root>"
            console.print(f"  {loc}: {err['msg']}")
        raise typer.Exit(2)
    except (ValueError, KeyError, CacheError, QuadratureError, FileNotFoundError) as exc:
        console.print(f"[red]Error:[/red] {exc}")
        raise typer.Exit(1)


def _load(
    config_path: Path | None,
    preset: Preset | None,
    backend: Backend | None,
    lossless_audio: bool,
    out: Path | None,
    threads: int | None,
    cache_dir: Path | None,
) -> ExperimentConfig:
    config = load_config(config_path)
    if preset is not None:
        config = apply_preset(config, preset)
    run: dict = {}
    if backend is not None:
        run["backend"] = backend
    if out is not None:
        run["output_dir"] = out
    if threads is not None:
        run["workers"] = threads
    if cache_dir is not None:
        run["cache_dir"] = cache_dir
    sections: dict = {"run": run}
    if lossless_audio:
        sections["medium"] = {"lossless_audio": True}
    return with_overrides(config, **sections)


def _range(text: str) -> tuple[float, float]:
    lo, hi = (float(part) for part in text.split(","))
    return lo, hi


# Shared options
ConfigArg = typer.Argument(None, help="TOML config (defaults to the shipped setup)")
PresetOpt = typer.Option(None, "--preset", help="Resolution preset: desk or paper")
BackendOpt = typer.Option(None, "--backend", help="Ultrasound backend: rayleigh or king")
LosslessOpt = typer.Option(False, "--lossless-audio", help="Drop absorption at audio frequencies")
OutOpt = typer.Option(None, "--out", help="Output directory")
ThreadsOpt = typer.Option(None, "--threads", help="Worker processes")
CacheOpt = typer.Option(None, "--cache-dir", help="Grid cache directory")
AudioOpt = typer.Option(1000.0, "--fa", help="Audio frequency in Hz")
CountOpt = typer.Option(None, "--carriers", "-n", help="Use the first N carriers (default all)")


@app.command()
def run(
    config_path: Path = ConfigArg,
    preset: Preset = PresetOpt,
    backend: Backend = BackendOpt,
    lossless_audio: bool = LosslessOpt,
    out: Path = OutOpt,
    threads: int = ThreadsOpt,
    cache_dir: Path = CacheOpt,
):
    """Run every audio frequency and carrier-count variant."""
    with _errors():
        config = _load(config_path, preset, backend, lossless_audio, out, threads, cache_dir)
        summary = ExperimentRunner(config).run()

    table = Table(title=f"Experiment {summary.config_hash[:12]}")
    table.add_column("f_a (Hz)", justify="right")
    table.add_column("N", justify="right")
    table.add_column("Contrast (dB)", justify="right")
    table.add_column("Eff. distance (m)", justify="right")
    table.add_column("-10 dB extent (m)", justify="right")
    for r in summary.variants:
        distance = f"{r.effective_distance_m:.2f}" + ("+" if r.effective_distance_unbounded else "")
        table.add_row(
            f"{r.audio_frequency:.0f}", str(r.carrier_count), f"{r.contrast_db:.2f}",
            distance, f"{r.map_extent_m:.2f}",
        )
    console.print(table)
    for warning in summary.warnings:
        console.print(f"[yellow]Warning:[/yellow] {warning}")
    console.print(f"[green]Results written to:[/green] {config.run.output_dir}")


def _variant(config: ExperimentConfig, audio_frequency: float, carriers: int | None, include_map: bool):
    runner = ExperimentRunner(config)
    grid = runner.transfer_grid(audio_frequency, include_map=include_map)
    grid = grid.prefix(carriers or len(grid.carriers))
    return grid, runner.solve(grid)


@app.command()
def axial(
    config_path: Path = ConfigArg,
    audio_frequency: float = AudioOpt,
    carriers: int = CountOpt,
    preset: Preset = PresetOpt,
    backend: Backend = BackendOpt,
    lossless_audio: bool = LosslessOpt,
    out: Path = OutOpt,
    threads: int = ThreadsOpt,
    cache_dir: Path = CacheOpt,
):
    """On-axis audio profile and effective propagation distance."""
    with _errors():
        config = _load(config_path, preset, backend, lossless_audio, out, threads, cache_dir)
        grid, solution = _variant(config, audio_frequency, carriers, include_map=False)
        profile = axial_profile(grid, solution.weights, config.axial.z_nodes())
        distance = profile.effective_distance()
        path = write_axial_csv(
            profile, config.run.output_dir / f"axial_fa{audio_frequency:.0f}_n{len(grid.carriers)}.csv"
        )

    suffix = " (profile never drops 10 dB)" if distance.unbounded else ""
    console.print(Panel(
        f"[bold]Carriers:[/bold]     {', '.join(f'{fc / 1000:.0f} kHz' for fc in grid.carriers)}\n"
        f"[bold]Peak SPL:[/bold]     {np.max(profile.level_db):.1f} dB\n"
        f"[bold]Eff. distance:[/bold] {distance.distance:.2f} m{suffix}\n"
        f"[bold]CSV:[/bold]          {path}",
        title=f"Axial profile at {audio_frequency:.0f} Hz",
    ))


@app.command(name="map")
def map_(
    config_path: Path = ConfigArg,
    audio_frequency: float = AudioOpt,
    carriers: int = CountOpt,
    preset: Preset = PresetOpt,
    backend: Backend = BackendOpt,
    lossless_audio: bool = LosslessOpt,
    out: Path = OutOpt,
    threads: int = ThreadsOpt,
    cache_dir: Path = CacheOpt,
):
    """Audio SPL over the Oxz plane."""
    with _errors():
        config = _load(config_path, preset, backend, lossless_audio, out, threads, cache_dir)
        grid, solution = _variant(config, audio_frequency, carriers, include_map=True)
        fmap = field_map(grid, solution.weights, config.field_map)
        path = write_map_csv(
            fmap, config.run.output_dir / f"map_fa{audio_frequency:.0f}_n{len(grid.carriers)}.csv"
        )
    console.print(f"[green]Map written to:[/green] {path}")
    console.print(f"Normalized -10 dB contour reaches z = {fmap.contour_extent():.2f} m")


@app.command(name="solve-weights")
def solve_weights(
    config_path: Path = ConfigArg,
    audio_frequency: float = AudioOpt,
    carriers: int = CountOpt,
    bright_x: str = typer.Option(None, "--bright-x", help="Bright zone x range 'min,max'"),
    bright_z: str = typer.Option(None, "--bright-z", help="Bright zone z range 'min,max'"),
    preset: Preset = PresetOpt,
    backend: Backend = BackendOpt,
    lossless_audio: bool = LosslessOpt,
    out: Path = OutOpt,
    threads: int = ThreadsOpt,
    cache_dir: Path = CacheOpt,
):
    """ACC carrier weights for the configured (or overridden) zones."""
    with _errors():
        config = _load(config_path, preset, backend, lossless_audio, out, threads, cache_dir)
        if bright_x or bright_z:
            bright = config.zones.bright.model_dump()
            if bright_x:
                bright["x_range"] = _range(bright_x)
            if bright_z:
                bright["z_range"] = _range(bright_z)
            config = with_overrides(config, zones={"bright": bright})
        grid, solution = _variant(config, audio_frequency, carriers, include_map=False)
        path = write_json(
            {"config_hash": config.config_hash(), "audio_frequency": audio_frequency, **solution.to_dict()},
            config.run.output_dir / f"weights_fa{audio_frequency:.0f}_n{len(grid.carriers)}.json",
        )

    table = Table(title=f"ACC weights at {audio_frequency:.0f} Hz")
    table.add_column("Carrier (kHz)", justify="right")
    table.add_column("Re", justify="right")
    table.add_column("Im", justify="right")
    table.add_column("|w|", justify="right")
    for fc, w in zip(solution.carriers, solution.weights):
        table.add_row(f"{fc / 1000:.0f}", f"{w.real:+.4f}", f"{w.imag:+.4f}", f"{abs(w):.4f}")
    console.print(table)
    console.print(f"Contrast: {solution.contrast_db:.2f} dB  (residual {solution.residual:.1e})")
    console.print(f"[green]Weights written to:[/green] {path}")


def _parse_weights(text: str) -> list[complex]:
    return [complex(part.strip().replace(" ", "")) for part in text.split(",")]


@app.command()
def synth(
    config_path: Path = ConfigArg,
    audio_frequency: float = AudioOpt,
    carriers: int = CountOpt,
    weights: str = typer.Option(None, "--weights", help="Comma-separated complex weights, e.g. '1,0.4-0.2j'"),
    solve: bool = typer.Option(False, "--solve", help="Use ACC weights (computes transfer grids)"),
    balanced: bool = typer.Option(False, "--balanced", help="Split weights evenly between sidebands"),
    out: Path = OutOpt,
    cache_dir: Path = CacheOpt,
    threads: int = ThreadsOpt,
):
    """Export the composite drive signal as float WAV and CSV."""
    with _errors():
        config = _load(config_path, None, None, False, out, threads, cache_dir)
        carrier_set = config.carrier_set(audio_frequency)
        carrier_set = carrier_set.prefix(carriers or len(carrier_set))
        if solve:
            _, solution = _variant(config, audio_frequency, len(carrier_set), include_map=False)
            w = solution.weights
        elif weights:
            w = _parse_weights(weights)
        else:
            w = [1.0] * len(carrier_set)
        mode = FactorMode.BALANCED if balanced else config.signal.factorization
        drive = synthesize(carrier_set, w, config.signal.sample_rate, config.signal.duration, mode)
        stem = config.run.output_dir / f"drive_fa{audio_frequency:.0f}_n{len(carrier_set)}"
        wav = export_wav(drive, stem.with_suffix(".wav"))
        export_csv(drive, stem.with_suffix(".csv"))

    freqs, level = spectrum(drive)
    audible = level[freqs < 20_000.0]
    leakage = float(np.max(audible)) if audible.size else float("-inf")
    console.print(Panel(
        f"[bold]Samples:[/bold]  {drive.samples.size} at {drive.sample_rate:.0f} Hz\n"
        f"[bold]Gain:[/bold]     {drive.gain:.4g}\n"
        f"[bold]Audible leakage:[/bold] {leakage:.1f} dB re peak\n"
        f"[bold]WAV:[/bold]      {wav}",
        title="Drive signal",
    ))


@cache_app.command("gc")
def cache_gc(
    cache_dir: Path = typer.Option(None, "--cache-dir", help="Grid cache directory"),
    purge_all: bool = typer.Option(False, "--all", help="Remove every entry"),
):
    """Remove temp files and invalid entries from the cache."""
    with _errors():
        root = cache_dir or load_config().run.cache_dir
        report = GridCache(root).gc(purge_all=purge_all)
    console.print(f"[green]Removed {len(report.removed)} file(s)[/green], kept {report.kept}.")


if __name__ == "__main__":
    app()
