"""Result writers: CSV via pandas, JSON, and float PCM via soundfile."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import pandas as pd
import soundfile as sf

from mcpl_zones.core.services.signal import DriveSignal
from mcpl_zones.core.services.szc import AxialProfile, FieldMap


def _frame_to_csv(frame: pd.DataFrame, path: Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False, lineterminator="\n")
    return path


def write_axial_csv(profile: AxialProfile, path: Path) -> Path:
    frame = pd.DataFrame({
        "z_m": profile.z,
        "pressure_re": profile.pressure.real,
        "pressure_im": profile.pressure.imag,
        "spl_db": profile.level_db,
    })
    return _frame_to_csv(frame, path)


def write_map_csv(fmap: FieldMap, path: Path) -> Path:
    X, Z = np.meshgrid(fmap.x_nodes, fmap.z_nodes)
    frame = pd.DataFrame({
        "x_m": X.ravel(),
        "z_m": Z.ravel(),
        "spl_db": fmap.level_db.ravel(),
        "spl_rel_db": fmap.relative_db.ravel(),
    })
    return _frame_to_csv(frame, path)


def write_json(data: dict, path: Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")
    return path


def export_csv(drive: DriveSignal, path: Path) -> Path:
    return _frame_to_csv(pd.DataFrame({"time_s": drive.times, "amplitude": drive.samples}), path)


def export_wav(drive: DriveSignal, path: Path) -> Path:
    """Single-channel 32-bit float WAV."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    sf.write(path, drive.samples.astype(np.float32), int(round(drive.sample_rate)), subtype="FLOAT")
    return path
