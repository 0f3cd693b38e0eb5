"""
Matrix Bundles
Directories of raw .npy arrays plus a JSON header, and the CSV/JSON writers
for study results. Nothing here records a timestamp, so identical inputs give
byte-identical files.
"""

import csv
import json
import logging
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ValidationError

from .basis import SpaceTimeBasis
from .errors import ConfigurationError, DimensionMismatchError
from .fom import Trajectory
from .model import Grid2D
from .rom import Flavor, ReducedSystem, RomSolution

logger = logging.getLogger(__name__)

HEADER_FILE = "header.json"


class BasisHeader(BaseModel):
    space_dim: int
    n_steps: int
    n_s: int
    n_t: int
    n_mu: int
    training_mus: List[Tuple[float, float]]


class TrajectoryHeader(BaseModel):
    n_s: int
    n_t: int
    mu: Tuple[float, float]


class ReducedHeader(BaseModel):
    flavor: Flavor
    n_s: int
    n_t: int
    mu: Tuple[float, float]
    condition: Optional[float] = None


def _write_arrays(directory: Path, header: BaseModel, arrays: Dict[str, np.ndarray]) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for name, array in arrays.items():
        np.save(directory / f"{name}.npy", np.ascontiguousarray(array, dtype=float), allow_pickle=False)
    (directory / HEADER_FILE).write_text(header.model_dump_json(indent=2) + "\n")
    return directory


def _read_arrays(directory: Path, header_type, names: Iterable[str]):
    directory = Path(directory)
    try:
        header = header_type.model_validate_json((directory / HEADER_FILE).read_text())
        arrays = {name: np.load(directory / f"{name}.npy", allow_pickle=False) for name in names}
    except (OSError, ValidationError, ValueError) as exc:
        raise ConfigurationError(f"cannot read bundle {directory}: {exc}") from exc
    return header, arrays


def save_basis(directory, basis: SpaceTimeBasis) -> Path:
    header = BasisHeader(
        space_dim=basis.space_dim,
        n_steps=basis.n_steps,
        n_s=basis.n_s,
        n_t=basis.n_t,
        n_mu=basis.n_mu,
        training_mus=list(basis.training_mus),
    )
    path = _write_arrays(directory, header, {
        "phi_s": basis.phi_s,
        "phi_t": basis.phi_t,
        "singular_values": basis.spatial_singular_values,
    })
    logger.info(f"Wrote basis bundle ({basis.space_dim}x{basis.n_s}, n_t={basis.n_t}) to {path}")
    return path


def load_basis(directory) -> SpaceTimeBasis:
    header, arrays = _read_arrays(directory, BasisHeader, ("phi_s", "phi_t", "singular_values"))
    phi_s, phi_t = arrays["phi_s"], arrays["phi_t"]
    if phi_s.shape != (header.space_dim, header.n_s) or phi_t.shape != (header.n_s, header.n_steps, header.n_t):
        raise DimensionMismatchError(f"bundle {directory} arrays disagree with its header")
    return SpaceTimeBasis(
        phi_s=phi_s,
        phi_t=phi_t,
        spatial_singular_values=arrays["singular_values"],
        n_mu=header.n_mu,
        training_mus=[tuple(mu) for mu in header.training_mus],
    )


def save_trajectory(directory, trajectory: Trajectory) -> Path:
    header = TrajectoryHeader(n_s=trajectory.n_s, n_t=trajectory.n_t, mu=trajectory.mu)
    return _write_arrays(directory, header, {
        "states": trajectory.states,
        "u0": trajectory.u0,
        "time_steps": trajectory.time_steps,
    })


def load_trajectory(directory) -> Trajectory:
    header, arrays = _read_arrays(directory, TrajectoryHeader, ("states", "u0", "time_steps"))
    if arrays["states"].shape != (header.n_s, header.n_t):
        raise DimensionMismatchError(f"bundle {directory} arrays disagree with its header")
    return Trajectory(
        states=arrays["states"],
        u0=arrays["u0"],
        time_steps=arrays["time_steps"],
        mu=tuple(header.mu),
    )


def save_reduced(directory, reduced: ReducedSystem, solution: Optional[RomSolution] = None) -> Path:
    header = ReducedHeader(
        flavor=reduced.flavor,
        n_s=reduced.n_s,
        n_t=reduced.n_t,
        mu=reduced.mu,
        condition=None if solution is None else solution.condition,
    )
    arrays = {"a_hat": reduced.a_hat, "f_hat": reduced.f_hat, "u0_hat": reduced.u0_hat}
    if solution is not None:
        arrays["x_hat"] = solution.x_hat
    return _write_arrays(directory, header, arrays)


def format_value(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return str(value).lower()
    if isinstance(value, float):
        return f"{value:.16e}"
    if hasattr(value, "value"):
        return str(value.value)
    return str(value)


def write_csv(path, rows: Sequence[BaseModel], model_type=None) -> Path:
    """One row per record; columns are the model's field names in declaration order"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    model_type = model_type or (type(rows[0]) if rows else None)
    if model_type is None:
        raise ConfigurationError(f"cannot infer CSV columns for empty table {path}")
    columns = list(model_type.model_fields)

    with path.open("w", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([format_value(getattr(row, name)) for name in columns])
    logger.info(f"Wrote {len(rows)} row(s) to {path}")
    return path


def write_json(path, payload) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if isinstance(payload, BaseModel):
        text = payload.model_dump_json(indent=2)
    else:
        text = json.dumps(payload, indent=2, sort_keys=True)
    path.write_text(text + "\n")
    return path


def write_snapshot_csv(path, grid: Grid2D, state: np.ndarray) -> Path:
    """Interior field as a (ny-1) x (nx-1) table, row iy, column ix"""
    if state.shape != (grid.n_s,):
        raise DimensionMismatchError(f"state has shape {state.shape}, grid expects ({grid.n_s},)")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        for row in state.reshape(grid.my, grid.mx):
            writer.writerow([f"{v:.16e}" for v in row])
    return path
