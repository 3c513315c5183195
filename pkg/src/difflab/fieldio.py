"""Snapshot I/O.

Binary layout (little endian): int32 dim, int32 n per axis, float64 h,
float64 dt, int32 frame count, then frame count full-box float64 arrays in C
order with NaN on inactive nodes.  The mask is reconstructed from the NaN
pattern of the first frame; the time origin is not persisted and reloads as
zero.  CSV export writes one row per active node (coordinates, value).
"""

from __future__ import annotations

import csv
import struct

import numpy as np

from .errors import ParameterError
from .grid import DomainMask, Field, GridSpec, Trajectory

_MAGIC = struct.Struct("<i")


def save_trajectory(path, traj: Trajectory) -> None:
    grid = traj.grid
    with open(path, "wb") as fh:
        fh.write(struct.pack("<i", grid.dim))
        fh.write(struct.pack(f"<{grid.dim}i", *grid.n))
        fh.write(struct.pack("<dd", grid.h, traj.dt))
        fh.write(struct.pack("<i", traj.n_frames))
        for k in range(traj.n_frames):
            full = traj.mask.scatter(traj.values[k], fill=np.nan)
            fh.write(np.ascontiguousarray(full, dtype="<f8").tobytes())


def load_trajectory(path) -> Trajectory:
    with open(path, "rb") as fh:
        (dim,) = struct.unpack("<i", fh.read(4))
        if not 1 <= dim <= 4:
            raise ParameterError(f"corrupt snapshot: dim={dim}")
        n = struct.unpack(f"<{dim}i", fh.read(4 * dim))
        h, dt = struct.unpack("<dd", fh.read(16))
        (n_frames,) = struct.unpack("<i", fh.read(4))
        count = int(np.prod(n))
        frames = np.frombuffer(fh.read(8 * count * n_frames), dtype="<f8")
    frames = frames.reshape((n_frames,) + tuple(n)).astype(float)
    extent = tuple(h * (k - 1) for k in n)
    grid = GridSpec.make(extent, n)
    active = ~np.isnan(frames[0])
    mask = DomainMask(grid, active)
    values = np.stack([frames[k][active] for k in range(n_frames)])
    times = dt * np.arange(n_frames)
    return Trajectory(mask, times, values)


def save_field(path, field: Field) -> None:
    traj = Trajectory(field.mask, np.array([0.0]), field.values[None, :])
    save_trajectory(path, traj)


def export_csv(path, field: Field) -> None:
    coords = field.mask.node_coords()
    dim = field.grid.dim
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([f"x{i + 1}" for i in range(dim)] + ["value"])
        for row, val in zip(coords, field.values):
            writer.writerow([repr(float(c)) for c in row] + [repr(float(val))])
