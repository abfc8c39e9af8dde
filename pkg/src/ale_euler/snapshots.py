"""Snapshot I/O.

One directory per snapshot: ``manifest.json`` (grid dimensions and
spacings, time, field table with byte offsets and CRC-32 checksums,
endianness tag, provenance) plus ``data.bin`` holding every field as
little-endian IEEE-754 float64, node-major with x fastest and tensor
components innermost.  Writing then reading a snapshot reproduces the
arrays bit-exactly.
"""

from __future__ import annotations

import json
import zlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import SnapshotError
from .grid import Grid, MatrixField, ScalarField, VectorField, _Field

MANIFEST_NAME = "manifest.json"
DATA_NAME = "data.bin"

_KIND_BY_COMPS = {(): ScalarField, (3,): VectorField, (3, 3): MatrixField}


@dataclass
class Snapshot:
    grid: Grid
    t: float
    fields: dict
    provenance: dict = field(default_factory=dict)


def _to_disk_order(data: np.ndarray) -> np.ndarray:
    # (nx,ny,nz,comp...) -> (nz,ny,nx,comp...), C order, little endian
    arr = np.moveaxis(data, (0, 1, 2), (2, 1, 0))
    return np.ascontiguousarray(arr, dtype="<f8")


def _from_disk_order(buf: bytes, grid: Grid, comps: tuple) -> np.ndarray:
    shape = (grid.nz, grid.ny, grid.nx) + comps
    arr = np.frombuffer(buf, dtype="<f8").reshape(shape)
    return np.ascontiguousarray(np.moveaxis(arr, (2, 1, 0), (0, 1, 2)))


def write_snapshot(snapshot: Snapshot, directory) -> dict:
    """Write the snapshot; returns the manifest dictionary."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    g = snapshot.grid
    entries = []
    offset = 0
    blobs = []
    for name in sorted(snapshot.fields):
        f = snapshot.fields[name]
        raw = _to_disk_order(f.data).tobytes()
        entries.append({
            "name": name,
            "components": list(type(f)._comp_shape),
            "offset": offset,
            "nbytes": len(raw),
            "crc32": zlib.crc32(raw) & 0xFFFFFFFF,
        })
        blobs.append(raw)
        offset += len(raw)
    manifest = {
        "format": "ale-euler-snapshot",
        "version": 1,
        "endianness": "little",
        "dtype": "float64",
        "ordering": "node-major, x fastest, components innermost",
        "grid": {"nx": g.nx, "ny": g.ny, "nz": g.nz,
                 "hx": g.hx, "hy": g.hy, "hz": g.hz},
        "time": snapshot.t,
        "fields": entries,
        "provenance": snapshot.provenance,
    }
    (directory / DATA_NAME).write_bytes(b"".join(blobs))
    (directory / MANIFEST_NAME).write_text(
        json.dumps(manifest, sort_keys=True, indent=1) + "\n")
    return manifest


def read_snapshot(directory) -> Snapshot:
    directory = Path(directory)
    mpath = directory / MANIFEST_NAME
    dpath = directory / DATA_NAME
    if not mpath.is_file() or not dpath.is_file():
        raise SnapshotError(f"{directory} is not a snapshot directory")
    try:
        manifest = json.loads(mpath.read_text())
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise SnapshotError(f"unreadable manifest in {directory}: {exc}") from exc
    if manifest.get("format") != "ale-euler-snapshot":
        raise SnapshotError(f"{mpath} is not a snapshot manifest")
    if manifest.get("endianness") != "little":
        raise SnapshotError("unsupported endianness tag")
    gspec = manifest["grid"]
    grid = Grid(gspec["nx"], gspec["ny"], gspec["nz"])
    data = dpath.read_bytes()
    fields = {}
    for entry in manifest["fields"]:
        comps = tuple(entry["components"])
        if comps not in _KIND_BY_COMPS:
            raise SnapshotError(f"field {entry['name']}: bad component shape {comps}")
        raw = data[entry["offset"]: entry["offset"] + entry["nbytes"]]
        if len(raw) != entry["nbytes"]:
            raise SnapshotError(f"field {entry['name']}: data truncated")
        if (zlib.crc32(raw) & 0xFFFFFFFF) != entry["crc32"]:
            raise SnapshotError(f"field {entry['name']}: checksum mismatch")
        expected = grid.num_nodes * int(np.prod(comps, dtype=int)) * 8
        if entry["nbytes"] != expected:
            raise SnapshotError(
                f"field {entry['name']}: size {entry['nbytes']} does not match grid")
        arr = _from_disk_order(raw, grid, comps)
        fields[entry["name"]] = _KIND_BY_COMPS[comps](grid, arr)
    return Snapshot(grid=grid, t=float(manifest["time"]), fields=fields,
                    provenance=manifest.get("provenance", {}))
