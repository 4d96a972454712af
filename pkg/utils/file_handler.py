"""
File handling utilities for run artifacts.

This module writes CSV tables, JSON documents and little-endian binary dumps
with the byte-stable formatting run records rely on, and hashes the results.
"""

import hashlib
import json
import os
import struct
from typing import Any, Dict, Tuple

import numpy as np
import pandas as pd

from utils.config import OUTPUT_CONFIG

GRID_DUMP_MAGIC = b"LMLG"
# magic, nx, ny, nz, h, s_level, x0, y0, z0
GRID_DUMP_HEADER = struct.Struct("<4s3i5d")


def _to_builtin(value: Any) -> Any:
    """Convert numpy containers and scalars into JSON-serializable objects."""
    if isinstance(value, dict):
        return {str(k): _to_builtin(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_to_builtin(v) for v in value]
    if isinstance(value, np.ndarray):
        return [_to_builtin(v) for v in value.tolist()]
    if isinstance(value, np.bool_):
        return bool(value)
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.floating):
        return float(value)
    return value


def canonical_json(obj: Any) -> str:
    """
    Serialize an object with sorted keys and no insignificant whitespace.

    Args:
        obj: JSON-compatible object (numpy scalars allowed)

    Returns:
        str: Canonical JSON text, used for hashing configurations
    """
    return json.dumps(_to_builtin(obj), sort_keys=True, separators=(",", ":"))


def write_csv(df: pd.DataFrame, path: str) -> str:
    """
    Write a DataFrame with 17 significant digits and LF line endings.

    Args:
        df (pd.DataFrame): Table to write
        path (str): Destination file

    Returns:
        str: The path written
    """
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    df.to_csv(
        path,
        index=False,
        float_format=OUTPUT_CONFIG["float_format"],
        lineterminator=OUTPUT_CONFIG["line_terminator"],
    )
    return path


def read_csv(path: str) -> pd.DataFrame:
    """
    Read a CSV artifact back.

    Raises:
        FileNotFoundError: If the file does not exist
    """
    if not os.path.exists(path):
        raise FileNotFoundError(f"CSV file not found at path: {path}")
    return pd.read_csv(path)


def write_json(obj: Any, path: str) -> str:
    """Write JSON with sorted keys, two-space indent and a trailing newline."""
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(_to_builtin(obj), fh, sort_keys=True, indent=2)
        fh.write("\n")
    return path


def read_json(path: str) -> Dict:
    """
    Read a JSON document.

    Raises:
        FileNotFoundError: If the file does not exist
        json.JSONDecodeError: If the file is not valid JSON
    """
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)


def sha256_file(path: str) -> str:
    """Hex SHA-256 digest of a file's bytes."""
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            digest.update(chunk)
    return digest.hexdigest()


def write_grid_dump(
    path: str,
    values: np.ndarray,
    h: float,
    s_level: float,
    origin: Tuple[float, float, float],
) -> str:
    """
    Write a box-shaped float64 array behind the fixed binary header.

    Args:
        path (str): Destination file
        values (np.ndarray): Array of shape (nx, ny, nz), NaN outside the domain
        h (float): Grid spacing
        s_level (float): Domain level
        origin (tuple): Coordinates of index (0, 0, 0)

    Returns:
        str: The path written
    """
    if values.ndim != 3:
        raise ValueError(f"Grid dump expects a 3-d array, got shape {values.shape}")
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    nx, ny, nz = values.shape
    header = GRID_DUMP_HEADER.pack(
        GRID_DUMP_MAGIC, nx, ny, nz, float(h), float(s_level), *map(float, origin)
    )
    with open(path, "wb") as fh:
        fh.write(header)
        np.ascontiguousarray(values, dtype="<f8").tofile(fh)
    return path


def read_grid_dump(path: str) -> Tuple[np.ndarray, Dict[str, Any]]:
    """
    Read a binary grid dump.

    Returns:
        tuple: (values array of shape (nx, ny, nz), header dict)

    Raises:
        ValueError: If the magic bytes or payload size do not match
    """
    with open(path, "rb") as fh:
        raw = fh.read(GRID_DUMP_HEADER.size)
        magic, nx, ny, nz, h, s_level, x0, y0, z0 = GRID_DUMP_HEADER.unpack(raw)
        if magic != GRID_DUMP_MAGIC:
            raise ValueError(f"Not a grid dump: {path}")
        payload = np.fromfile(fh, dtype="<f8")
    if payload.size != nx * ny * nz:
        raise ValueError(
            f"Grid dump payload has {payload.size} values, expected {nx * ny * nz}"
        )
    header = {"dims": (nx, ny, nz), "h": h, "s_level": s_level, "origin": (x0, y0, z0)}
    return payload.reshape((nx, ny, nz)), header
