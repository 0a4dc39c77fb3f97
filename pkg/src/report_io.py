# ----------------------------------------------------------------
# RapidStab 1.0 - Report I/O (GPLv3)
# Copyright (C) 2025 The RapidStab Authors
# License: GNU GPL v3+ <https://www.gnu.org/licenses/gpl-3.0.txt>
# This is free software with NO WARRANTY.
# ----------------------------------------------------------------

"""JSON reports, the RSTABT01 matrix file and CSV tables"""

# Standard library imports
import json
import logging
import math
import struct
from pathlib import Path
from typing import Any, Dict, Tuple

# Third party imports
import numpy as np
import pandas as pd

# Local application imports
from errors import UsageError
from spectral_core import FloatArray

logger = logging.getLogger(__name__)

TRANSFORM_MAGIC = b"RSTABT01"
_HEADER = struct.Struct("<8sII")


# =============================================================================
# JSON
# =============================================================================


def to_plain(value: Any) -> Any:
    """numpy scalars/arrays to JSON types; non-finite floats become null"""
    if isinstance(value, dict):
        return {str(k): to_plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_plain(v) for v in value]
    if isinstance(value, np.ndarray):
        return [to_plain(v) for v in value.tolist()]
    if isinstance(value, (np.bool_, bool)):
        return bool(value)
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        f = float(value)
        return f if math.isfinite(f) else None
    if isinstance(value, Path):
        return str(value)
    return value


def write_json(data: Dict[str, Any], path: Path) -> None:
    with open(path, "w", newline="\n") as f:
        json.dump(to_plain(data), f, indent=2, allow_nan=False)
        f.write("\n")
    logger.debug("Wrote %s", path)


def read_json(path: Path) -> Dict[str, Any]:
    try:
        with open(path, "r") as f:
            data = json.load(f)
    except FileNotFoundError as e:
        raise UsageError(f"Missing input file {path}") from e
    except json.JSONDecodeError as e:
        raise UsageError(f"Malformed JSON in {path}: {e}") from e
    if not isinstance(data, dict):
        raise UsageError(f"{path}: the top level must be a JSON object")
    return data


# =============================================================================
# TRANSFORM MATRIX
# =============================================================================


def write_transform_bin(matrix: FloatArray, N: int, path: Path) -> None:
    """16-byte header (magic, u32 N, u32 reserved) then row-major little-endian float64"""
    data = np.ascontiguousarray(matrix, dtype="<f8")
    if data.shape != (2 * N, 2 * N):
        raise ValueError(f"Expected a {2 * N}x{2 * N} matrix, got {data.shape}")
    with open(path, "wb") as f:
        f.write(_HEADER.pack(TRANSFORM_MAGIC, N, 0))
        f.write(data.tobytes(order="C"))


def read_transform_bin(path: Path) -> Tuple[int, FloatArray]:
    try:
        raw = Path(path).read_bytes()
    except FileNotFoundError as e:
        raise UsageError(f"Missing transform file {path}") from e
    if len(raw) < _HEADER.size:
        raise UsageError(f"{path}: truncated header")
    magic, N, _ = _HEADER.unpack_from(raw)
    if magic != TRANSFORM_MAGIC:
        raise UsageError(f"{path}: not an RSTABT01 file")
    expected = _HEADER.size + 8 * (2 * N) ** 2
    if len(raw) != expected:
        raise UsageError(f"{path}: expected {expected} bytes for N={N}, found {len(raw)}")
    matrix = np.frombuffer(raw, dtype="<f8", offset=_HEADER.size).reshape(2 * N, 2 * N)
    return int(N), matrix.astype(float)


# =============================================================================
# CSV
# =============================================================================


def write_csv(frame: pd.DataFrame, path: Path) -> None:
    """'.' decimal separator, LF endings, round-trip precision"""
    frame.to_csv(path, index=False, float_format="%.17g", lineterminator="\n")
