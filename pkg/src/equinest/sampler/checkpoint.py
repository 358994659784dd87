"""
Checkpoint files for the nested-sampling main loop.

A checkpoint is a single ``.npz`` archive: numeric state as arrays plus one
JSON string under ``meta`` holding scalars, generator states and the
adaptive-scale history. Pickled objects are never written or read.
"""

import io
import json
import logging
from collections.abc import Mapping
from pathlib import Path
from typing import Any

import numpy as np
from numpy.typing import NDArray

from equinest.exceptions import ArtifactError
from equinest.files import atomic_write_bytes

__all__ = ["CHECKPOINT_VERSION", "load_checkpoint", "save_checkpoint", "validate_checkpoint"]

logger = logging.getLogger(__name__)

CHECKPOINT_VERSION = 1

_META_KEY = "meta"


def save_checkpoint(
    path: str | Path, arrays: Mapping[str, NDArray[Any]], meta: Mapping[str, Any]
) -> Path:
    """
    Write a checkpoint atomically.

    Parameters
    ----------
    path : str | Path
        Destination ``.npz`` file.
    arrays : Mapping[str, ndarray]
        Numeric state. The key ``meta`` is reserved.
    meta : Mapping[str, Any]
        JSON-serializable scalars and nested state.

    Returns
    -------
    Path
        The written file.
    """
    if _META_KEY in arrays:
        raise ValueError(f"Array key {_META_KEY!r} is reserved")
    payload = {"version": CHECKPOINT_VERSION, **meta}
    buffer = io.BytesIO()
    np.savez(buffer, meta=np.array(json.dumps(payload)), **arrays)
    target = atomic_write_bytes(path, buffer.getvalue())
    logger.info("checkpoint_written: path=%s, iteration=%s", target, meta.get("iteration"))
    return target


def load_checkpoint(path: str | Path) -> tuple[dict[str, NDArray[Any]], dict[str, Any]]:
    """
    Read a checkpoint written by ``save_checkpoint``.

    Raises
    ------
    ArtifactError
        If the file is missing, unreadable or of another version.
    """
    file_path = Path(path)
    if not file_path.exists():
        raise ArtifactError(f"Checkpoint not found: {path}")
    try:
        with np.load(file_path, allow_pickle=False) as data:
            arrays = {key: data[key] for key in data.files if key != _META_KEY}
            meta = json.loads(str(data[_META_KEY]))
    except (OSError, ValueError, KeyError) as e:
        raise ArtifactError(f"Unreadable checkpoint {path}: {e}") from e

    if meta.get("version") != CHECKPOINT_VERSION:
        raise ArtifactError(
            f"Checkpoint {path} has version {meta.get('version')}, expected {CHECKPOINT_VERSION}"
        )
    logger.info("checkpoint_loaded: path=%s, iteration=%s", file_path, meta.get("iteration"))
    return arrays, meta


def validate_checkpoint(meta: Mapping[str, Any], **expected: Any) -> None:
    """
    Check that a checkpoint belongs to the run being resumed.

    Raises
    ------
    ArtifactError
        Listing every mismatching field.
    """
    errors = [
        f"{key}: checkpoint has {meta.get(key)!r}, run has {value!r}"
        for key, value in expected.items()
        if meta.get(key) != value
    ]
    if errors:
        error_list = "\n  ".join(errors)
        raise ArtifactError(f"{len(errors)} error(s) in checkpoint:\n  {error_list}")
