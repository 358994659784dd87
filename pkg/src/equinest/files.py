"""Document reading and atomic file writes shared by the loaders and exporters."""

import json
import logging
import os
import re
import tempfile
from pathlib import Path
from typing import IO, Any

import yaml

from equinest.exceptions import ValidationError

__all__ = [
    "DocumentLoader",
    "atomic_write_bytes",
    "atomic_write_text",
    "load_yaml",
    "read_document",
    "write_json",
]

logger = logging.getLogger(__name__)


class DocumentLoader(yaml.SafeLoader):
    """Safe YAML loader that also reads ``1e-5`` and ``1.0e5`` as floats."""


# YAML 1.1 floats need a dot and a signed exponent; JSON and Python write neither.
DocumentLoader.add_implicit_resolver(
    "tag:yaml.org,2002:float",
    re.compile(r"^[-+]?[0-9][0-9_]*(?:\.[0-9_]*)?[eE][-+]?[0-9]+$"),
    list("-+0123456789"),
)


def load_yaml(stream: str | IO[str]) -> Any:
    """Parse YAML text with :class:`DocumentLoader`."""
    return yaml.load(stream, Loader=DocumentLoader)


def read_document(path: str | Path, *, what: str = "document") -> Any:
    """
    Read a YAML or JSON document.

    ``.json`` files go through :func:`json.load`; anything else through
    :func:`load_yaml`.

    Parameters
    ----------
    path : str | Path
        Path to the document.
    what : str, optional
        Description used in error messages (e.g., "machine geometry").

    Returns
    -------
    Any
        Parsed document.

    Raises
    ------
    ValidationError
        If the file does not exist or cannot be parsed.
    """
    file_path = Path(path)
    if not file_path.exists():
        raise ValidationError(f"{what.capitalize()} file not found: {path}")

    try:
        with open(file_path, encoding="utf-8") as f:
            if file_path.suffix.lower() == ".json":
                return json.load(f)
            return load_yaml(f)
    except (json.JSONDecodeError, yaml.YAMLError) as e:
        raise ValidationError(f"Malformed {what} in {path}: {e}") from e


def atomic_write_bytes(path: str | Path, data: bytes) -> Path:
    """
    Write bytes to ``path`` through a temporary sibling and ``os.replace``.

    Parameters
    ----------
    path : str | Path
        Destination file. Parent directories are created.
    data : bytes
        Payload.

    Returns
    -------
    Path
        The destination path.
    """
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp_name = tempfile.mkstemp(prefix=f".{target.name}.", dir=target.parent)
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(data)
        os.replace(tmp_name, target)
    except BaseException:
        Path(tmp_name).unlink(missing_ok=True)
        raise
    logger.debug("file_written: path=%s, bytes=%d", target, len(data))
    return target


def atomic_write_text(path: str | Path, text: str) -> Path:
    """Write UTF-8 text atomically."""
    return atomic_write_bytes(path, text.encode("utf-8"))


def write_json(path: str | Path, payload: Any) -> Path:
    """Write a JSON document atomically with stable formatting."""
    return atomic_write_text(path, json.dumps(payload, indent=2) + "\n")
