"""
SQLite cache for assembled response operators.

Building the response operators of a machine is the most expensive
deterministic step of a run. The cache stores every operator bundle under a
content hash of the machine geometry, the channel positions and the
quadrature settings, so rebuilding the same machine is a lookup.

SQLite Schema
-------------
**operator_entries**
    - id: INTEGER PRIMARY KEY
    - key: TEXT NOT NULL UNIQUE (SHA-256 hex digest)
    - label: TEXT (machine name, informational)
    - created_at: TEXT (SQLite timestamp)

**operator_data**
    - entry_id: INTEGER PRIMARY KEY REFERENCES operator_entries(id)
    - data: BLOB NOT NULL (``np.savez`` archive of named arrays)

Example
-------
>>> with OperatorCache() as cache:
...     arrays = cache.get(key)
...     if arrays is None:
...         cache.put(key, build(), label="desk")
"""

import io
import logging
import os
import sqlite3
from pathlib import Path

import numpy as np
from numpy.typing import NDArray

__all__ = ["DEFAULT_CACHE_DIR", "OperatorCache"]

logger = logging.getLogger(__name__)

DEFAULT_CACHE_DIR = "./cache"
CACHE_DIR_ENV = "EQUINEST_CACHE_DIR"
DB_NAME = "operators.db"


class OperatorCache:
    """
    Content-addressed store of named numpy arrays.

    Parameters
    ----------
    path : str | Path | None, optional
        Path to the SQLite database file. If None, uses
        ``$EQUINEST_CACHE_DIR/operators.db`` or ``./cache/operators.db``.
    enabled : bool, optional
        If False, no file is created, ``put`` is a no-op and ``get`` always
        returns None. Default is True.
    """

    def __init__(self, path: str | Path | None = None, *, enabled: bool = True) -> None:
        self._enabled = enabled
        self._conn: sqlite3.Connection | None = None
        self._path: Path | None = None

        if not enabled:
            logger.debug("cache_disabled")
            return

        if path is None:
            path = Path(os.environ.get(CACHE_DIR_ENV, DEFAULT_CACHE_DIR)) / DB_NAME

        self._path = Path(path)
        self._initialize_database()

    @property
    def path(self) -> Path | None:
        return self._path

    @property
    def enabled(self) -> bool:
        return self._enabled

    def _initialize_database(self) -> None:
        assert self._path is not None
        self._path.parent.mkdir(parents=True, exist_ok=True)
        self._conn = sqlite3.connect(self._path, check_same_thread=False)

        self._conn.execute("""
            CREATE TABLE IF NOT EXISTS operator_entries (
                id INTEGER PRIMARY KEY AUTOINCREMENT,
                key TEXT NOT NULL UNIQUE,
                label TEXT,
                created_at TEXT DEFAULT CURRENT_TIMESTAMP
            )
        """)
        self._conn.execute("""
            CREATE TABLE IF NOT EXISTS operator_data (
                entry_id INTEGER PRIMARY KEY,
                data BLOB NOT NULL,
                FOREIGN KEY (entry_id) REFERENCES operator_entries(id)
                    ON DELETE CASCADE
            )
        """)
        self._conn.commit()
        logger.info("cache_initialized: path=%s", self._path)

    def put(self, key: str, arrays: dict[str, NDArray[np.float64]], *, label: str = "") -> None:
        """
        Store named arrays under ``key``, replacing any previous entry.

        Parameters
        ----------
        key : str
            Content hash identifying the operator bundle.
        arrays : dict[str, ndarray]
            Arrays to store.
        label : str, optional
            Human-readable tag shown by ``list_cached_entries``.
        """
        if not self._enabled or self._conn is None:
            return

        try:
            buffer = io.BytesIO()
            np.savez(buffer, **arrays)

            self._delete_entry(key)
            cursor = self._conn.execute(
                "INSERT INTO operator_entries (key, label) VALUES (?, ?)",
                (key, label),
            )
            self._conn.execute(
                "INSERT INTO operator_data (entry_id, data) VALUES (?, ?)",
                (cursor.lastrowid, buffer.getvalue()),
            )
            self._conn.commit()
            logger.debug("cache_put: key=%s, label=%s, arrays=%d", key[:12], label, len(arrays))
        except Exception:
            logger.warning("cache_put_failed: key=%s, label=%s", key[:12], label, exc_info=True)

    def get(self, key: str) -> dict[str, NDArray[np.float64]] | None:
        """
        Retrieve the arrays stored under ``key``.

        Returns
        -------
        dict[str, ndarray] | None
            Stored arrays, or None on a miss or a read failure.
        """
        if not self._enabled or self._conn is None:
            return None

        try:
            row = self._conn.execute(
                """
                SELECT od.data
                FROM operator_entries oe
                JOIN operator_data od ON od.entry_id = oe.id
                WHERE oe.key = ?
                """,
                (key,),
            ).fetchone()
            if row is None:
                logger.debug("cache_miss: key=%s", key[:12])
                return None

            with np.load(io.BytesIO(row[0]), allow_pickle=False) as archive:
                arrays = {name: archive[name] for name in archive.files}
            logger.debug("cache_hit: key=%s", key[:12])
            return arrays
        except Exception:
            logger.warning("cache_get_failed: key=%s", key[:12], exc_info=True)
            return None

    def clear(self) -> None:
        """Remove every cached operator bundle."""
        if not self._enabled or self._conn is None:
            return

        self._conn.execute("DELETE FROM operator_data")
        self._conn.execute("DELETE FROM operator_entries")
        self._conn.commit()
        logger.info("cache_cleared: all entries")

    def list_cached_entries(self) -> list[dict[str, str]]:
        """
        List cached bundles.

        Returns
        -------
        list[dict[str, str]]
            Dicts with keys ``key``, ``label`` and ``created_at``.
        """
        if not self._enabled or self._conn is None:
            return []

        cursor = self._conn.execute(
            "SELECT key, label, created_at FROM operator_entries ORDER BY created_at, key"
        )
        return [
            {"key": row[0], "label": row[1] or "", "created_at": row[2] or ""}
            for row in cursor.fetchall()
        ]

    def close(self) -> None:
        """Close the database connection."""
        if self._conn is not None:
            self._conn.close()
            self._conn = None
            logger.debug("cache_closed")

    def __enter__(self) -> "OperatorCache":
        return self

    def __exit__(self, *exc: object) -> None:
        self.close()

    def _delete_entry(self, key: str) -> None:
        if self._conn is None:
            return
        row = self._conn.execute(
            "SELECT id FROM operator_entries WHERE key = ?", (key,)
        ).fetchone()
        if row is not None:
            self._conn.execute("DELETE FROM operator_data WHERE entry_id = ?", (row[0],))
            self._conn.execute("DELETE FROM operator_entries WHERE id = ?", (row[0],))
