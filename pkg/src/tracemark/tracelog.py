"""Append-only download log backing log-dependent payloads.

Each download of a document gets a fresh random identifier; the
identifier is the watermark payload, and this log is the only place it
means anything.  The API exposes no update or delete, so a store file
can only grow.

Backed by a single sqlite file.  Uniqueness of the identifier (alone,
or per document in composite mode) is enforced by the database index,
so concurrent writers race safely and collisions surface as retries.
"""

from __future__ import annotations

import csv
import ipaddress
import secrets
import sqlite3
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Callable

from .errors import StoreError

__all__ = ["DownloadRecord", "TraceLog", "MAX_ID_ATTEMPTS"]

MAX_ID_ATTEMPTS = 8

_COLUMNS = ("download_id", "document_id", "user_id", "timestamp", "ip_addr", "attributes")


@dataclass(frozen=True)
class DownloadRecord:
    download_id: int
    document_id: int
    user_id: int | str
    timestamp: int
    ip_addr: str
    attributes: str | None = None


def _to_db(value: int) -> int:
    # sqlite integers are signed 64-bit; map the unsigned range onto it.
    return value - 2**64 if value >= 2**63 else value


def _from_db(value: int) -> int:
    return value + 2**64 if value < 0 else value


class TraceLog:
    """One open store.  ``mode`` is fixed when the file is created.

    ``primary`` keys records by download_id alone; ``composite`` allows
    an id to recur across documents and keys by the pair.  ``id_bits``
    narrows the generated identifiers when a channel cannot carry the
    full 64 bits.
    """

    def __init__(
        self,
        path: str | Path,
        mode: str = "primary",
        id_bits: int = 64,
        rng_bits: Callable[[int], int] = secrets.randbits,
    ) -> None:
        if mode not in ("primary", "composite"):
            raise ValueError(f"unknown trace log mode {mode!r}")
        if not 8 <= id_bits <= 64:
            raise ValueError("id_bits must be in [8, 64]")
        self.mode = mode
        self.id_bits = id_bits
        self._rng_bits = rng_bits
        self._db = sqlite3.connect(str(path))
        self._init_schema()

    def _init_schema(self) -> None:
        unique = (
            "(download_id)" if self.mode == "primary" else "(download_id, document_id)"
        )
        with self._db:
            self._db.execute(
                "CREATE TABLE IF NOT EXISTS meta (key TEXT PRIMARY KEY, value TEXT)"
            )
            row = self._db.execute(
                "SELECT value FROM meta WHERE key = 'mode'"
            ).fetchone()
            if row is None:
                self._db.execute(
                    "INSERT INTO meta VALUES ('mode', ?)", (self.mode,)
                )
            elif row[0] != self.mode:
                raise StoreError(
                    f"store was created in {row[0]!r} mode, opened as {self.mode!r}"
                )
            # user_id column deliberately has no type affinity so integer
            # and string identities both round-trip unchanged.
            self._db.execute(
                f"""CREATE TABLE IF NOT EXISTS downloads (
                    download_id INTEGER NOT NULL,
                    document_id INTEGER NOT NULL,
                    user_id NOT NULL,
                    timestamp INTEGER NOT NULL,
                    ip_addr TEXT NOT NULL,
                    attributes TEXT,
                    UNIQUE {unique}
                )"""
            )

    def close(self) -> None:
        self._db.close()

    def __enter__(self) -> "TraceLog":
        return self

    def __exit__(self, *exc) -> None:
        self.close()

    def record_download(
        self,
        document_id: int,
        user_id: int | str,
        ip_addr: str,
        timestamp: int | datetime,
        attributes: str | None = None,
    ) -> int:
        """Persist one download and return its fresh identifier."""
        if not 0 <= document_id < 2**64:
            raise ValueError("document_id must be a 64-bit unsigned integer")
        ip_text = str(ipaddress.ip_address(ip_addr))
        if isinstance(timestamp, datetime):
            if timestamp.tzinfo is None:
                timestamp = timestamp.replace(tzinfo=timezone.utc)
            timestamp = int(timestamp.timestamp())
        for _ in range(MAX_ID_ATTEMPTS):
            download_id = self._rng_bits(self.id_bits)
            if download_id == 0:
                continue
            try:
                with self._db:
                    self._db.execute(
                        "INSERT INTO downloads VALUES (?, ?, ?, ?, ?, ?)",
                        (
                            _to_db(download_id),
                            _to_db(document_id),
                            user_id,
                            timestamp,
                            ip_text,
                            attributes,
                        ),
                    )
                return download_id
            except sqlite3.IntegrityError:
                continue
            except sqlite3.Error as exc:
                raise StoreError(f"write failed: {exc}") from exc
        raise StoreError(
            f"no unique download_id found in {MAX_ID_ATTEMPTS} attempts"
        )

    def _row_to_record(self, row: tuple) -> DownloadRecord:
        return DownloadRecord(
            download_id=_from_db(row[0]),
            document_id=_from_db(row[1]),
            user_id=row[2],
            timestamp=row[3],
            ip_addr=row[4],
            attributes=row[5],
        )

    def lookup(
        self, download_id: int, document_id: int | None = None
    ) -> DownloadRecord | list[DownloadRecord] | None:
        """Resolve an extracted identifier back to its download record.

        Primary mode returns one record or None.  Composite mode returns
        one record or None when the document is known, otherwise the
        list of every record sharing the identifier.
        """
        base = f"SELECT {', '.join(_COLUMNS)} FROM downloads WHERE download_id = ?"
        if document_id is not None:
            rows = self._db.execute(
                base + " AND document_id = ?",
                (_to_db(download_id), _to_db(document_id)),
            ).fetchall()
            return self._row_to_record(rows[0]) if rows else None
        rows = self._db.execute(base, (_to_db(download_id),)).fetchall()
        if self.mode == "primary":
            return self._row_to_record(rows[0]) if rows else None
        return [self._row_to_record(r) for r in rows]

    def export_csv(self, path: str | Path) -> int:
        """Dump every record in insert order; returns the row count."""
        rows = self._db.execute(
            f"SELECT {', '.join(_COLUMNS)} FROM downloads ORDER BY rowid"
        ).fetchall()
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(_COLUMNS)
            for row in rows:
                writer.writerow(
                    (_from_db(row[0]), _from_db(row[1])) + tuple(row[2:])
                )
        return len(rows)
