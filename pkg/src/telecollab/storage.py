"""Durable record store: line-delimited JSON with atomic replace.

Writers produce a header record, the payload records, and a commit trailer
carrying the record count.  A reader that finds a torn line, a missing
trailer, or a count mismatch refuses the whole file, so a partially written
store can never be mistaken for a consistent one.  Writes go to a temp file
in the same directory and are renamed into place after fsync.
"""

from __future__ import annotations

import json
import os
from pathlib import Path
from typing import Any, Iterable


class StoreError(Exception):
    pass


class StoreCorruptError(StoreError):
    """Store file failed verification; names the offending record."""


class FileStore:
    def __init__(self, path: str | os.PathLike):
        self.path = Path(path)

    def exists(self) -> bool:
        return self.path.exists()

    def write(self, kind: str, meta: dict, records: Iterable[dict]) -> None:
        """Atomically replace the store contents."""
        records = list(records)
        lines = [json.dumps({"record": "header", "kind": kind,
                             "count": len(records), **meta},
                            sort_keys=True, separators=(",", ":"))]
        for rec in records:
            lines.append(json.dumps({"record": "entry", **rec},
                                    sort_keys=True, separators=(",", ":")))
        lines.append(json.dumps({"record": "commit", "count": len(records)},
                                sort_keys=True, separators=(",", ":")))
        data = ("\n".join(lines) + "\n").encode("utf-8")
        tmp = self.path.with_name(self.path.name + ".tmp")
        self.path.parent.mkdir(parents=True, exist_ok=True)
        with open(tmp, "wb") as fh:
            fh.write(data)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, self.path)

    def read(self, kind: str) -> tuple[dict, list[dict]]:
        """Read and verify the store; returns (header meta, records)."""
        try:
            raw = self.path.read_text(encoding="utf-8")
        except OSError as exc:
            raise StoreError(f"cannot read store {self.path}: {exc}") from None
        lines = raw.splitlines()
        if not lines:
            raise StoreCorruptError(f"{self.path}: store file is empty")
        parsed: list[Any] = []
        for index, line in enumerate(lines, start=1):
            try:
                parsed.append(json.loads(line))
            except ValueError:
                raise StoreCorruptError(
                    f"{self.path}: record {index} is not valid JSON") from None
        header = parsed[0]
        if not isinstance(header, dict) or header.get("record") != "header":
            raise StoreCorruptError(f"{self.path}: record 1 is not a header")
        if header.get("kind") != kind:
            raise StoreCorruptError(
                f"{self.path}: store kind {header.get('kind')!r}, "
                f"expected {kind!r}")
        trailer = parsed[-1]
        if (not isinstance(trailer, dict)
                or trailer.get("record") != "commit"):
            raise StoreCorruptError(
                f"{self.path}: record {len(parsed)} is not a commit trailer "
                "(truncated write?)")
        entries = parsed[1:-1]
        for offset, rec in enumerate(entries, start=2):
            if not isinstance(rec, dict) or rec.get("record") != "entry":
                raise StoreCorruptError(
                    f"{self.path}: record {offset} is not an entry")
        if trailer.get("count") != len(entries) or header.get("count") != len(entries):
            raise StoreCorruptError(
                f"{self.path}: commit count {trailer.get('count')} does not "
                f"match {len(entries)} entries")
        meta = {k: v for k, v in header.items()
                if k not in ("record", "kind", "count")}
        return meta, [
            {k: v for k, v in rec.items() if k != "record"} for rec in entries]
