"""Corpus manifest: JSON-lines rows describing audio segments.

Row fields: id, audio_path, domain (human | instrumental | bird | general |
...), annotated (bool), score_path (required when annotated), optional
embedding_path, split (train | dev | test).
"""

from __future__ import annotations

import json
from dataclasses import dataclass

from .errors import DataError, IoError

SPLITS = ("train", "dev", "test")


@dataclass
class ManifestRow:
    id: str
    audio_path: str
    domain: str = "human"
    annotated: bool = False
    score_path: str | None = None
    embedding_path: str | None = None
    split: str = "train"

    def __post_init__(self):
        if self.split not in SPLITS:
            raise DataError(f"row {self.id!r}: split {self.split!r} not in {SPLITS}")
        if self.annotated and not self.score_path:
            raise DataError(f"row {self.id!r}: annotated rows need a score_path")

    def to_json(self) -> str:
        payload = {"id": self.id, "audio_path": self.audio_path,
                   "domain": self.domain, "annotated": self.annotated,
                   "split": self.split}
        if self.score_path:
            payload["score_path"] = self.score_path
        if self.embedding_path:
            payload["embedding_path"] = self.embedding_path
        return json.dumps(payload, sort_keys=True)


def read_manifest(path) -> list[ManifestRow]:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            lines = [ln.strip() for ln in fh if ln.strip()]
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc
    rows = []
    seen = set()
    for i, ln in enumerate(lines):
        try:
            raw = json.loads(ln)
        except json.JSONDecodeError as exc:
            raise DataError(f"{path}:{i + 1}: invalid JSON ({exc})") from exc
        try:
            row = ManifestRow(
                id=str(raw["id"]), audio_path=str(raw["audio_path"]),
                domain=str(raw.get("domain", "human")),
                annotated=bool(raw.get("annotated", False)),
                score_path=raw.get("score_path"),
                embedding_path=raw.get("embedding_path"),
                split=str(raw.get("split", "train")))
        except KeyError as exc:
            raise DataError(f"{path}:{i + 1}: missing field {exc}") from exc
        if row.id in seen:
            raise DataError(f"{path}:{i + 1}: duplicate id {row.id!r}")
        seen.add(row.id)
        rows.append(row)
    return rows


def write_manifest(rows: list[ManifestRow], path) -> None:
    try:
        with open(path, "w", encoding="utf-8") as fh:
            for row in rows:
                fh.write(row.to_json() + "\n")
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


def select(rows: list[ManifestRow], domain: str | None = None,
           annotated: bool | None = None, split: str | None = None,
           human: bool | None = None) -> list[ManifestRow]:
    """Filter rows; `human=False` selects every non-human domain."""
    out = []
    for row in rows:
        if domain is not None and row.domain != domain:
            continue
        if annotated is not None and row.annotated != annotated:
            continue
        if split is not None and row.split != split:
            continue
        if human is not None and (row.domain == "human") != human:
            continue
        out.append(row)
    return out
