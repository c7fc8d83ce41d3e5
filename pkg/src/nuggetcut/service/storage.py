"""Disk-backed state for the HTTP service.

Volumes and masks live as content-addressed MetaImage files (the id is a
truncated SHA-256 of the serialized bytes), session metadata in an
append-only JSONL index replayed on startup.  Restarting the service on
the same data directory reproduces the observable state.
"""

from __future__ import annotations

import hashlib
import json
import os
import time
import uuid
from dataclasses import dataclass, field

from ..segmenter import SegmentationParams
from ..volume import (
    BinaryMask,
    Volume,
    mask_bytes,
    mask_from_bytes,
    volume_from_bytes,
)


def _content_id(prefix: str, raw: bytes) -> str:
    return prefix + "-" + hashlib.sha256(raw).hexdigest()[:16]


@dataclass
class SessionRecord:
    session_id: str
    volume_id: str
    params: SegmentationParams
    seed: tuple[float, float, float] | None = None
    border_seeds: list[tuple[float, float, float]] = field(default_factory=list)
    committed_masks: list[str] = field(default_factory=list)
    created: float = 0.0
    updated: float = 0.0

    def to_dict(self) -> dict:
        return {
            "session_id": self.session_id,
            "volume_id": self.volume_id,
            "params": self.params.to_dict(),
            "seed": list(self.seed) if self.seed else None,
            "border_seeds": [list(p) for p in self.border_seeds],
            "committed_masks": list(self.committed_masks),
            "created": self.created,
            "updated": self.updated,
        }

    @staticmethod
    def from_dict(d: dict) -> "SessionRecord":
        return SessionRecord(
            session_id=d["session_id"],
            volume_id=d["volume_id"],
            params=SegmentationParams.from_dict(d["params"]),
            seed=tuple(d["seed"]) if d.get("seed") else None,
            border_seeds=[tuple(p) for p in d.get("border_seeds", [])],
            committed_masks=list(d.get("committed_masks", [])),
            created=d.get("created", 0.0),
            updated=d.get("updated", 0.0),
        )


class Store:
    """Content-addressed volume/mask files plus a session index."""

    def __init__(self, root: str):
        self.root = root
        self.volume_dir = os.path.join(root, "volumes")
        self.mask_dir = os.path.join(root, "masks")
        self.index_path = os.path.join(root, "sessions.jsonl")
        os.makedirs(self.volume_dir, exist_ok=True)
        os.makedirs(self.mask_dir, exist_ok=True)
        self.sessions: dict[str, SessionRecord] = {}
        self._replay()

    def _replay(self) -> None:
        if not os.path.exists(self.index_path):
            return
        with open(self.index_path, "r", encoding="utf-8") as fp:
            for line in fp:
                line = line.strip()
                if not line:
                    continue
                entry = json.loads(line)
                if entry.get("deleted"):
                    self.sessions.pop(entry["session_id"], None)
                else:
                    record = SessionRecord.from_dict(entry)
                    self.sessions[record.session_id] = record

    def _append(self, entry: dict) -> None:
        with open(self.index_path, "a", encoding="utf-8") as fp:
            fp.write(json.dumps(entry) + "\n")

    # -- volumes / masks ----------------------------------------------------

    def put_volume_bytes(self, raw: bytes) -> str:
        volume_from_bytes(raw)  # validate before persisting
        volume_id = _content_id("v", raw)
        path = os.path.join(self.volume_dir, volume_id + ".mhd")
        if not os.path.exists(path):
            with open(path, "wb") as fp:
                fp.write(raw)
        return volume_id

    def has_volume(self, volume_id: str) -> bool:
        return os.path.exists(os.path.join(self.volume_dir,
                                           volume_id + ".mhd"))

    def get_volume(self, volume_id: str) -> Volume:
        path = os.path.join(self.volume_dir, volume_id + ".mhd")
        with open(path, "rb") as fp:
            return volume_from_bytes(fp.read())

    def put_mask(self, mask: BinaryMask) -> str:
        raw = mask_bytes(mask)
        mask_id = _content_id("m", raw)
        path = os.path.join(self.mask_dir, mask_id + ".mhd")
        if not os.path.exists(path):
            with open(path, "wb") as fp:
                fp.write(raw)
        return mask_id

    def has_mask(self, mask_id: str) -> bool:
        return os.path.exists(self.mask_path(mask_id))

    def mask_path(self, mask_id: str) -> str:
        return os.path.join(self.mask_dir, mask_id + ".mhd")

    def get_mask(self, mask_id: str) -> BinaryMask:
        with open(self.mask_path(mask_id), "rb") as fp:
            return mask_from_bytes(fp.read())

    # -- sessions -----------------------------------------------------------

    def create_session(self, volume_id: str,
                       params: SegmentationParams) -> SessionRecord:
        now = time.time()
        record = SessionRecord(
            session_id="s-" + uuid.uuid4().hex[:12],
            volume_id=volume_id,
            params=params,
            created=now,
            updated=now,
        )
        self.sessions[record.session_id] = record
        self._append(record.to_dict())
        return record

    def save_session(self, record: SessionRecord) -> None:
        record.updated = time.time()
        self.sessions[record.session_id] = record
        self._append(record.to_dict())

    def delete_session(self, session_id: str) -> None:
        self.sessions.pop(session_id, None)
        self._append({"session_id": session_id, "deleted": True})
