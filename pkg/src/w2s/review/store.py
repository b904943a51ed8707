"""Durable verdict store for the curation loop.

Verdicts go to an append-only JSON Lines log, flushed and fsynced before
the write is acknowledged; current state is always derivable by replaying
the log over the candidate list. A compacted snapshot is an optimization
only. A torn trailing line (crash mid-write) is ignored on replay.
"""

from __future__ import annotations

import json
import os
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path

VERDICTS = ("accepted", "rejected")


class StoreError(ValueError):
    """Unknown pair, unknown category, or invalid verdict."""


@dataclass
class ReviewItem:
    pair_id: str
    image_path: str
    caption: str
    boxes: list[tuple[float, float, float, float]]
    category: str
    source: str = ""
    width: int = 0
    height: int = 0
    status: str = "pending"
    reviewer: str = ""
    timestamp: float = 0.0
    reason: str = ""
    history: list[dict] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "pair_id": self.pair_id,
            "image_path": self.image_path,
            "caption": self.caption,
            "boxes": [list(b) for b in self.boxes],
            "category": self.category,
            "source": self.source,
            "width": self.width,
            "height": self.height,
            "status": self.status,
            "reviewer": self.reviewer,
            "timestamp": self.timestamp,
            "reason": self.reason,
            "history": list(self.history),
        }

    @classmethod
    def from_candidate(cls, d: dict) -> "ReviewItem":
        return cls(
            pair_id=d["pair_id"],
            image_path=d.get("image_path", ""),
            caption=d.get("caption", ""),
            boxes=[tuple(float(v) for v in b) for b in d.get("boxes", [])],
            category=d.get("category", ""),
            source=d.get("source", ""),
            width=int(d.get("width", 0)),
            height=int(d.get("height", 0)),
        )


class ReviewStore:
    """Single-writer store over a candidate list and a verdict log."""

    def __init__(self, candidates: list[ReviewItem], log_path: str | Path):
        self._lock = threading.Lock()
        self.log_path = Path(log_path)
        self.items: dict[str, ReviewItem] = {}
        for item in candidates:
            if item.pair_id in self.items:
                raise StoreError(f"duplicate pair id {item.pair_id!r}")
            self.items[item.pair_id] = item
        self._seq = 0
        self._replay()
        self.log_path.parent.mkdir(parents=True, exist_ok=True)
        self._log_fh = self.log_path.open("a", encoding="utf-8")

    @classmethod
    def from_candidates_file(cls, candidates_path: str | Path,
                             log_path: str | Path) -> "ReviewStore":
        candidates = []
        with Path(candidates_path).open("r", encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if line:
                    candidates.append(ReviewItem.from_candidate(json.loads(line)))
        return cls(candidates, log_path)

    def _replay(self) -> None:
        if not self.log_path.exists():
            return
        with self.log_path.open("r", encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                try:
                    entry = json.loads(line)
                except json.JSONDecodeError:
                    # torn trailing write from a crash; the verdict was
                    # never acknowledged, so dropping it is correct
                    continue
                self._apply(entry)
                self._seq = max(self._seq, int(entry.get("seq", 0)))

    def _apply(self, entry: dict) -> None:
        item = self.items.get(entry.get("pair_id", ""))
        if item is None:
            return
        item.status = entry["verdict"]
        item.reviewer = entry.get("reviewer", "")
        item.timestamp = float(entry.get("ts", 0.0))
        item.reason = entry.get("reason", "")
        item.history.append(entry)

    def close(self) -> None:
        with self._lock:
            self._log_fh.close()

    def categories(self) -> list[dict]:
        with self._lock:
            counts: dict[str, dict[str, int]] = {}
            for item in self.items.values():
                cell = counts.setdefault(item.category, {"pending": 0, "accepted": 0,
                                                         "rejected": 0, "total": 0})
                cell[item.status] += 1
                cell["total"] += 1
            return [
                {"category": cat, **cell} for cat, cell in sorted(counts.items())
            ]

    def _ordered_items(self, category: str) -> list[ReviewItem]:
        items = [i for i in self.items.values() if i.category == category]
        if not items:
            raise StoreError(f"unknown category {category!r}")
        # pending first, each block in stable pair-id order
        items.sort(key=lambda i: (0 if i.status == "pending" else 1, i.pair_id))
        return items

    def list_candidates(self, category: str, cursor: str | None = None,
                        page_size: int = 20) -> dict:
        if page_size < 1:
            raise StoreError(f"page_size must be >= 1, got {page_size}")
        with self._lock:
            items = self._ordered_items(category)
        offset = 0
        if cursor:
            try:
                offset = int(cursor)
            except ValueError as exc:
                raise StoreError(f"bad cursor {cursor!r}") from exc
        page = items[offset:offset + page_size]
        next_offset = offset + len(page)
        return {
            "items": [i.to_dict() for i in page],
            "cursor": str(next_offset) if next_offset < len(items) else "",
            "total": len(items),
        }

    def record_verdict(self, pair_id: str, verdict: str, reviewer: str,
                       reason: str = "") -> ReviewItem:
        if verdict not in VERDICTS:
            raise StoreError(f"invalid verdict {verdict!r}; expected one of {VERDICTS}")
        with self._lock:
            item = self.items.get(pair_id)
            if item is None:
                raise StoreError(f"unknown pair {pair_id!r}")
            self._seq += 1
            entry = {
                "seq": self._seq,
                "ts": time.time(),
                "pair_id": pair_id,
                "verdict": verdict,
                "reviewer": reviewer,
                "reason": reason,
            }
            # durability before acknowledgement
            self._log_fh.write(json.dumps(entry, sort_keys=True) + "\n")
            self._log_fh.flush()
            os.fsync(self._log_fh.fileno())
            self._apply(entry)
            return item

    def export_test_set(self, per_category_cap: int = 100) -> list[dict]:
        """Accepted items as dataset-format grounding samples tagged Test,
        capped per category in acceptance-time order."""
        with self._lock:
            accepted = [i for i in self.items.values() if i.status == "accepted"]
        def acceptance_key(item: ReviewItem):
            last = item.history[-1] if item.history else {}
            return (last.get("ts", 0.0), last.get("seq", 0), item.pair_id)
        accepted.sort(key=acceptance_key)
        per_cat: dict[str, int] = {}
        out = []
        for item in accepted:
            n = per_cat.get(item.category, 0)
            if n >= per_category_cap:
                continue
            per_cat[item.category] = n + 1
            out.append({
                "id": item.pair_id,
                "image_path": item.image_path,
                "width": item.width,
                "height": item.height,
                "task": "grounding",
                "text": item.caption,
                "boxes": [list(b) for b in item.boxes],
                "caption_kind": "",
                "caption_id": item.pair_id,
                "source": item.source,
                "category": item.category,
                "image_categories": [],
                "splits": ["Test"],
            })
        out.sort(key=lambda d: (d["source"], d["id"]))
        return out

    def snapshot(self, path: str | Path) -> None:
        """Compact the current state for faster cold starts; the log stays
        authoritative."""
        path = Path(path)
        payload = {
            "applied_seq": self._seq,
            "items": {pid: item.to_dict() for pid, item in sorted(self.items.items())},
        }
        tmp = path.with_suffix(".tmp")
        tmp.write_text(json.dumps(payload, sort_keys=True), encoding="utf-8")
        tmp.replace(path)
