"""Append-only certification decision log.

Decisions live in a JSON-lines file; the in-memory index is rebuilt by
replaying the log. The effective decision for a segment is the latest
decision from the highest-precedence source (Human > AutoRule). A Human
decision with verdict "Pending" supersedes earlier decisions and sends
the segment back to the review queue (that is how undo works).
"""

from __future__ import annotations

import datetime as _dt
import json
import threading
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

from .. import PxafError


class Verdict(str, Enum):
    CERTIFIED = "Certified"
    REJECTED = "Rejected"
    PENDING = "Pending"       # human undo: supersedes and re-queues


class Source(str, Enum):
    AUTO_RULE = "AutoRule"
    HUMAN = "Human"


class InvalidDecision(PxafError):
    pass


@dataclass
class CertificationDecision:
    segment_id: str
    verdict: Verdict
    directive: int | None = None
    source: Source = Source.AUTO_RULE
    reviewer: str = ""
    timestamp: str = ""
    notes: str = ""
    nonce: str = ""           # client idempotency key (optional)
    seq: int = -1             # assigned by the store on append

    def __post_init__(self):
        self.verdict = Verdict(self.verdict)
        self.source = Source(self.source)
        if self.verdict is Verdict.REJECTED:
            if self.directive is None or not 1 <= int(self.directive) <= 5:
                raise InvalidDecision(
                    f"segment {self.segment_id}: rejected decisions need "
                    f"a directive in 1..5, got {self.directive}")
            self.directive = int(self.directive)
        elif self.directive is not None:
            raise InvalidDecision(
                f"segment {self.segment_id}: directive only valid when rejecting")
        if self.verdict is Verdict.PENDING and self.source is not Source.HUMAN:
            raise InvalidDecision("only human reviewers can re-queue a segment")
        if not self.timestamp:
            self.timestamp = _dt.datetime.now(_dt.timezone.utc).isoformat()

    def to_json(self) -> dict:
        return {"segment_id": self.segment_id, "verdict": self.verdict.value,
                "directive": self.directive, "source": self.source.value,
                "reviewer": self.reviewer, "timestamp": self.timestamp,
                "notes": self.notes, "nonce": self.nonce, "seq": self.seq}

    @staticmethod
    def from_json(doc: dict) -> "CertificationDecision":
        return CertificationDecision(
            segment_id=doc["segment_id"], verdict=doc["verdict"],
            directive=doc.get("directive"), source=doc.get("source", "AutoRule"),
            reviewer=doc.get("reviewer", ""), timestamp=doc.get("timestamp", ""),
            notes=doc.get("notes", ""), nonce=doc.get("nonce", ""),
            seq=doc.get("seq", -1))


_PRECEDENCE = {Source.AUTO_RULE: 0, Source.HUMAN: 1}


class DecisionStore:
    """Single-writer decision log with replayable state."""

    def __init__(self, path: str | Path | None = None):
        self.path = Path(path) if path is not None else None
        self._lock = threading.Lock()
        self._log: list[CertificationDecision] = []
        if self.path is not None and self.path.exists():
            for line in self.path.read_text().splitlines():
                if line.strip():
                    d = CertificationDecision.from_json(json.loads(line))
                    self._log.append(d)

    def append(self, decision: CertificationDecision) -> CertificationDecision:
        with self._lock:
            if decision.nonce:
                for d in self._log:
                    if d.segment_id == decision.segment_id and d.nonce == decision.nonce:
                        return d  # idempotent replay of a retried request
            decision.seq = len(self._log)
            self._log.append(decision)
            if self.path is not None:
                self.path.parent.mkdir(parents=True, exist_ok=True)
                with open(self.path, "a") as f:
                    f.write(json.dumps(decision.to_json()) + "\n")
        return decision

    @property
    def log(self) -> list[CertificationDecision]:
        return list(self._log)

    def effective(self) -> dict[str, CertificationDecision]:
        """Latest decision per segment within source precedence."""
        best: dict[str, CertificationDecision] = {}
        for d in self._log:
            cur = best.get(d.segment_id)
            if cur is None or (_PRECEDENCE[d.source], d.seq) >= \
                    (_PRECEDENCE[cur.source], cur.seq):
                best[d.segment_id] = d
        return best

    def status_of(self, segment_id: str) -> Verdict:
        d = self.effective().get(segment_id)
        return d.verdict if d is not None else Verdict.PENDING

    def decided_ids(self) -> set[str]:
        return {sid for sid, d in self.effective().items()
                if d.verdict is not Verdict.PENDING}
