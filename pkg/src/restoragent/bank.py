"""The self-evolving tool portrait bank.

Insights (degradation info, tool, subjective evaluation, verdict) are
persisted as append-only JSONL and segmented into overlapping chunks for
retrieval.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, asdict

from .core import RestorationTask
from .errors import InvalidParam, StorageError

DEFAULT_MAX_CHUNK_CHARS = 512
DEFAULT_OVERLAP_CHARS = 64

_BOUNDARY_CHARS = ".!?\n"


@dataclass(frozen=True)
class Insight:
    insight_id: int
    degradation_info: str
    tool_id: str
    subjective_eval: str
    verdict: int  # 0 | 1
    task: RestorationTask
    timestamp: float
    objective_delta: float

    def __post_init__(self):
        if self.verdict not in (0, 1):
            raise InvalidParam(f"verdict must be 0 or 1, got {self.verdict}")

    def canonical_text(self) -> str:
        return (
            f"DEGRADATION: {self.degradation_info}\n"
            f"TOOL: {self.tool_id}\n"
            f"EVAL: {self.subjective_eval}\n"
            f"VERDICT: {self.verdict}"
        )

    def to_json_obj(self) -> dict:
        obj = asdict(self)
        obj["task"] = int(self.task)
        return obj

    @classmethod
    def from_json_obj(cls, obj: dict) -> "Insight":
        return cls(
            insight_id=int(obj["insight_id"]),
            degradation_info=obj["degradation_info"],
            tool_id=obj["tool_id"],
            subjective_eval=obj["subjective_eval"],
            verdict=int(obj["verdict"]),
            task=RestorationTask.from_code(int(obj["task"])),
            timestamp=float(obj["timestamp"]),
            objective_delta=float(obj["objective_delta"]),
        )


@dataclass(frozen=True)
class Chunk:
    chunk_id: tuple  # (insight_id, ordinal)
    text: str
    source: int  # insight_id


def chunk_insight(
    insight: Insight,
    max_chunk_chars: int = DEFAULT_MAX_CHUNK_CHARS,
    overlap_chars: int = DEFAULT_OVERLAP_CHARS,
) -> list[Chunk]:
    """Split the canonical text at sentence/newline boundaries.

    A split lands just after the last boundary char at or before
    max_chunk_chars (hard split if none); overlap_chars from the tail of
    each chunk are repeated at the head of the next.
    """
    if max_chunk_chars < 64:
        raise InvalidParam(f"max_chunk_chars {max_chunk_chars} < 64")
    if not 0 <= overlap_chars < max_chunk_chars:
        raise InvalidParam(
            f"overlap_chars {overlap_chars} outside [0, {max_chunk_chars})"
        )
    text = insight.canonical_text()
    chunks: list[Chunk] = []
    start = 0
    ordinal = 0
    while True:
        if len(text) - start <= max_chunk_chars:
            chunks.append(Chunk((insight.insight_id, ordinal), text[start:], insight.insight_id))
            break
        window = text[start : start + max_chunk_chars]
        split = -1
        for i in range(len(window) - 1, -1, -1):
            if window[i] in _BOUNDARY_CHARS:
                split = start + i + 1
                break
        if split <= start:
            split = start + max_chunk_chars
        chunks.append(Chunk((insight.insight_id, ordinal), text[start:split], insight.insight_id))
        ordinal += 1
        next_start = split - overlap_chars
        start = next_start if next_start > start else split
    return chunks


class InsightBank:
    """Append-only JSONL store; single writer, snapshot readers."""

    def __init__(self, path=None):
        self.path = path
        self._insights: list[Insight] = []
        if path is not None and os.path.exists(path):
            self._load()

    def _load(self):
        try:
            with open(self.path, "r", encoding="utf-8") as fh:
                for lineno, line in enumerate(fh, 1):
                    line = line.strip()
                    if not line:
                        continue
                    try:
                        self._insights.append(Insight.from_json_obj(json.loads(line)))
                    except (json.JSONDecodeError, KeyError, ValueError) as exc:
                        raise StorageError(f"{self.path}:{lineno}: bad record: {exc}") from exc
        except OSError as exc:
            raise StorageError(f"{self.path}: {exc}") from exc
        ids = [i.insight_id for i in self._insights]
        if ids != sorted(set(ids)):
            raise StorageError(f"{self.path}: insight_ids not strictly increasing")

    def next_id(self) -> int:
        return (self._insights[-1].insight_id + 1) if self._insights else 1

    def append_insight(self, insight: Insight) -> int:
        """Durably append; the insight's id must equal next_id()."""
        if insight.insight_id != self.next_id():
            raise InvalidParam(
                f"expected insight_id {self.next_id()}, got {insight.insight_id}"
            )
        if self.path is not None:
            try:
                with open(self.path, "a", encoding="utf-8") as fh:
                    fh.write(json.dumps(insight.to_json_obj(), sort_keys=True) + "\n")
                    fh.flush()
                    os.fsync(fh.fileno())
            except OSError as exc:
                raise StorageError(f"{self.path}: {exc}") from exc
        self._insights.append(insight)
        return insight.insight_id

    def record(
        self,
        degradation_info: str,
        tool_id: str,
        subjective_eval: str,
        verdict: int,
        task: RestorationTask,
        timestamp: float,
        objective_delta: float,
    ) -> Insight:
        """Build an insight with the next id and append it."""
        insight = Insight(
            insight_id=self.next_id(),
            degradation_info=degradation_info,
            tool_id=tool_id,
            subjective_eval=subjective_eval,
            verdict=verdict,
            task=task,
            timestamp=timestamp,
            objective_delta=objective_delta,
        )
        self.append_insight(insight)
        return insight

    @property
    def insights(self) -> tuple:
        return tuple(self._insights)

    def get(self, insight_id: int) -> Insight:
        for ins in self._insights:
            if ins.insight_id == insight_id:
                return ins
        raise KeyError(insight_id)

    def filter_by_task(self, task: RestorationTask) -> list[Insight]:
        return [i for i in self._insights if i.task == task]

    def __len__(self):
        return len(self._insights)
