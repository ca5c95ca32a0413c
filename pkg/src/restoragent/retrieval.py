"""Embedding, exact cosine top-k retrieval, and tool selection.

The offline reference stack is fully deterministic: a feature-hashing
embedder plus a verdict-weighted selector. HTTP backends slot in for a
real embedding model and a real LLM selector.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np
import requests

from .bank import Chunk, InsightBank, chunk_insight
from .core import RestorationTask, ToolDescriptor
from .errors import BackendUnavailable, DimMismatch, NoCandidateTool, ProtocolError

HASH_DIM = 256
DEFAULT_TOP_K = 5


@dataclass(frozen=True)
class RetrievalQuery:
    degradation_text: str
    task: RestorationTask

    def __post_init__(self):
        if not self.degradation_text:
            raise ValueError("degradation_text must be non-empty")


def _tokens(text: str) -> list[str]:
    out = []
    for word in "".join(c if c.isalnum() else " " for c in text.lower()).split():
        if len(word) < 3:
            out.append(word)
        else:
            out.extend(word[i : i + 3] for i in range(len(word) - 2))
    return out


def hash_embed(text: str) -> np.ndarray:
    """Signed feature hashing of word character-trigrams into 256 buckets.

    L2-normalized; empty text maps to the zero vector.
    """
    vec = np.zeros(HASH_DIM)
    for tok in _tokens(text):
        h = int.from_bytes(hashlib.blake2b(tok.encode("utf-8"), digest_size=8).digest(), "big")
        bucket = h % HASH_DIM
        sign = 1.0 if (h >> 8) & 1 else -1.0
        vec[bucket] += sign
    norm = np.linalg.norm(vec)
    return vec / norm if norm > 0 else vec


class EmbeddingBackend:
    """(text) -> fixed-dimension vector; deterministic per text."""

    dim: int

    def embed(self, text: str) -> np.ndarray:
        raise NotImplementedError


class HashEmbedding(EmbeddingBackend):
    dim = HASH_DIM

    def embed(self, text: str) -> np.ndarray:
        return hash_embed(text)


class HttpEmbedding(EmbeddingBackend):
    """POST /embed {"text": str} -> {"vector": [number]}."""

    def __init__(self, endpoint: str, dim: int, timeout: float = 30.0):
        self.endpoint = endpoint.rstrip("/")
        self.dim = dim
        self.timeout = timeout

    def embed(self, text: str) -> np.ndarray:
        try:
            resp = requests.post(
                self.endpoint + "/embed", json={"text": text}, timeout=self.timeout
            )
        except requests.RequestException as exc:
            raise BackendUnavailable(f"{self.endpoint}: {exc}") from exc
        if resp.status_code != 200:
            raise BackendUnavailable(f"{self.endpoint}: HTTP {resp.status_code}")
        try:
            vec = np.asarray(resp.json()["vector"], dtype=np.float64)
        except (ValueError, KeyError, TypeError) as exc:
            raise ProtocolError(f"{self.endpoint}: bad /embed payload") from exc
        if vec.shape != (self.dim,):
            raise ProtocolError(f"{self.endpoint}: vector shape {vec.shape} != ({self.dim},)")
        return vec


class VectorIndex:
    """Immutable exact-cosine index over chunk vectors."""

    def __init__(self, entries: list[tuple[tuple, np.ndarray]], dim: int):
        self.dim = dim
        ids = [cid for cid, _ in entries]
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate chunk_ids in index")
        for cid, vec in entries:
            if vec.shape != (dim,):
                raise DimMismatch(f"chunk {cid}: vector shape {vec.shape} != ({dim},)")
        self.chunk_ids = ids
        self._matrix = (
            np.stack([vec for _, vec in entries]) if entries else np.zeros((0, dim))
        )
        norms = np.linalg.norm(self._matrix, axis=1)
        self._unit = np.divide(
            self._matrix,
            norms[:, None],
            out=np.zeros_like(self._matrix),
            where=norms[:, None] > 0,
        )

    def __len__(self):
        return len(self.chunk_ids)

    def top_k(self, query: np.ndarray, k: int) -> list[tuple[tuple, float]]:
        """Exact k highest cosine similarities, ties by chunk_id ascending."""
        if query.shape != (self.dim,):
            raise DimMismatch(f"query shape {query.shape} != ({self.dim},)")
        if k < 1:
            raise ValueError(f"k must be >= 1, got {k}")
        qnorm = np.linalg.norm(query)
        if qnorm == 0 or len(self) == 0:
            sims = np.zeros(len(self))
        else:
            sims = self._unit @ (query / qnorm)
        order = sorted(range(len(self)), key=lambda i: (-sims[i], self.chunk_ids[i]))
        return [(self.chunk_ids[i], float(sims[i])) for i in order[:k]]


def build_index(bank: InsightBank, embedder: EmbeddingBackend, **chunk_kwargs) -> tuple[VectorIndex, dict]:
    """Chunk and embed every insight; returns (index, chunk_id -> Chunk)."""
    entries = []
    chunks: dict[tuple, Chunk] = {}
    for insight in bank.insights:
        for chunk in chunk_insight(insight, **chunk_kwargs):
            entries.append((chunk.chunk_id, embedder.embed(chunk.text)))
            chunks[chunk.chunk_id] = chunk
    return VectorIndex(entries, embedder.dim), chunks


def build_prompt(
    query: RetrievalQuery,
    retrieved: list[tuple[Chunk, float]],
    candidates: list[ToolDescriptor],
) -> str:
    """Deterministic selection prompt fed to the selector backend."""
    if not candidates:
        raise NoCandidateTool("no candidate tools for prompt")
    lines = [
        "You select exactly one image-restoration tool.",
        f"DEGRADATION: {query.degradation_text}",
        f"TASK: {query.task.name}",
        "CANDIDATE TOOLS:",
    ]
    for i, tool in enumerate(candidates, 1):
        tasks = ",".join(sorted(t.name for t in tool.supported_tasks))
        lines.append(f"  {i}. {tool.tool_id} (tasks: {tasks})")
    if retrieved:
        lines.append("RETRIEVED INSIGHTS:")
        for i, (chunk, sim) in enumerate(retrieved, 1):
            lines.append(f"  [{i}] similarity={sim:.4f}")
            lines.append("  " + chunk.text.replace("\n", "\n  "))
    else:
        lines.append("RETRIEVED INSIGHTS: none")
    lines.append("Answer with exactly one tool_id from the candidate list.")
    return "\n".join(lines)


def reference_select(
    retrieved: list[tuple[Chunk, float]],
    candidates: list[ToolDescriptor],
    bank: InsightBank,
) -> str:
    """Deterministic selector: score = sum of similarity * (2*verdict - 1)
    over a tool's retrieved chunks; ties go to the smallest tool_id."""
    if not candidates:
        raise NoCandidateTool("no candidate tools")
    scores = {tool.tool_id: 0.0 for tool in candidates}
    for chunk, sim in retrieved:
        insight = bank.get(chunk.source)
        if insight.tool_id in scores:
            scores[insight.tool_id] += sim * (2 * insight.verdict - 1)
    return min(scores, key=lambda tid: (-scores[tid], tid))


class SelectorBackend:
    """(prompt) -> (tool_id, rationale)."""

    def select(self, prompt: str) -> tuple[str, str]:
        raise NotImplementedError


class ReferenceSelector(SelectorBackend):
    """Offline selector backed by reference_select; needs bank context."""

    def __init__(self, bank: InsightBank):
        self.bank = bank
        self._retrieved: list[tuple[Chunk, float]] = []
        self._candidates: list[ToolDescriptor] = []

    def bind(self, retrieved, candidates):
        self._retrieved = retrieved
        self._candidates = candidates

    def select(self, prompt: str) -> tuple[str, str]:
        tool_id = reference_select(self._retrieved, self._candidates, self.bank)
        return tool_id, "verdict-weighted similarity score"


class HttpSelector(SelectorBackend):
    """POST /complete {"prompt": str} -> {"text": str}; first token wins."""

    def __init__(self, endpoint: str, timeout: float = 30.0):
        self.endpoint = endpoint.rstrip("/")
        self.timeout = timeout

    def select(self, prompt: str) -> tuple[str, str]:
        try:
            resp = requests.post(
                self.endpoint + "/complete", json={"prompt": prompt}, timeout=self.timeout
            )
        except requests.RequestException as exc:
            raise BackendUnavailable(f"{self.endpoint}: {exc}") from exc
        if resp.status_code != 200:
            raise BackendUnavailable(f"{self.endpoint}: HTTP {resp.status_code}")
        try:
            text = resp.json()["text"]
        except (ValueError, KeyError, TypeError) as exc:
            raise ProtocolError(f"{self.endpoint}: bad /complete payload") from exc
        tool_id = text.strip().split()[0] if text.strip() else ""
        return tool_id, text


@dataclass(frozen=True)
class Selection:
    tool_id: str
    rationale: str
    fallback_used: bool
    prompt: str
    retrieved: tuple  # ((chunk_id, similarity), ...)


def select_tool(
    query: RetrievalQuery,
    bank: InsightBank,
    index: VectorIndex,
    chunks: dict[tuple, Chunk],
    candidates: list[ToolDescriptor],
    backend: SelectorBackend | None = None,
    embedder: EmbeddingBackend | None = None,
    k: int = DEFAULT_TOP_K,
) -> Selection:
    """Embed the query, retrieve top-k chunks, prompt the backend.

    A backend answer naming an unknown or ineligible tool falls back to
    the deterministic reference selector and flags the selection.
    """
    eligible = [t for t in candidates if query.task in t.supported_tasks]
    if not eligible:
        raise NoCandidateTool(f"no tool supports {query.task.name}")
    embedder = embedder or HashEmbedding()
    hits = index.top_k(embedder.embed(query.degradation_text), k) if len(index) else []
    retrieved = [(chunks[cid], sim) for cid, sim in hits]
    prompt = build_prompt(query, retrieved, eligible)

    if isinstance(backend, ReferenceSelector):
        backend.bind(retrieved, eligible)
    eligible_ids = {t.tool_id for t in eligible}
    fallback = False
    if backend is None:
        tool_id = reference_select(retrieved, eligible, bank)
        rationale = "verdict-weighted similarity score"
    else:
        tool_id, rationale = backend.select(prompt)
        if tool_id not in eligible_ids:
            tool_id = reference_select(retrieved, eligible, bank)
            rationale = f"fallback (backend answered {rationale!r})"
            fallback = True
    return Selection(
        tool_id=tool_id,
        rationale=rationale,
        fallback_used=fallback,
        prompt=prompt,
        retrieved=tuple((cid, sim) for cid, sim in hits),
    )
