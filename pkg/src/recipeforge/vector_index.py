"""Embedding index over feature cards and recipe chunks, with on-disk caching."""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import gateway
from .errors import ParseError
from .knowledge import (KnowledgeStore, RecipeChunk, ReferenceBundle, ReferenceItem, chunk_recipe, excluded,
                        feature_card)
from .prompts import role_preamble
from .repo import RepoMetadata

log = logging.getLogger(__name__)

BATCH = 64


@dataclass
class IndexEntry:
    package: str
    kind: str  # "card" or a chunk kind
    text: str
    embed_text: str = ""  # what was sent to the embedder, when it differs from text


@dataclass
class EmbeddingIndex:
    entries: list[IndexEntry]
    vectors: np.ndarray  # rows L2-normalized (zero rows stay zero)
    cache_key: str
    cache_hit: bool = False
    flags: list[str] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.entries)

    def similarities(self, query: np.ndarray) -> np.ndarray:
        q = np.asarray(query, dtype=np.float64)
        norm = np.linalg.norm(q)
        if norm == 0 or not len(self.entries):
            return np.zeros(len(self.entries))
        return self.vectors @ (q / norm)

    def nearest(self, query: np.ndarray, k: int = 1) -> list[int]:
        sims = self.similarities(query)
        # stable: ties resolved by insertion order
        order = sorted(range(len(sims)), key=lambda i: (-sims[i], i))
        return order[:k]


def _normalize_rows(m: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(m, axis=1, keepdims=True)
    norms[norms == 0] = 1.0
    return m / norms


def _collect_entries(store: KnowledgeStore) -> tuple[list[IndexEntry], list[str]]:
    entries: list[IndexEntry] = []
    flags: list[str] = []
    for name, node in store.nodes.items():
        entries.append(IndexEntry(name, "card", feature_card(node)))
        try:
            chunks: list[RecipeChunk] = chunk_recipe(node.recipe_text, name)
        except ParseError:
            flags.append(f"unchunkable:{name}")
            continue
        # chunks are embedded together with their class line for context
        entries += [IndexEntry(name, c.kind, c.text, c.embedding_text) for c in chunks]
    return entries, flags


def build_embedding_index(store: KnowledgeStore, embedder: gateway.ModelHandle,
                          cache_dir: str | Path | None = None) -> EmbeddingIndex:
    """Embed every feature card and recipe chunk.

    The cache key combines the corpus content hash with the embedder
    identity; a matching cache file is loaded without any embedding call.
    """
    key = hashlib.sha256(f"{store.content_hash()}|{embedder.identity}".encode()).hexdigest()
    paths = None
    if cache_dir is not None:
        root = Path(cache_dir)
        root.mkdir(parents=True, exist_ok=True)
        paths = (root / f"{key}.npy", root / f"{key}.json")
        if paths[0].exists() and paths[1].exists():
            meta = json.loads(paths[1].read_text())
            entries = [IndexEntry(**e) for e in meta["entries"]]
            vectors = np.load(paths[0])
            log.info("embedding index cache hit %s", key[:12])
            return EmbeddingIndex(entries, vectors, key, True, list(meta.get("flags", [])))

    entries, flags = _collect_entries(store)
    texts = [e.embed_text or e.text for e in entries]
    rows: list[list[float]] = []
    for start in range(0, len(texts), BATCH):
        batch = gateway.embed(embedder, texts[start: start + BATCH])
        flags += [f"empty_text:{entries[start + i].package}" for i in batch.flagged]
        rows += list(batch)
    vectors = _normalize_rows(np.asarray(rows, dtype=np.float64)) if rows else np.zeros((0, 0))
    index = EmbeddingIndex(entries, vectors, key, False, flags)
    if paths is not None:
        np.save(paths[0], vectors)
        paths[1].write_text(json.dumps({"entries": [vars(e) for e in entries], "flags": flags}))
    return index


def embedding_query(target: RepoMetadata) -> str:
    """Fixed field order keeps the query (and any cache keyed on it) stable."""
    return (f"deps: {', '.join(sorted(target.dependency_hints))}; "
            f"build: {target.build_system}; "
            f"flags: {', '.join(sorted(target.build_options | target.feature_hints))}")


def retrieve_by_embedding(target: RepoMetadata, index: EmbeddingIndex, embedder: gateway.ModelHandle,
                          top_k: int = 2, chunks_per_package: int = 2, char_budget: int = 12_000) -> ReferenceBundle:
    """Rank packages by their best-matching card or chunk.

    Each returned package contributes its ``chunks_per_package`` most
    similar chunks (the card if it has none), within ``char_budget``.
    """
    if top_k < 1:
        raise ValueError("top_k must be >= 1")
    query = gateway.embed(embedder, [embedding_query(target)])[0]
    sims = index.similarities(np.asarray(query))
    best: dict[str, float] = {}
    skip: set[str] = set()
    for i, entry in enumerate(index.entries):
        if excluded(entry.package, target.package_name):
            skip.add(entry.package)
            continue
        best[entry.package] = max(best.get(entry.package, -np.inf), float(sims[i]))
    ranked = sorted(best, key=lambda p: (-best[p], p))[:top_k]
    items = []
    remaining = char_budget
    for pkg in ranked:
        scored = sorted(((float(sims[i]), i) for i, e in enumerate(index.entries)
                         if e.package == pkg and e.kind != "card"), key=lambda t: (-t[0], t[1]))
        picks = [i for _, i in scored[:chunks_per_package]]
        if not picks:
            picks = [i for i, e in enumerate(index.entries) if e.package == pkg and e.kind == "card"]
        texts, kinds = [], []
        for i in picks:
            text = index.entries[i].text
            if len(text) > remaining:
                continue
            remaining -= len(text)
            texts.append(text)
            kinds.append(index.entries[i].kind)
        if texts:
            items.append(ReferenceItem(pkg, texts, role_preamble("embedding"), best[pkg], kinds))
    flags = []
    if len(items) < top_k:
        flags.append("insufficient_candidates")
    return ReferenceBundle("embedding", items, frozenset(skip), flags)
