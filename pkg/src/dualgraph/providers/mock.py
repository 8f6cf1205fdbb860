"""Deterministic providers for tests, fixtures, and offline runs.

The scripted chat provider replays canned responses by first-match on prompt
content; running past the script raises instead of inventing text. Search and
fetch providers serve from fixture dictionaries. The embedding provider hashes
word tokens into a fixed pseudo-random basis, so identical texts embed
identically and texts sharing words are measurably closer than unrelated ones.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .base import (
    FetchError,
    ScriptExhaustedError,
    SearchResult,
    UnmatchedPromptError,
    Providers,
)

__all__ = [
    "ScriptEntry",
    "ScriptedChatProvider",
    "StaticChatProvider",
    "FixtureSearchProvider",
    "FixtureFetchProvider",
    "HashEmbeddingProvider",
    "Fixture",
    "load_fixture",
]


@dataclass
class ScriptEntry:
    """Matches when every substring occurs in the prompt."""

    match: list[str]
    responses: list[str]
    consumed: int = 0

    def matches(self, prompt: str) -> bool:
        return all(s in prompt for s in self.match)

    @property
    def exhausted(self) -> bool:
        return self.consumed >= len(self.responses)


class ScriptedChatProvider:
    def __init__(self, entries: Sequence[ScriptEntry]):
        self.entries = list(entries)
        self.calls: list[str] = []

    def complete(self, prompt: str) -> str:
        self.calls.append(prompt)
        matched_but_spent = False
        for entry in self.entries:
            if entry.matches(prompt):
                if entry.exhausted:
                    matched_but_spent = True
                    continue
                response = entry.responses[entry.consumed]
                entry.consumed += 1
                return response
        head = prompt[:160].replace("\n", " | ")
        if matched_but_spent:
            raise ScriptExhaustedError(f"script exhausted for prompt: {head!r}")
        raise UnmatchedPromptError(f"no script entry matches prompt: {head!r}")


@dataclass
class StaticChatProvider:
    """Always returns the same text; handy for single-call tests."""

    response: str

    def complete(self, prompt: str) -> str:
        return self.response


class FixtureSearchProvider:
    """Serves canned results per exact query string; unknown queries are empty."""

    def __init__(self, results: dict[str, list[SearchResult]]):
        self.results = results

    def search(self, query: str, top_n: int) -> list[SearchResult]:
        return list(self.results.get(query, []))[:top_n]


class FixtureFetchProvider:
    def __init__(self, pages: dict[str, str]):
        self.pages = pages

    def fetch(self, url: str) -> str:
        try:
            return self.pages[url]
        except KeyError:
            raise FetchError(f"no fixture page for {url}") from None


class HashEmbeddingProvider:
    """Seeded bag-of-words embedding with unit-norm output rows."""

    def __init__(self, dim: int = 32, seed: int = 0):
        self.dim = dim
        self.seed = seed
        self._token_cache: dict[str, np.ndarray] = {}

    def _token_vector(self, token: str) -> np.ndarray:
        vec = self._token_cache.get(token)
        if vec is None:
            digest = hashlib.sha256(f"{self.seed}:{token}".encode("utf-8")).digest()
            rng = np.random.default_rng(int.from_bytes(digest[:8], "big"))
            vec = rng.standard_normal(self.dim)
            self._token_cache[token] = vec
        return vec

    def embed(self, texts: Sequence[str]) -> np.ndarray:
        rows = np.zeros((len(texts), self.dim), dtype=float)
        for i, text in enumerate(texts):
            tokens = [t for t in "".join(
                c.lower() if c.isalnum() else " " for c in text
            ).split() if t]
            if not tokens:
                tokens = [""]
            acc = np.zeros(self.dim, dtype=float)
            for t in tokens:
                acc += self._token_vector(t)
            norm = float(np.linalg.norm(acc))
            if norm == 0.0:
                acc = self._token_vector("")
                norm = float(np.linalg.norm(acc))
            rows[i] = acc / norm
        return rows


@dataclass
class Fixture:
    """A self-contained scripted run: providers plus the run it was built for."""

    root_query: str
    variant: str
    config: dict = field(default_factory=dict)
    chat_entries: list[ScriptEntry] = field(default_factory=list)
    search_results: dict[str, list[SearchResult]] = field(default_factory=dict)
    pages: dict[str, str] = field(default_factory=dict)
    embed_dim: int = 32
    embed_seed: int = 0

    def providers(self) -> Providers:
        return Providers(
            chat=ScriptedChatProvider(self.chat_entries),
            search=FixtureSearchProvider(self.search_results),
            fetch=FixtureFetchProvider(self.pages),
            embed=HashEmbeddingProvider(dim=self.embed_dim, seed=self.embed_seed),
        )


def load_fixture(path: str | Path) -> Fixture:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    entries = [
        ScriptEntry(match=list(e["match"]), responses=list(e["responses"]))
        for e in doc["chat_script"]
    ]
    results = {
        query: [
            SearchResult(
                url=r["url"], title=r["title"], snippet=r["snippet"], rank=i
            )
            for i, r in enumerate(rs)
        ]
        for query, rs in doc.get("search_results", {}).items()
    }
    return Fixture(
        root_query=doc["root_query"],
        variant=doc["variant"],
        config=doc.get("config", {}),
        chat_entries=entries,
        search_results=results,
        pages=doc.get("pages", {}),
        embed_dim=doc.get("embed_dim", 32),
        embed_seed=doc.get("embed_seed", 0),
    )
