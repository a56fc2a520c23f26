"""Inputs for the biased models: lexical-overlap features between sentence
pairs, partial-input encodings, and the deterministic hashed embeddings both
are built on."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import ConfigurationError, InputError

DEFAULT_EMBED_DIM = 16


@dataclass(frozen=True)
class TokenPair:
    """A premise/hypothesis token pair; tokens are lowercased on construction."""

    premise: tuple[str, ...]
    hypothesis: tuple[str, ...]

    def __post_init__(self):
        if not self.premise or not self.hypothesis:
            raise InputError("premise and hypothesis must be nonempty token lists")
        object.__setattr__(self, "premise", tuple(t.lower() for t in self.premise))
        object.__setattr__(self, "hypothesis", tuple(t.lower() for t in self.hypothesis))


@dataclass(frozen=True)
class OverlapFeatures:
    """Hand-crafted overlap statistics between hypothesis and premise.

    all_in = 1 implies fraction_overlap = 1, and subsequence = 1 implies
    all_in = 1; cosine distances aggregate, over hypothesis tokens, the
    closest premise token under the hashed embedding.
    """

    all_in: int
    subsequence: int
    fraction_overlap: float
    mean_cos_dist: float
    max_cos_dist: float

    def as_vector(self) -> np.ndarray:
        return np.array(
            [self.all_in, self.subsequence, self.fraction_overlap, self.mean_cos_dist, self.max_cos_dist],
            dtype=np.float64,
        )


def tokenize(text: str) -> tuple[str, ...]:
    """Whitespace split plus lowercasing; no stemming."""
    return tuple(t.lower() for t in text.split())


def hashed_embedding(token: str, dim: int = DEFAULT_EMBED_DIM, seed: int = 0) -> np.ndarray:
    """Deterministic unit vector for a token, derived from (token bytes, seed)."""
    if not token:
        raise InputError("cannot embed an empty token")
    if dim < 2:
        raise ConfigurationError(f"embedding dimension must be >= 2, got {dim}")
    digest = hashlib.blake2b(f"{seed}:{token}".encode("utf-8"), digest_size=8).digest()
    rng = np.random.default_rng(int.from_bytes(digest, "big"))
    v = rng.standard_normal(dim)
    return v / np.linalg.norm(v)


class EmbeddingTable:
    """Caches hashed embeddings so repeated tokens hash once."""

    def __init__(self, dim: int = DEFAULT_EMBED_DIM, seed: int = 0):
        self.dim = dim
        self.seed = seed
        self._cache: dict[str, np.ndarray] = {}

    def __call__(self, token: str) -> np.ndarray:
        vec = self._cache.get(token)
        if vec is None:
            vec = hashed_embedding(token, self.dim, self.seed)
            self._cache[token] = vec
        return vec


def _is_contiguous_subsequence(needle: Sequence[str], haystack: Sequence[str]) -> bool:
    n, m = len(needle), len(haystack)
    if n > m:
        return False
    needle = tuple(needle)
    return any(tuple(haystack[i : i + n]) == needle for i in range(m - n + 1))


def overlap_features(pair: TokenPair, embedder: Callable[[str], np.ndarray]) -> OverlapFeatures:
    """Compute the overlap feature block for one sentence pair.

    fraction_overlap is over token types (deduplicated), and the cosine
    distance for each hypothesis token is the minimum over premise tokens.
    """
    prem_set = set(pair.premise)
    hyp_set = set(pair.hypothesis)
    all_in = int(hyp_set <= prem_set)
    subsequence = int(_is_contiguous_subsequence(pair.hypothesis, pair.premise))
    fraction = len(hyp_set & prem_set) / len(hyp_set)

    prem_vecs = np.stack([embedder(t) for t in pair.premise])
    dists = []
    for token in pair.hypothesis:
        sims = prem_vecs @ embedder(token)
        dists.append(float(np.min(1.0 - sims)))
    dists = np.array(dists)
    return OverlapFeatures(
        all_in=all_in,
        subsequence=subsequence,
        fraction_overlap=float(fraction),
        mean_cos_dist=float(dists.mean()),
        max_cos_dist=float(dists.max()),
    )


def build_vocab(token_lists: Iterable[Sequence[str]]) -> frozenset[str]:
    """Vocabulary from the training split only."""
    vocab = set()
    for tokens in token_lists:
        vocab.update(tokens)
    return frozenset(vocab)


def max_pool_embedding(
    tokens: Sequence[str],
    embedder: Callable[[str], np.ndarray],
    dim: int,
    vocab: frozenset[str] | None = None,
) -> np.ndarray:
    """Element-wise max over token embeddings; OOV tokens are skipped and an
    all-OOV (or empty) input yields the zero vector."""
    kept = [t for t in tokens if vocab is None or t in vocab]
    if not kept:
        return np.zeros(dim)
    return np.max(np.stack([embedder(t) for t in kept]), axis=0)


def partial_input_features(
    tokens: Sequence[str],
    vocab: frozenset[str],
    dim: int = DEFAULT_EMBED_DIM,
    seed: int = 0,
) -> np.ndarray:
    """Hypothesis-only (claim-only) encoding: max-pooled hashed embeddings."""
    table = EmbeddingTable(dim, seed)
    return max_pool_embedding(tokens, table, dim, vocab)
