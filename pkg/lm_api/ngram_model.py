# lm_api/ngram_model.py
"""
Deterministic n-gram reference model.

Counts trigrams, bigrams and unigrams over a plain-text corpus (one paragraph
per line, every line closed by an end-of-sequence token) and estimates

    p1(w)       = (c(w) + 1) / (N + V)
    p2(w | v)   = (c(v, w) + V * p1(w))     / (c(v, .) + V)
    p3(w | u,v) = (c(u, v, w) + V * p2(w | v)) / (c(u, v, .) + V)

i.e. add-one smoothing where the V pseudo-counts of each order are spread by
the backed-off lower-order estimate instead of uniformly. A context that was
never seen backs off to the next lower order. Every distribution is a pure
function of the last (order - 1) token ids, so a text generated with this
model and later re-computed with it yields identical candidate pools.
"""

from __future__ import annotations

import functools
import logging
from collections import Counter, defaultdict
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np

from errors import EmptyPrefix, EmptyVocabulary
from lm_api.base import (
    CandidatePool,
    ProviderConfig,
    Token,
    gumbel_top_k,
    noise_source,
    top_k_indices,
)
from lm_api.tokenizer import join_words, split_words

logger = logging.getLogger(__name__)

EOS_SURFACE = "</s>"
BUNDLED_CORPUS = Path(__file__).parent / "data" / "reference_corpus.txt"

_Continuations = Tuple[np.ndarray, np.ndarray, float]


def read_corpus_lines(path: Optional[Union[str, Path]] = None) -> List[str]:
    path = Path(path) if path else BUNDLED_CORPUS
    lines = [ln.strip() for ln in path.read_text(encoding="utf-8").splitlines()]
    return [ln for ln in lines if ln]


class ReferenceModel:
    """
    Immutable after construction; safe to share between threads.
    """

    def __init__(
        self,
        sentences: Iterable[Sequence[str]],
        order: int = 3,
        config: Optional[ProviderConfig] = None,
        cache_size: int = 65536,
    ) -> None:
        if order not in (1, 2, 3):
            raise ValueError(f"order must be 1, 2 or 3, got {order}")

        self.order = order
        self.config = config or ProviderConfig(kind="reference", order=order)

        sentences = [list(s) for s in sentences]
        surfaces = sorted({w for s in sentences for w in s} - {EOS_SURFACE})
        if not surfaces:
            raise EmptyVocabulary("Reference corpus contains no tokens")

        self._tokens: List[Token] = [Token(0, EOS_SURFACE)] + [
            Token(i, s) for i, s in enumerate(surfaces, 1)
        ]
        self._index: Dict[str, int] = {t.surface: t.id for t in self._tokens}

        self._build_counts(sentences)
        self._distribution = functools.lru_cache(maxsize=cache_size)(self._compute_distribution)

        logger.info(
            "Reference %d-gram model: %d tokens, vocabulary %d, %d bigram / %d trigram contexts",
            order,
            self._n_tokens,
            self.vocab_size,
            len(self._bigrams),
            len(self._trigrams),
        )

    @classmethod
    def from_corpus(
        cls,
        path: Optional[Union[str, Path]] = None,
        config: Optional[ProviderConfig] = None,
    ) -> "ReferenceModel":
        config = config or ProviderConfig(kind="reference")
        lines = read_corpus_lines(path)
        logger.info("Training reference model on %d corpus lines from %s", len(lines), path or BUNDLED_CORPUS)
        return cls((split_words(ln) for ln in lines), order=config.order, config=config)

    # ---------------------------------------------------------------
    # Counting
    # ---------------------------------------------------------------
    def _build_counts(self, sentences: List[List[str]]) -> None:
        unigrams: Counter = Counter()
        bigrams: Dict[int, Counter] = defaultdict(Counter)
        trigrams: Dict[Tuple[int, int], Counter] = defaultdict(Counter)

        for sent in sentences:
            ids = [self._index[w] for w in sent] + [0]
            unigrams.update(ids)
            for i in range(1, len(ids)):
                bigrams[ids[i - 1]][ids[i]] += 1
            for i in range(2, len(ids)):
                trigrams[(ids[i - 2], ids[i - 1])][ids[i]] += 1

        V = self.vocab_size
        counts = np.zeros(V)
        for tok_id, c in unigrams.items():
            counts[tok_id] = c

        self._n_tokens = int(counts.sum())
        self._p1 = (counts + 1.0) / (self._n_tokens + V)
        self._bigrams = {ctx: self._pack(c) for ctx, c in bigrams.items()}
        self._trigrams = {ctx: self._pack(c) for ctx, c in trigrams.items()}

    @staticmethod
    def _pack(counter: Counter) -> _Continuations:
        ids = np.fromiter(counter.keys(), dtype=int, count=len(counter))
        counts = np.fromiter(counter.values(), dtype=float, count=len(counter))
        return ids, counts, float(counts.sum())

    def _smooth(self, lower: np.ndarray, continuations: _Continuations) -> np.ndarray:
        ids, counts, total = continuations
        V = self.vocab_size
        p = lower * V
        p[ids] += counts
        return p / (total + V)

    def _compute_distribution(self, context: Tuple[int, ...]) -> np.ndarray:
        p = self._p1
        if self.order >= 2 and len(context) >= 1 and context[-1] in self._bigrams:
            p = self._smooth(p, self._bigrams[context[-1]])
            if self.order >= 3 and len(context) >= 2 and context[-2:] in self._trigrams:
                p = self._smooth(p, self._trigrams[context[-2:]])

        logp = np.log(p)
        logp.flags.writeable = False
        return logp

    def logprobs(self, prefix: Sequence[Token]) -> np.ndarray:
        """Temperature-0 log-probabilities of every vocabulary entry after prefix."""
        n = self.order - 1
        context = tuple(t.id for t in prefix[-n:]) if n else ()
        return self._distribution(context)

    # ---------------------------------------------------------------
    # Provider interface
    # ---------------------------------------------------------------
    @property
    def vocab_size(self) -> int:
        return len(self._tokens)

    @property
    def eos_token(self) -> Token:
        return self._tokens[0]

    def token(self, surface: str) -> Token:
        return Token(self._index.get(surface, -1), surface)

    def next_pool(
        self,
        prefix: Sequence[Token],
        config: Optional[ProviderConfig] = None,
        exclude_eos: bool = False,
    ) -> CandidatePool:
        cfg = config or self.config
        if not prefix:
            raise EmptyPrefix("The reference model needs at least one prefix token")

        logp = self.logprobs(prefix)
        scores = logp
        if exclude_eos:
            scores = logp.copy()
            scores[0] = -np.inf

        if cfg.temperature == 0:
            idx = top_k_indices(scores, cfg.top_k)
        else:
            rng = noise_source(cfg.seed, prefix)
            idx = gumbel_top_k(scores, cfg.top_k, cfg.temperature, rng)
        idx = idx[np.isfinite(scores[idx])]

        entries = tuple((self._tokens[i], float(logp[i])) for i in idx)
        return CandidatePool(position=len(prefix), entries=entries, depth=cfg.top_k)

    def score_token(
        self,
        prefix: Sequence[Token],
        actual: Token,
        config: Optional[ProviderConfig] = None,
    ) -> float:
        cfg = config or self.config
        if not 0 <= actual.id < self.vocab_size or self._tokens[actual.id] != actual:
            return cfg.logprob_floor
        return float(self.logprobs(prefix)[actual.id])

    def tokenize(self, text: str) -> List[Token]:
        return [self.token(w) for w in split_words(text)]

    def detokenize(self, tokens: Sequence[Token]) -> str:
        return join_words([t.surface for t in tokens])
