# watermark/recompute.py
"""
Token probability re-computation.

A read-only autoregressive pass over finished text: for every position the
candidate pool is rebuilt from everything to its left (at temperature 0) and
the rank the actual token holds in that pool is recorded. Tokens missing from
the pool get the sentinel rank k + 1. With no separate context, the first
text token only seeds the model and is not ranked.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence

import numpy as np

from errors import EmptyText
from lm_api.base import Provider, ProviderConfig, Token, build_provider
from watermark.encoder import selection_pool

logger = logging.getLogger(__name__)


@dataclass
class RankSeries:
    ranks: List[int]
    logprobs: List[float] = field(default_factory=list)
    context_len: int = 0

    def __len__(self) -> int:
        return len(self.ranks)

    def as_array(self) -> np.ndarray:
        return np.asarray(self.ranks, dtype=float)

    def to_dict(self) -> Dict:
        return {"ranks": list(self.ranks), "logprobs": list(self.logprobs), "context_len": self.context_len}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, d: Dict) -> "RankSeries":
        return cls(
            ranks=[int(r) for r in d["ranks"]],
            logprobs=[float(lp) for lp in d.get("logprobs", [])],
            context_len=int(d.get("context_len", 0)),
        )


def recompute_ranks(
    text: Sequence[Token],
    context: Sequence[Token],
    config: ProviderConfig,
    provider: Optional[Provider] = None,
    suppress_eos: bool = True,
) -> RankSeries:
    if not text:
        raise EmptyText("Nothing to re-compute: text is empty")

    provider = provider or build_provider(config)
    cfg = replace(config, temperature=0.0)

    prefix = list(context)
    todo = list(text)
    if not prefix:
        prefix.append(todo.pop(0))
    context_len = len(prefix)

    ranks: List[int] = []
    logprobs: List[float] = []
    for actual in todo:
        pool = selection_pool(provider, prefix, cfg, suppress_eos)
        rank = pool.rank_of(actual)
        ranks.append(rank if rank is not None else cfg.top_k + 1)
        logprobs.append(provider.score_token(prefix, actual, cfg))
        prefix.append(actual)

    logger.debug("Re-computed %d ranks (context %d tokens)", len(ranks), context_len)
    return RankSeries(ranks=ranks, logprobs=logprobs, context_len=context_len)


def perplexity_from_logprobs(logprobs: Sequence[float]) -> float:
    if not len(logprobs):
        raise EmptyText("Perplexity needs at least one scored token")
    return float(np.exp(-np.mean(logprobs)))


def perplexity(
    text: Sequence[Token],
    context: Sequence[Token],
    config: ProviderConfig,
    provider: Optional[Provider] = None,
) -> float:
    provider = provider or build_provider(config)
    cfg = replace(config, temperature=0.0)

    prefix = list(context)
    todo = list(text)
    if not prefix and todo:
        prefix.append(todo.pop(0))

    logprobs = []
    for actual in todo:
        logprobs.append(provider.score_token(prefix, actual, cfg))
        prefix.append(actual)
    return perplexity_from_logprobs(logprobs)
