# lm_api/base.py
"""
Shared types for model providers.

A provider is anything that can report, for a token prefix, the ranked top-k
next-token candidates with their natural-log probabilities, and score a given
next token. Two implementations ship with the toolkit:

- ReferenceModel     (lm_api/ngram_model.py)       deterministic n-gram model
- CompletionClient   (lm_api/completion_client.py) OpenAI-style HTTP API
"""

from __future__ import annotations

import logging
import math
import threading
from dataclasses import dataclass, replace
from typing import Dict, Iterator, List, Optional, Protocol, Sequence, Tuple

import numpy as np

logger = logging.getLogger(__name__)

DEFAULT_TOP_K = 5
LOGPROB_FLOOR = math.log(1e-10)

DEFAULT_BASE_URL = "https://api.openai.com/v1"
DEFAULT_MODEL = "gpt-3.5-turbo-instruct"
DEFAULT_API_KEY_ENV = "OPENAI_API_KEY"
DEFAULT_USER_AGENT = "SignalWatermark/0.1"

PROVIDER_KINDS = ("reference", "remote")


@dataclass(frozen=True)
class Token:
    id: int
    surface: str

    def __str__(self) -> str:
        return self.surface


@dataclass(frozen=True)
class CandidatePool:
    position: int
    entries: Tuple[Tuple[Token, float], ...]
    depth: int = DEFAULT_TOP_K

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self) -> Iterator[Tuple[Token, float]]:
        return iter(self.entries)

    @property
    def tokens(self) -> List[Token]:
        return [tok for tok, _ in self.entries]

    def rank_of(self, token: Token) -> Optional[int]:
        """1-based rank of token in this pool, None when absent."""
        for i, (tok, _) in enumerate(self.entries, 1):
            if tok == token:
                return i
        return None

    def at_rank(self, rank: int) -> Token:
        return self.entries[rank - 1][0]

    def to_dict(self) -> Dict:
        return {
            "position": self.position,
            "depth": self.depth,
            "entries": [[tok.id, tok.surface, lp] for tok, lp in self.entries],
        }

    @classmethod
    def from_dict(cls, d: Dict) -> "CandidatePool":
        return cls(
            position=int(d["position"]),
            depth=int(d["depth"]),
            entries=tuple((Token(int(i), s), float(lp)) for i, s, lp in d["entries"]),
        )


@dataclass(frozen=True)
class ProviderConfig:
    kind: str = "reference"
    top_k: int = DEFAULT_TOP_K
    temperature: float = 0.0
    seed: int = 0

    # reference model
    order: int = 3
    corpus_path: Optional[str] = None
    logprob_floor: float = LOGPROB_FLOOR

    # remote endpoint
    base_url: str = DEFAULT_BASE_URL
    model: str = DEFAULT_MODEL
    api_key_env: str = DEFAULT_API_KEY_ENV
    timeout: float = 30.0
    max_retries: int = 3
    backoff_factor: float = 0.5
    max_concurrency: int = 4
    user_agent: str = DEFAULT_USER_AGENT

    def __post_init__(self) -> None:
        if self.kind not in PROVIDER_KINDS:
            raise ValueError(f"Unknown provider kind {self.kind!r}; expected one of {PROVIDER_KINDS}")
        if self.top_k < 1:
            raise ValueError(f"top_k must be >= 1, got {self.top_k}")
        if self.temperature < 0:
            raise ValueError(f"temperature must be >= 0, got {self.temperature}")

    def with_temperature(self, temperature: float) -> "ProviderConfig":
        return replace(self, temperature=temperature)

    def model_key(self) -> Tuple:
        """Fields that identify the underlying model (not the decoding settings)."""
        if self.kind == "reference":
            return (self.kind, self.order, self.corpus_path)
        # transport settings are baked into the client at construction
        return (
            self.kind, self.base_url, self.model, self.api_key_env, self.timeout,
            self.max_retries, self.backoff_factor, self.max_concurrency, self.user_agent,
        )

    def name(self) -> str:
        if self.kind == "reference":
            return f"reference-{self.order}gram"
        return self.model

    def to_dict(self) -> Dict:
        return {
            "kind": self.kind,
            "top_k": self.top_k,
            "temperature": self.temperature,
            "seed": self.seed,
            "order": self.order,
            "corpus_path": self.corpus_path,
            "base_url": self.base_url,
            "model": self.model,
        }

    @classmethod
    def from_dict(cls, d: Dict) -> "ProviderConfig":
        known = {f for f in cls.__dataclass_fields__}
        return cls(**{k: v for k, v in d.items() if k in known})


class Provider(Protocol):
    config: ProviderConfig

    @property
    def eos_token(self) -> Token: ...

    def next_pool(
        self,
        prefix: Sequence[Token],
        config: Optional[ProviderConfig] = None,
        exclude_eos: bool = False,
    ) -> CandidatePool: ...

    def score_token(
        self,
        prefix: Sequence[Token],
        actual: Token,
        config: Optional[ProviderConfig] = None,
    ) -> float: ...

    def tokenize(self, text: str) -> List[Token]: ...

    def detokenize(self, tokens: Sequence[Token]) -> str: ...


# ---------------------------------------------------------------
# Seeded pool ordering
# ---------------------------------------------------------------
def noise_source(seed: int, prefix: Sequence[Token]) -> np.random.Generator:
    """
    Generator keyed on (seed, prefix): the same prefix and seed always give
    the same stream, independent of call order or thread.
    """
    entropy = [abs(int(seed))] + [tok.id + 1 if tok.id >= 0 else 0 for tok in prefix]
    return np.random.default_rng(np.random.SeedSequence(entropy))


def top_k_indices(scores: np.ndarray, k: int) -> np.ndarray:
    """
    Indices of the k largest scores, descending, ties broken by ascending index.
    """
    k = min(k, scores.size)
    if k <= 0:
        return np.empty(0, dtype=int)

    neg = -scores
    kth = np.partition(neg, k - 1)[k - 1]
    candidates = np.flatnonzero(neg <= kth)
    order = np.lexsort((candidates, neg[candidates]))
    return candidates[order[:k]]


def gumbel_top_k(
    logprobs: np.ndarray,
    k: int,
    temperature: float,
    rng: np.random.Generator,
) -> np.ndarray:
    """
    Sample k indices without replacement from softmax(logprobs / temperature).

    Perturbing each scaled log-probability with independent Gumbel noise and
    keeping the k largest is equivalent to sequential sampling without
    replacement; the returned order is the sampled order.
    """
    perturbed = logprobs / temperature + rng.gumbel(size=logprobs.shape)
    return top_k_indices(perturbed, k)


# ---------------------------------------------------------------
# Provider factory
# ---------------------------------------------------------------
_PROVIDERS: Dict[Tuple, "Provider"] = {}
_PROVIDERS_LOCK = threading.Lock()


def build_provider(config: ProviderConfig) -> "Provider":
    """
    Return a provider for config, reusing one already built for the same
    underlying model. Decoding settings (top_k, temperature, seed) travel with
    each call, so one instance serves every config that shares a model.
    """
    key = config.model_key()
    with _PROVIDERS_LOCK:
        provider = _PROVIDERS.get(key)
        if provider is not None:
            return provider

        if config.kind == "reference":
            from lm_api.ngram_model import ReferenceModel

            provider = ReferenceModel.from_corpus(config.corpus_path, config=config)
        else:
            from lm_api.completion_client import CompletionClient

            provider = CompletionClient(config)

        _PROVIDERS[key] = provider
        logger.info("Built %s provider (%s)", config.kind, config.name())
        return provider
