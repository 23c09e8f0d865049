# watermark/encoder.py
"""
Watermark embedding.

At every decoding step the provider reports its top-k candidate pool and the
encoder appends the candidate sitting at the rank the pattern prescribes for
that step. The selected token joins the prefix that conditions the next step.
Pool contents are never altered; only the choice among them is.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Union

from errors import EmptyPrompt, InvalidRequest, PatternTooShort
from lm_api.base import CandidatePool, Provider, ProviderConfig, Token, build_provider
from signal_pattern.pattern import Pattern, PatternSpec, format_key, generate_pattern

logger = logging.getLogger(__name__)

DEFAULT_TARGET_LENGTH = 200

PromptLike = Union[str, Sequence[Token]]


@dataclass(frozen=True)
class GenerationRequest:
    prompt: PromptLike
    pattern: Pattern
    config: ProviderConfig = field(default_factory=ProviderConfig)
    target_length: int = DEFAULT_TARGET_LENGTH
    suppress_eos: bool = True


@dataclass
class GenerationRecord:
    prompt_tokens: List[Token]
    tokens: List[Token]
    pools: List[CandidatePool]
    ranks: List[int]
    key: Optional[PatternSpec]
    prompt: str = ""
    text: str = ""
    flags: List[int] = field(default_factory=list)

    def to_dict(self, include_pools: bool = False) -> Dict:
        d = {
            "prompt": self.prompt,
            "text": self.text,
            "key": format_key(self.key) if self.key else None,
            "ranks": list(self.ranks),
            "flags": list(self.flags),
            "prompt_tokens": [[t.id, t.surface] for t in self.prompt_tokens],
            "tokens": [[t.id, t.surface] for t in self.tokens],
        }
        if include_pools:
            d["pools"] = [p.to_dict() for p in self.pools]
        return d

    def to_json(self, include_pools: bool = False) -> str:
        return json.dumps(self.to_dict(include_pools=include_pools), ensure_ascii=False, sort_keys=True)

    @classmethod
    def from_dict(cls, d: Dict) -> "GenerationRecord":
        from signal_pattern.pattern import parse_key

        return cls(
            prompt_tokens=[Token(int(i), s) for i, s in d.get("prompt_tokens", [])],
            tokens=[Token(int(i), s) for i, s in d.get("tokens", [])],
            pools=[CandidatePool.from_dict(p) for p in d.get("pools", [])],
            ranks=list(d.get("ranks", [])),
            key=parse_key(d["key"]) if d.get("key") else None,
            prompt=d.get("prompt", ""),
            text=d.get("text", ""),
            flags=list(d.get("flags", [])),
        )


# ---------------------------------------------------------------
# Pool selection shared with re-computation
# ---------------------------------------------------------------
def selection_pool(
    provider: Provider,
    prefix: Sequence[Token],
    config: ProviderConfig,
    suppress_eos: bool = True,
) -> CandidatePool:
    """The pool a step chooses from: top-k after end-of-sequence removal."""
    return provider.next_pool(prefix, config, exclude_eos=suppress_eos)


def _prompt_tokens(prompt: PromptLike, provider: Provider) -> List[Token]:
    tokens = provider.tokenize(prompt) if isinstance(prompt, str) else list(prompt)
    if not tokens:
        raise EmptyPrompt("Prompt must tokenize to at least one token")
    return tokens


def _decode(
    prompt_tokens: List[Token],
    schedule: Sequence[int],
    config: ProviderConfig,
    provider: Provider,
    suppress_eos: bool,
) -> tuple:
    prefix = list(prompt_tokens)
    tokens: List[Token] = []
    pools: List[CandidatePool] = []
    ranks: List[int] = []
    flags: List[int] = []

    for i, wanted in enumerate(schedule):
        pool = selection_pool(provider, prefix, config, suppress_eos)
        if not len(pool):
            raise InvalidRequest(f"Provider returned an empty pool at step {i}")

        rank = wanted
        if len(pool) < wanted:
            rank = len(pool)
            flags.append(i)
            logger.warning(
                "Step %d: pool has %d entries, pattern asks for rank %d; using rank %d",
                i, len(pool), wanted, rank,
            )

        token = pool.at_rank(rank)
        logger.debug("Step %d: rank %d -> %r", i, rank, token.surface)

        tokens.append(token)
        pools.append(pool)
        ranks.append(rank)
        prefix.append(token)

    return tokens, pools, ranks, flags


# ---------------------------------------------------------------
# Public API
# ---------------------------------------------------------------
def generate_watermarked(req: GenerationRequest, provider: Optional[Provider] = None) -> GenerationRecord:
    provider = provider or build_provider(req.config)
    spec = req.pattern.spec

    if req.target_length < 1:
        raise InvalidRequest(f"target_length must be >= 1, got {req.target_length}")
    if len(req.pattern) < req.target_length:
        raise PatternTooShort(
            f"Pattern covers {len(req.pattern)} tokens but {req.target_length} were requested"
        )
    if req.config.top_k < spec.amplitude_max:
        raise InvalidRequest(
            f"top_k={req.config.top_k} is smaller than the pattern amplitude {spec.amplitude_max}"
        )

    prompt_tokens = _prompt_tokens(req.prompt, provider)
    schedule = req.pattern.ranks[: req.target_length]

    tokens, pools, ranks, flags = _decode(
        prompt_tokens, schedule, req.config, provider, req.suppress_eos
    )

    if flags:
        logger.warning("%d of %d steps fell back to a shallower rank", len(flags), len(schedule))

    return GenerationRecord(
        prompt_tokens=prompt_tokens,
        tokens=tokens,
        pools=pools,
        ranks=ranks,
        key=spec,
        prompt=provider.detokenize(prompt_tokens),
        text=provider.detokenize(tokens),
        flags=flags,
    )


def generate_plain(
    prompt: PromptLike,
    config: ProviderConfig,
    target_length: int = DEFAULT_TARGET_LENGTH,
    provider: Optional[Provider] = None,
    suppress_eos: bool = True,
) -> GenerationRecord:
    """
    Rank-1 decoding: greedy at temperature 0, first entry of the sampled
    order above it. Produces the no-watermark controls.
    """
    provider = provider or build_provider(config)
    ones = generate_pattern(PatternSpec(harmonic=1, amplitude_max=1, length=max(1, target_length)))
    record = generate_watermarked(
        GenerationRequest(prompt, ones, config, target_length, suppress_eos), provider
    )
    record.key = None
    return record
