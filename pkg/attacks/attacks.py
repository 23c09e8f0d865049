# attacks/attacks.py
"""
Text transformations used to stress the detector: copy-paste, token
substitution and span paraphrase. Each produces a LabeledText carrying the
gold per-token labels (True = watermarked) and a provenance entry per token:
the index the token had in the input, or a marker for replaced tokens.

Substituter and paraphraser are plain callables, so a masked-LM or
seq2seq attacker can be plugged in; the defaults run on the provider.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, replace
from typing import Callable, Dict, List, Optional, Sequence, Union

import numpy as np

from errors import EmptyText, InvalidAttack
from lm_api.base import Provider, ProviderConfig, Token, build_provider
from watermark.encoder import generate_plain

logger = logging.getLogger(__name__)

SUBSTITUTED = "substituted"
PARAPHRASED = "paraphrased"
DEFAULT_SPAN_LEN = 10

Provenance = Union[int, str]
# (tokens, position) -> replacement token
Substituter = Callable[[Sequence[Token], int], Token]
# (left context, span) -> replacement span
Paraphraser = Callable[[Sequence[Token], Sequence[Token]], List[Token]]


@dataclass
class LabeledText:
    tokens: List[Token]
    labels: List[bool]
    provenance: List[Provenance]

    def __post_init__(self) -> None:
        if not (len(self.tokens) == len(self.labels) == len(self.provenance)):
            raise InvalidAttack(
                f"tokens/labels/provenance lengths differ: "
                f"{len(self.tokens)}/{len(self.labels)}/{len(self.provenance)}"
            )

    def __len__(self) -> int:
        return len(self.tokens)

    @classmethod
    def unattacked(cls, tokens: Sequence[Token], label: bool) -> "LabeledText":
        return cls(list(tokens), [label] * len(tokens), list(range(len(tokens))))

    def to_dict(self) -> Dict:
        return {
            "tokens": [[t.id, t.surface] for t in self.tokens],
            "labels": [bool(x) for x in self.labels],
            "provenance": list(self.provenance),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), ensure_ascii=False, sort_keys=True)

    @classmethod
    def from_dict(cls, d: Dict) -> "LabeledText":
        return cls(
            tokens=[Token(int(i), s) for i, s in d["tokens"]],
            labels=[bool(x) for x in d["labels"]],
            provenance=[p if isinstance(p, str) else int(p) for p in d["provenance"]],
        )


def _check_fraction(fraction: float) -> None:
    if not 0.0 <= fraction <= 1.0:
        raise InvalidAttack(f"fraction must be in [0, 1], got {fraction}")


# ---------------------------------------------------------------
# Copy-paste
# ---------------------------------------------------------------
def copy_paste(
    human: Sequence[Token],
    watermarked: Union[Sequence[Token], LabeledText],
) -> LabeledText:
    """
    Human tokens followed by watermarked ones. An already attacked LabeledText
    keeps its labels and replacement markers; its indices shift past the
    human segment.
    """
    if not isinstance(watermarked, LabeledText):
        watermarked = LabeledText.unattacked(watermarked, True)
    if not human or not len(watermarked):
        raise EmptyText("copy_paste needs non-empty human and watermarked segments")

    shift = len(human)
    return LabeledText(
        tokens=list(human) + list(watermarked.tokens),
        labels=[False] * shift + list(watermarked.labels),
        provenance=list(range(shift))
        + [p + shift if isinstance(p, int) else p for p in watermarked.provenance],
    )


# ---------------------------------------------------------------
# Substitution
# ---------------------------------------------------------------
class ModelSubstituter:
    """Replace a token with the provider's best candidate that differs from it."""

    def __init__(
        self,
        config: ProviderConfig,
        provider: Optional[Provider] = None,
        context: Sequence[Token] = (),
    ) -> None:
        if config.top_k < 2:
            raise InvalidAttack("Substitution needs top_k >= 2 to find an alternative")
        self.config = replace(config, temperature=0.0)
        self.provider = provider or build_provider(config)
        self.context = list(context)

    def __call__(self, tokens: Sequence[Token], position: int) -> Token:
        prefix = self.context + list(tokens[:position]) or [self.provider.eos_token]
        original = tokens[position]
        pool = self.provider.next_pool(prefix, self.config, exclude_eos=True)
        for candidate in pool.tokens:
            if candidate != original:
                return candidate
        raise InvalidAttack(f"No alternative to {original.surface!r} at position {position}")


def substitute(
    text: LabeledText,
    fraction: float,
    substituter: Optional[Substituter] = None,
    seed: int = 0,
    config: Optional[ProviderConfig] = None,
    provider: Optional[Provider] = None,
) -> LabeledText:
    """
    Replace ceil(fraction * N) uniformly chosen positions. Each replacement is
    computed against the unmodified input, so positions are independent.
    """
    _check_fraction(fraction)
    n = len(text)
    count = min(n, math.ceil(round(fraction * n, 9)))
    if count == 0:
        return LabeledText(list(text.tokens), list(text.labels), list(text.provenance))

    substituter = substituter or ModelSubstituter(config or ProviderConfig(), provider)
    rng = np.random.default_rng(seed)
    positions = sorted(int(i) for i in rng.choice(n, size=count, replace=False))

    tokens = list(text.tokens)
    provenance = list(text.provenance)
    for i in positions:
        tokens[i] = substituter(text.tokens, i)
        provenance[i] = SUBSTITUTED

    logger.debug("Substituted %d of %d tokens (seed %d)", count, n, seed)
    return LabeledText(tokens, list(text.labels), provenance)


# ---------------------------------------------------------------
# Paraphrase
# ---------------------------------------------------------------
class GreedyParaphraser:
    """Rewrite a span as the provider's greedy continuation of its left context."""

    def __init__(
        self,
        config: ProviderConfig,
        provider: Optional[Provider] = None,
        context: Sequence[Token] = (),
    ) -> None:
        self.config = replace(config, temperature=0.0)
        self.provider = provider or build_provider(config)
        self.context = list(context)

    def __call__(self, left: Sequence[Token], span: Sequence[Token]) -> List[Token]:
        prompt = self.context + list(left) or [self.provider.eos_token]
        return generate_plain(prompt, self.config, len(span), self.provider).tokens


def paraphrase_spans(
    text: LabeledText,
    fraction: float,
    span_len: int = DEFAULT_SPAN_LEN,
    paraphraser: Optional[Paraphraser] = None,
    seed: int = 0,
    config: Optional[ProviderConfig] = None,
    provider: Optional[Provider] = None,
) -> LabeledText:
    """
    Rewrite round(fraction * N / span_len) non-overlapping span_len-aligned
    blocks, left to right; each rewrite sees the already rewritten text on
    its left. Output tokens of a rewritten span take the majority gold label
    of the span they replace (False on a tie).
    """
    _check_fraction(fraction)
    if span_len < 1:
        raise InvalidAttack(f"span_len must be >= 1, got {span_len}")

    n = len(text)
    blocks = n // span_len
    count = min(blocks, int(round(fraction * n / span_len)))
    if fraction > 0 and count == 0 and blocks > 0:
        count = 1
    if count == 0:
        return LabeledText(list(text.tokens), list(text.labels), list(text.provenance))

    paraphraser = paraphraser or GreedyParaphraser(config or ProviderConfig(), provider)
    rng = np.random.default_rng(seed)
    chosen = set(int(b) for b in rng.choice(blocks, size=count, replace=False))

    tokens: List[Token] = []
    labels: List[bool] = []
    provenance: List[Provenance] = []
    i = 0
    while i < n:
        block = i // span_len
        if block in chosen and i % span_len == 0:
            span = text.tokens[i : i + span_len]
            rewritten = list(paraphraser(tokens, span))
            majority = sum(text.labels[i : i + span_len]) * 2 > len(span)
            tokens.extend(rewritten)
            labels.extend([majority] * len(rewritten))
            provenance.extend([PARAPHRASED] * len(rewritten))
            i += span_len
        else:
            tokens.append(text.tokens[i])
            labels.append(text.labels[i])
            provenance.append(text.provenance[i])
            i += 1

    logger.debug("Paraphrased %d spans of %d tokens (seed %d)", count, span_len, seed)
    return LabeledText(tokens, labels, provenance)
