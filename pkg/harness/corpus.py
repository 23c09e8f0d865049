# harness/corpus.py
"""
Corpus ingestion: JSON-lines records split into a prompt and the human
continuation the watermarked text is compared against.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Iterator, List, Optional, Union

import numpy as np

from errors import CorpusFileError, MalformedRecord
from lm_api.base import Provider, Token
from lm_api.ngram_model import read_corpus_lines

logger = logging.getLogger(__name__)

DEFAULT_MIN_TOKENS = 250
DEFAULT_TRIM = 200
BUNDLED_RECORD_TOKENS = 300
BUNDLED_STRIDE = 60


@dataclass
class CorpusSample:
    index: int
    prompt: List[Token]
    completion: List[Token]

    @property
    def source(self) -> List[Token]:
        return self.prompt + self.completion

    def to_dict(self) -> Dict:
        return {
            "index": self.index,
            "prompt": [[t.id, t.surface] for t in self.prompt],
            "completion": [[t.id, t.surface] for t in self.completion],
        }


def split_sample(index: int, tokens: List[Token], trim: int = DEFAULT_TRIM) -> CorpusSample:
    return CorpusSample(index=index, prompt=tokens[:-trim], completion=tokens[-trim:])


def _parse_record(line: str, text_field: str) -> str:
    try:
        obj = json.loads(line)
    except json.JSONDecodeError as e:
        raise MalformedRecord(f"invalid JSON: {e}") from e
    if not isinstance(obj, dict) or not isinstance(obj.get(text_field), str):
        raise MalformedRecord(f"record has no string field {text_field!r}")
    return obj[text_field]


def ingest(
    path: Union[str, Path],
    provider: Provider,
    min_tokens: int = DEFAULT_MIN_TOKENS,
    trim: int = DEFAULT_TRIM,
    seed: Optional[int] = None,
    text_field: str = "text",
) -> Iterator[CorpusSample]:
    """
    Yield samples of at least min_tokens tokens: the last ``trim`` tokens are
    the human completion, the rest the prompt. File order by default; a seed
    shuffles the kept records deterministically.
    """
    if trim < 1 or min_tokens <= trim:
        raise ValueError(f"need 1 <= trim < min_tokens, got trim={trim} min_tokens={min_tokens}")

    try:
        lines = Path(path).read_text(encoding="utf-8").splitlines()
    except OSError as e:
        raise CorpusFileError(f"Cannot read corpus {path}: {e}") from e

    kept: List[List[Token]] = []
    malformed = short = 0
    for lineno, line in enumerate(lines, 1):
        if not line.strip():
            continue
        try:
            text = _parse_record(line, text_field)
        except MalformedRecord as e:
            malformed += 1
            logger.warning("%s:%d skipped: %s", path, lineno, e)
            continue

        tokens = provider.tokenize(text)
        if len(tokens) < min_tokens:
            short += 1
            continue
        kept.append(tokens)

    logger.info(
        "Ingested %d records from %s (%d malformed, %d shorter than %d tokens)",
        len(kept), path, malformed, short, min_tokens,
    )

    order = list(range(len(kept)))
    if seed is not None:
        order = [int(i) for i in np.random.default_rng(seed).permutation(len(kept))]

    for i, k in enumerate(order):
        yield split_sample(i, kept[k], trim)


def bundled_samples(
    provider: Provider,
    record_tokens: int = BUNDLED_RECORD_TOKENS,
    stride: int = BUNDLED_STRIDE,
    trim: int = DEFAULT_TRIM,
    corpus_path: Optional[Union[str, Path]] = None,
) -> Iterator[CorpusSample]:
    """Overlapping fixed-size records cut from the reference corpus, for offline runs."""
    stream: List[Token] = []
    for line in read_corpus_lines(corpus_path):
        stream.extend(provider.tokenize(line))

    starts = range(0, len(stream) - record_tokens + 1, stride)
    logger.info("Cut %d bundled samples of %d tokens", len(starts), record_tokens)
    for i, s in enumerate(starts):
        yield split_sample(i, stream[s : s + record_tokens], trim)
