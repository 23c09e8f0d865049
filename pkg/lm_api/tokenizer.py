# lm_api/tokenizer.py
"""
Word-level tokenization used by the reference model.

Text is lowercased and split on whitespace, with punctuation split off as
separate tokens; detokenization joins surfaces with single spaces:

    "The cat sat."  ->  [the, cat, sat, .]  ->  "the cat sat ."
"""

from __future__ import annotations

import re
from typing import List, Sequence

WORD_PATTERN = re.compile(r"\w+(?:'\w+)*|[^\w\s]")


def split_words(text: str) -> List[str]:
    return WORD_PATTERN.findall(text.lower())


def join_words(surfaces: Sequence[str]) -> str:
    return " ".join(surfaces)
