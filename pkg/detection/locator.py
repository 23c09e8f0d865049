# detection/locator.py
"""
Sliding-window localization.

Every token's rank is re-computed once with all text to its left as
conditioning; a window [t, t+W) then reads W consecutive ranks, which is the
same series a per-window re-computation would produce. Each window is run
through the detector with N = W and a token is labelled watermarked when at
least one positive window covers it.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

from detection.detector import DetectionResult, detect
from detection.spectrum import SeriesLike, as_series_array
from errors import TextTooShort
from lm_api.base import Provider, ProviderConfig, Token
from signal_pattern.pattern import PatternSpec
from watermark.recompute import RankSeries, recompute_ranks

logger = logging.getLogger(__name__)

DEFAULT_WINDOW = 10
DEFAULT_STRIDE = 1


@dataclass
class WindowVerdicts:
    window: int
    stride: int
    starts: List[int]
    results: List[DetectionResult]
    labels: List[bool]
    ranks: List[int] = field(default_factory=list)

    @property
    def positive_windows(self) -> int:
        return sum(r.verdict for r in self.results)

    def to_dict(self) -> Dict:
        return {
            "window": self.window,
            "stride": self.stride,
            "starts": list(self.starts),
            "results": [r.to_dict() for r in self.results],
            "labels": [bool(x) for x in self.labels],
            "ranks": list(self.ranks),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def locate_series(
    series: SeriesLike,
    key: PatternSpec,
    window: int = DEFAULT_WINDOW,
    stride: int = DEFAULT_STRIDE,
    tau: Optional[float] = None,
    offset: int = 0,
) -> WindowVerdicts:
    """
    Window detection over an already re-computed rank series. ``offset`` is
    the number of leading text tokens that have no rank (the seed token when
    the text came without context); they are always labelled False.
    """
    if window < 4 or stride < 1:
        raise ValueError(f"window must be >= 4 and stride >= 1, got {window}/{stride}")

    x = as_series_array(series)
    if len(x) < window:
        raise TextTooShort(f"{len(x)} ranked tokens cannot fill a {window}-token window")

    starts = list(range(0, len(x) - window + 1, stride))
    results = [detect(x[t : t + window], key, tau=tau, min_cycles=1) for t in starts]

    labels = [False] * (offset + len(x))
    for t, res in zip(starts, results):
        if res.verdict:
            for i in range(offset + t, offset + t + window):
                labels[i] = True

    logger.debug("%d of %d windows positive", sum(r.verdict for r in results), len(results))
    return WindowVerdicts(window, stride, starts, results, labels, [int(r) for r in x])


def locate(
    text: Sequence[Token],
    context: Sequence[Token],
    key: PatternSpec,
    config: ProviderConfig,
    window: int = DEFAULT_WINDOW,
    stride: int = DEFAULT_STRIDE,
    tau: Optional[float] = None,
    provider: Optional[Provider] = None,
    suppress_eos: bool = True,
) -> WindowVerdicts:
    if len(text) < window:
        raise TextTooShort(f"Text of {len(text)} tokens is shorter than the {window}-token window")

    series: RankSeries = recompute_ranks(text, context, config, provider, suppress_eos)
    offset = len(text) - len(series)
    return locate_series(series, key, window, stride, tau, offset)
