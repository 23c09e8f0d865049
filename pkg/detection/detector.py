# detection/detector.py
"""
Peak-frequency watermark detection and multi-key classification.

delta = |peak frequency - key frequency|, score = sigmoid(-delta) in (0, 0.5],
and the verdict is delta <= tau. Frequencies are compared as exact fractions
so a peak landing on the key's bin gives delta exactly 0.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from fractions import Fraction
from typing import Dict, Optional, Sequence

from scipy.special import expit

from detection.spectrum import SeriesLike, Spectrum, as_series_array, spectrum
from errors import DuplicateKeyFrequency, EmptyKeySet, SeriesTooShort
from signal_pattern.pattern import PatternSpec, format_key, parse_key

logger = logging.getLogger(__name__)

DEFAULT_MIN_CYCLES = 2


def half_bin(n: int) -> float:
    return 1.0 / (2 * n)


@dataclass(frozen=True)
class DetectionResult:
    peak_frequency: float
    delta: float
    score: float
    verdict: bool
    tau: float
    n: int
    matched_key: Optional[PatternSpec] = None

    @property
    def has_peak(self) -> bool:
        return self.peak_frequency > 0.0

    def to_dict(self) -> Dict:
        return {
            "peak_frequency": self.peak_frequency,
            "delta": self.delta,
            "score": self.score,
            "verdict": self.verdict,
            "tau": self.tau,
            "n": self.n,
            "matched_key": format_key(self.matched_key) if self.matched_key else None,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, d: Dict) -> "DetectionResult":
        return cls(
            peak_frequency=float(d["peak_frequency"]),
            delta=float(d["delta"]),
            score=float(d["score"]),
            verdict=bool(d["verdict"]),
            tau=float(d["tau"]),
            n=int(d["n"]),
            matched_key=parse_key(d["matched_key"]) if d.get("matched_key") else None,
        )


def score_from_delta(delta: float) -> float:
    return float(expit(-delta))


def _check_length(n: int, samples_per_period: int, min_cycles: int) -> None:
    needed = max(4, min_cycles * samples_per_period)
    if n < needed:
        raise SeriesTooShort(
            f"Series of {n} tokens is too short: need {needed} "
            f"({min_cycles} cycles of {samples_per_period} tokens)"
        )


def _result(
    spec: Spectrum,
    key_frequency: Fraction,
    tau: float,
    key: Optional[PatternSpec],
    flat_is_peakless: bool = True,
) -> DetectionResult:
    peak = spec.peak_frequency(flat_is_peakless)
    if peak is None:
        # no tone: report the distance from zero frequency and never a positive verdict
        delta = float(key_frequency)
        return DetectionResult(0.0, delta, score_from_delta(delta), False, tau, spec.n, key)

    delta = float(abs(peak - key_frequency))
    return DetectionResult(float(peak), delta, score_from_delta(delta), delta <= tau, tau, spec.n, key)


def detect(
    series: SeriesLike,
    key: PatternSpec,
    tau: Optional[float] = None,
    min_cycles: int = DEFAULT_MIN_CYCLES,
    flat_is_peakless: bool = True,
) -> DetectionResult:
    key.validate()
    x = as_series_array(series)
    _check_length(len(x), key.samples_per_period, min_cycles)
    tau = half_bin(len(x)) if tau is None else float(tau)

    result = _result(spectrum(x), key.frequency, tau, key, flat_is_peakless)
    logger.debug(
        "detect N=%d key=%s peak=%.4f delta=%.4f verdict=%s",
        result.n, key.label(), result.peak_frequency, result.delta, result.verdict,
    )
    return result


def classify(
    series: SeriesLike,
    keys: Sequence[PatternSpec],
    tau: Optional[float] = None,
    min_cycles: int = DEFAULT_MIN_CYCLES,
    flat_is_peakless: bool = True,
) -> DetectionResult:
    """Match the series' peak to the closest key frequency (first key on ties)."""
    if not keys:
        raise EmptyKeySet("classify needs at least one key")

    seen = {}
    for key in keys:
        key.validate()
        if key.frequency in seen:
            raise DuplicateKeyFrequency(
                f"Keys {seen[key.frequency].label()} and {key.label()} share frequency {key.frequency}"
            )
        seen[key.frequency] = key

    x = as_series_array(series)
    _check_length(len(x), max(k.samples_per_period for k in keys), min_cycles)
    tau = half_bin(len(x)) if tau is None else float(tau)

    spec = spectrum(x)
    peak = spec.peak_frequency(flat_is_peakless)
    if peak is None:
        return DetectionResult(0.0, float(keys[0].frequency), score_from_delta(float(keys[0].frequency)),
                               False, tau, spec.n, None)

    best = min(keys, key=lambda k: abs(peak - k.frequency))
    return _result(spec, best.frequency, tau, best, flat_is_peakless)
