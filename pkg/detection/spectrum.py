# detection/spectrum.py
"""
Magnitude spectrum of a rank series.

The series is mean-subtracted (the DC offset of a rank series sits around
(A+1)/2 and would swamp everything else), transformed with a real FFT, and
only bins 1..N//2 are kept.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from fractions import Fraction
from typing import Dict, List, Optional, Sequence, Union

import numpy as np

from errors import SeriesTooShort
from watermark.recompute import RankSeries

logger = logging.getLogger(__name__)

MIN_SERIES_LENGTH = 4
# bins within this relative distance of the maximum count as tied
TIE_RTOL = 1e-9

SeriesLike = Union[RankSeries, Sequence[float], np.ndarray]


def as_series_array(series: SeriesLike) -> np.ndarray:
    if isinstance(series, RankSeries):
        return series.as_array()
    return np.asarray(series, dtype=float)


@dataclass(frozen=True)
class Spectrum:
    magnitudes: np.ndarray  # index i holds bin i + 1
    n: int

    @property
    def bins(self) -> np.ndarray:
        return np.arange(1, len(self.magnitudes) + 1)

    @property
    def frequencies(self) -> np.ndarray:
        return self.bins / self.n

    def bin_frequency(self, b: int) -> Fraction:
        return Fraction(b, self.n)

    def magnitude_at(self, b: int) -> float:
        return float(self.magnitudes[b - 1])

    def peak_bin(self, flat_is_peakless: bool = True) -> Optional[int]:
        """
        Bin of the global maximum, lowest bin on ties. None for an all-zero
        spectrum. With flat_is_peakless, also None when every bin ties the
        maximum (single-impulse series); otherwise such a spectrum peaks at
        bin 1.
        """
        mags = self.magnitudes
        top = float(mags.max()) if len(mags) else 0.0
        if top <= 0.0:
            return None
        tied = np.flatnonzero(mags >= top * (1.0 - TIE_RTOL))
        if flat_is_peakless and len(tied) == len(mags) and len(mags) > 1:
            return None
        return int(tied[0]) + 1

    def peak_frequency(self, flat_is_peakless: bool = True) -> Optional[Fraction]:
        b = self.peak_bin(flat_is_peakless)
        return None if b is None else self.bin_frequency(b)

    def rows(self) -> List[Dict]:
        return [
            {"bin": int(b), "frequency": float(f), "magnitude": float(m)}
            for b, f, m in zip(self.bins, self.frequencies, self.magnitudes)
        ]


def spectrum(series: SeriesLike) -> Spectrum:
    x = as_series_array(series)
    n = len(x)
    if n < MIN_SERIES_LENGTH:
        raise SeriesTooShort(f"Spectrum needs at least {MIN_SERIES_LENGTH} samples, got {n}")

    centred = x - x.mean()
    coeffs = np.fft.rfft(centred)
    mags = np.abs(coeffs[1 : n // 2 + 1])
    return Spectrum(magnitudes=mags, n=n)
