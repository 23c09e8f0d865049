# signal_pattern/pattern.py
"""
Periodic rank-selection patterns.

A pattern is a sinusoid sin(2*pi*n*k/S + phase) sampled once per token and
quantized onto the integer ranks 1..A of a top-k candidate pool:

    rank[k] = clamp(round_half_away(sin(...) * (A - 1) / 2 + (A + 1) / 2), 1, A)

With (n=1, phase=0, A=5, S=10) this yields the schedule
[3, 4, 5, 5, 4, 3, 2, 1, 1, 2].

Keys are written as a small text record:

    harmonic, phase, amplitude_max, samples_per_period

e.g. "1,0,5,10". Key files hold one key per line; blank lines and '#'
comments are ignored.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Dict, List, Sequence, Tuple, Union

import numpy as np

from errors import InvalidSpec, KeyFormatError, NyquistViolation

logger = logging.getLogger(__name__)

DEFAULT_AMPLITUDE = 5
DEFAULT_SAMPLES_PER_PERIOD = 10
DEFAULT_LENGTH = 200

# sin() values are rounded to this many decimals before quantization so that
# exact zeros (sin(pi), sin(2*pi)) land on the same side of a .5 boundary.
_SINE_DECIMALS = 12


@dataclass(frozen=True)
class PatternSpec:
    harmonic: int = 1
    phase: float = 0.0
    amplitude_max: int = DEFAULT_AMPLITUDE
    samples_per_period: int = DEFAULT_SAMPLES_PER_PERIOD
    length: int = DEFAULT_LENGTH

    def validate(self) -> "PatternSpec":
        if self.samples_per_period < 1:
            raise InvalidSpec(
                f"samples_per_period must be >= 1, got {self.samples_per_period}"
            )
        if self.harmonic < 1:
            raise InvalidSpec(f"harmonic must be >= 1, got {self.harmonic}")
        if self.harmonic > self.samples_per_period // 2:
            raise NyquistViolation(
                f"harmonic {self.harmonic} exceeds floor(S/2) = "
                f"{self.samples_per_period // 2} for S={self.samples_per_period}"
            )
        if self.amplitude_max < 1:
            raise InvalidSpec(f"amplitude_max must be >= 1, got {self.amplitude_max}")
        if self.length < 1:
            raise InvalidSpec(f"length must be >= 1, got {self.length}")
        return self

    @property
    def frequency(self) -> Fraction:
        return Fraction(self.harmonic, self.samples_per_period)

    @property
    def period(self) -> int:
        """Tokens per repetition of the quantized schedule."""
        return self.samples_per_period // math.gcd(self.harmonic, self.samples_per_period)

    def with_length(self, length: int) -> "PatternSpec":
        return PatternSpec(
            harmonic=self.harmonic,
            phase=self.phase,
            amplitude_max=self.amplitude_max,
            samples_per_period=self.samples_per_period,
            length=length,
        )

    def label(self) -> str:
        """Human-readable name, e.g. 'sin(2x)'."""
        inner = "x" if self.harmonic == 1 else f"{self.harmonic}x"
        if self.phase:
            inner += f"+{self.phase:g}"
        return f"sin({inner})"

    def to_dict(self) -> Dict:
        return {
            "harmonic": self.harmonic,
            "phase": self.phase,
            "amplitude_max": self.amplitude_max,
            "samples_per_period": self.samples_per_period,
        }

    @classmethod
    def from_dict(cls, d: Dict, length: int = DEFAULT_LENGTH) -> "PatternSpec":
        return cls(
            harmonic=int(d["harmonic"]),
            phase=float(d.get("phase", 0.0)),
            amplitude_max=int(d.get("amplitude_max", DEFAULT_AMPLITUDE)),
            samples_per_period=int(d.get("samples_per_period", DEFAULT_SAMPLES_PER_PERIOD)),
            length=int(d.get("length", length)),
        )


@dataclass(frozen=True)
class Pattern:
    spec: PatternSpec
    ranks: Tuple[int, ...] = field(repr=False)

    @property
    def frequency(self) -> Fraction:
        return self.spec.frequency

    def __len__(self) -> int:
        return len(self.ranks)

    def truncated(self, length: int) -> "Pattern":
        return Pattern(spec=self.spec.with_length(length), ranks=self.ranks[:length])


# ---------------------------------------------------------------
# Generation
# ---------------------------------------------------------------
def generate_pattern(spec: PatternSpec) -> Pattern:
    spec.validate()

    k = np.arange(spec.length)
    wave = np.sin(2.0 * np.pi * spec.harmonic * k / spec.samples_per_period + spec.phase)
    wave = np.round(wave, _SINE_DECIMALS)

    scaled = wave * (spec.amplitude_max - 1) / 2.0 + (spec.amplitude_max + 1) / 2.0
    # scaled >= 1 > 0, so floor(x + 0.5) rounds half away from zero
    ranks = np.clip(np.floor(scaled + 0.5), 1, spec.amplitude_max).astype(int)

    if spec.amplitude_max > 1 and spec.length > 1 and np.all(ranks == ranks[0]):
        logger.warning(
            "Pattern %s quantizes to a constant schedule (rank %d); it carries no tone",
            spec.label(),
            ranks[0],
        )

    return Pattern(spec=spec, ranks=tuple(int(r) for r in ranks))


def pattern_frequency(spec: PatternSpec) -> Fraction:
    """Normalized frequency in cycles per token, exact."""
    return spec.validate().frequency


def admissible_harmonics(samples_per_period: int = DEFAULT_SAMPLES_PER_PERIOD) -> List[int]:
    return list(range(1, samples_per_period // 2 + 1))


def key_family(
    samples_per_period: int = DEFAULT_SAMPLES_PER_PERIOD,
    amplitude_max: int = DEFAULT_AMPLITUDE,
    phase: float = 0.0,
    length: int = DEFAULT_LENGTH,
) -> List[PatternSpec]:
    """Every distinct-frequency key that fits under the Nyquist bound for S."""
    return [
        PatternSpec(h, phase, amplitude_max, samples_per_period, length)
        for h in admissible_harmonics(samples_per_period)
    ]


# ---------------------------------------------------------------
# Key records
# ---------------------------------------------------------------
def format_key(spec: PatternSpec) -> str:
    return f"{spec.harmonic},{spec.phase!r},{spec.amplitude_max},{spec.samples_per_period}"


def parse_key(text: str, length: int = DEFAULT_LENGTH) -> PatternSpec:
    """
    Parse "harmonic,phase,amplitude_max,samples_per_period".

    Trailing fields may be omitted ("2" means sin(2x) with default phase,
    amplitude and S). Commas or whitespace separate fields.
    """
    parts = [p for p in text.replace(",", " ").split() if p]
    if not parts or len(parts) > 4:
        raise KeyFormatError(f"Cannot parse pattern key: {text!r}")

    try:
        harmonic = int(parts[0])
        phase = float(parts[1]) if len(parts) > 1 else 0.0
        amplitude = int(parts[2]) if len(parts) > 2 else DEFAULT_AMPLITUDE
        spp = int(parts[3]) if len(parts) > 3 else DEFAULT_SAMPLES_PER_PERIOD
    except ValueError as e:
        raise KeyFormatError(f"Cannot parse pattern key {text!r}: {e}") from e

    return PatternSpec(harmonic, phase, amplitude, spp, length).validate()


def load_key_file(path: Union[str, Path], length: int = DEFAULT_LENGTH) -> List[PatternSpec]:
    keys: List[PatternSpec] = []
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        try:
            keys.append(parse_key(line, length=length))
        except KeyFormatError as e:
            raise KeyFormatError(f"{path}:{lineno}: {e}") from e

    logger.info("Loaded %d keys from %s", len(keys), path)
    return keys


def write_key_file(path: Union[str, Path], keys: Sequence[PatternSpec]) -> Path:
    path = Path(path)
    path.write_text("".join(format_key(k) + "\n" for k in keys), encoding="utf-8")
    return path
