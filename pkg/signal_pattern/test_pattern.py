import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, strategies as st

from errors import InvalidSpec, KeyFormatError, NyquistViolation
from signal_pattern.pattern import (
    PatternSpec,
    admissible_harmonics,
    format_key,
    generate_pattern,
    key_family,
    load_key_file,
    parse_key,
    pattern_frequency,
    write_key_file,
)


def test_worked_example_is_reproduced_exactly():
    p = generate_pattern(PatternSpec(harmonic=1, phase=0.0, amplitude_max=5, samples_per_period=10, length=10))
    assert list(p.ranks) == [3, 4, 5, 5, 4, 3, 2, 1, 1, 2]
    assert p.frequency == Fraction(1, 10)


def test_amplitude_one_is_greedy_schedule():
    p = generate_pattern(PatternSpec(1, 0.0, 1, 10, 10))
    assert list(p.ranks) == [1] * 10


def test_second_harmonic():
    p = generate_pattern(PatternSpec(2, 0.0, 5, 10, 10))
    assert list(p.ranks) == [3, 5, 4, 2, 1, 3, 5, 4, 2, 1]
    assert p.frequency == Fraction(1, 5)


@pytest.mark.parametrize(
    "harmonic, expected",
    [(1, Fraction(1, 10)), (5, Fraction(1, 2)), (3, Fraction(3, 10))],
)
def test_pattern_frequency_is_exact(harmonic, expected):
    f = pattern_frequency(PatternSpec(harmonic=harmonic, samples_per_period=10))
    assert isinstance(f, Fraction)
    assert f == expected


def test_nyquist_violation_rejected():
    with pytest.raises(NyquistViolation):
        generate_pattern(PatternSpec(harmonic=6, samples_per_period=10))


@pytest.mark.parametrize("kwargs", [{"amplitude_max": 0}, {"length": 0}, {"harmonic": 0}])
def test_invalid_spec_rejected(kwargs):
    with pytest.raises(InvalidSpec):
        generate_pattern(PatternSpec(**kwargs))


@given(
    st.integers(min_value=2, max_value=40).flatmap(
        lambda s: st.tuples(
            st.just(s),
            st.integers(min_value=1, max_value=s // 2),
            st.floats(min_value=-math.pi, max_value=math.pi, allow_nan=False),
            st.integers(min_value=1, max_value=9),
            st.integers(min_value=1, max_value=300),
        )
    )
)
def test_ranks_bounded_periodic_and_deterministic(args):
    s, h, phase, a, length = args
    spec = PatternSpec(h, phase, a, s, length)
    p = generate_pattern(spec)

    assert len(p.ranks) == length
    assert all(1 <= r <= a for r in p.ranks)
    assert 0 < p.frequency <= Fraction(1, 2)
    assert generate_pattern(spec) == p

    period = spec.period
    assert period == s // math.gcd(h, s)
    for i in range(length - period):
        assert p.ranks[i] == p.ranks[i + period]


@pytest.mark.parametrize(
    "harmonic, phase",
    # at the Nyquist harmonic a zero phase samples the sine at its zeros
    [(1, 0.0), (2, 0.0), (3, 0.0), (4, 0.0), (5, math.pi / 2)],
)
def test_pure_tone_peaks_on_its_own_bin(harmonic, phase):
    p = generate_pattern(PatternSpec(harmonic, phase, 5, 10, 200))
    x = np.asarray(p.ranks, dtype=float)
    mags = np.abs(np.fft.rfft(x - x.mean()))[1:]
    peak_bin = int(np.argmax(mags)) + 1
    assert Fraction(peak_bin, 200) == p.frequency


def test_distinct_harmonics_are_at_least_one_cycle_apart():
    keys = key_family(10)
    freqs = [k.frequency for k in keys]
    assert len(set(freqs)) == len(keys) == 5
    for i, a in enumerate(freqs):
        for b in freqs[i + 1:]:
            assert abs(a - b) >= Fraction(1, 10)


def test_admissible_harmonics_follow_nyquist_bound():
    assert admissible_harmonics(10) == [1, 2, 3, 4, 5]
    assert len(admissible_harmonics(100)) == 50


def test_key_records(tmp_path):
    spec = PatternSpec(2, 0.25, 4, 12)
    assert parse_key(format_key(spec)) == spec
    assert parse_key("3") == PatternSpec(3, 0.0, 5, 10)
    assert parse_key("1 0 5 10") == PatternSpec()

    path = tmp_path / "keys.txt"
    write_key_file(path, key_family(10)[:3])
    path.write_text("# three keys\n\n" + path.read_text())
    assert [k.harmonic for k in load_key_file(path)] == [1, 2, 3]


@pytest.mark.parametrize("bad", ["", "x,0,5,10", "1,0,5,10,7"])
def test_bad_key_records(bad):
    with pytest.raises(KeyFormatError):
        parse_key(bad)
