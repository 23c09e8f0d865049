import json
import logging
import os
from itertools import product

import pytest
from hypothesis import given, settings, strategies as st

from errors import (
    CorpusFileError,
    EmptyClass,
    ExperimentAborted,
    LengthMismatch,
    RemoteError,
    UnknownExperiment,
)
from harness.corpus import ingest
from harness.experiments import ExperimentConfig, run_experiment
from harness.metrics import auroc, confusion_rates


def brute_force_auroc(pos, neg):
    wins = sum(1.0 if p > n else 0.5 if p == n else 0.0 for p, n in product(pos, neg))
    return wins / (len(pos) * len(neg))


def _words(n):
    return " ".join(["the"] * n)


def assert_non_increasing(values):
    assert all(a >= b for a, b in zip(values, values[1:])), values


def assert_non_decreasing(values):
    assert all(a <= b for a, b in zip(values, values[1:])), values


# ---------------------------------------------------------------
# Metrics
# ---------------------------------------------------------------
def test_auroc_examples():
    assert auroc([0.9, 0.8], [0.1]) == 1.0
    assert auroc([0.3, 0.6], [0.3, 0.6]) == 0.5
    assert auroc([0.5, 0.2], [0.3]) == 0.5


@settings(max_examples=200, deadline=None)
@given(
    st.lists(st.sampled_from([0.0, 0.1, 0.25, 0.4, 0.5]), min_size=1, max_size=100),
    st.lists(st.sampled_from([0.0, 0.1, 0.25, 0.4, 0.5]), min_size=1, max_size=100),
)
def test_auroc_matches_pair_counting(pos, neg):
    assert auroc(pos, neg) == pytest.approx(brute_force_auroc(pos, neg), abs=1e-12)


def test_auroc_needs_both_classes():
    with pytest.raises(EmptyClass):
        auroc([], [0.1])
    with pytest.raises(EmptyClass):
        auroc([0.1], [])


T, F = True, False


@pytest.mark.parametrize(
    "verdicts, gold, expected",
    [
        ([T, F, T, F], [T, T, F, F], (0.5, 0.5, 0.5, 0.5, 0.5)),
        ([T, T, F, F], [T, T, F, F], (0.0, 0.0, 1.0, 1.0, 1.0)),
        ([F, F, F], [T, T, T], (0.0, 1.0, 0.0, 0.0, 0.0)),
        ([T, T, T], [F, F, F], (1.0, 0.0, 0.0, 0.0, 0.0)),
        ([T, T, T, T], [T, T, T, F], (1.0, 0.0, 0.75, 0.75, 1.0)),
        ([F, F, F, F], [F, F, F, T], (0.0, 1.0, 0.75, 0.0, 0.0)),
        ([T, F, F, F, F], [T, T, F, F, F], (0.0, 0.5, 0.8, 1.0, 0.5)),
        ([T, T, F, F, F], [T, F, F, F, F], (0.25, 0.0, 0.8, 0.5, 1.0)),
        ([T], [T], (0.0, 0.0, 1.0, 1.0, 1.0)),
        ([F], [F], (0.0, 0.0, 1.0, 0.0, 0.0)),
        ([T, F, T, T, F, F], [T, T, T, F, F, F], (1 / 3, 1 / 3, 2 / 3, 2 / 3, 2 / 3)),
    ],
)
def test_confusion_rates_hand_counted(verdicts, gold, expected):
    got = tuple(confusion_rates(verdicts, gold))
    assert got == pytest.approx(expected)


def test_confusion_rates_length_mismatch():
    with pytest.raises(LengthMismatch):
        confusion_rates([True], [True, False])


# ---------------------------------------------------------------
# Corpus
# ---------------------------------------------------------------
def test_ingest_splits_and_filters(tmp_path, provider, caplog):
    path = tmp_path / "corpus.jsonl"
    lines = [
        json.dumps({"text": _words(300)}),
        json.dumps({"text": _words(200)}),
        "{not json",
        json.dumps({"body": "no text field"}),
        "",
        json.dumps({"text": _words(260)}),
    ]
    path.write_text("\n".join(lines), encoding="utf-8")

    with caplog.at_level(logging.WARNING):
        samples = list(ingest(path, provider))

    assert [len(s.prompt) for s in samples] == [100, 60]
    assert all(len(s.completion) == 200 for s in samples)
    assert samples[0].source == provider.tokenize(_words(300))
    assert caplog.text.count("skipped") == 2


def test_ingest_seeded_order_is_deterministic(tmp_path, provider):
    path = tmp_path / "corpus.jsonl"
    path.write_text(
        "\n".join(json.dumps({"text": _words(250 + 10 * i)}) for i in range(8)), encoding="utf-8"
    )
    a = [len(s.prompt) for s in ingest(path, provider, seed=3)]
    b = [len(s.prompt) for s in ingest(path, provider, seed=3)]
    assert a == b
    assert sorted(a) == [50 + 10 * i for i in range(8)]


def test_ingest_missing_file(tmp_path, provider):
    with pytest.raises(CorpusFileError):
        list(ingest(tmp_path / "missing.jsonl", provider))


def test_bundled_samples(samples):
    assert len(samples) >= 100
    for s in samples[:20]:
        assert len(s.prompt) == 100
        assert len(s.completion) == 200


# ---------------------------------------------------------------
# Experiments (small)
# ---------------------------------------------------------------
def small(**kw):
    base = {"samples": 10, "workers": 2, "progress": False}
    base.update(kw)
    return ExperimentConfig.from_dict(base)


def test_sensitivity_separates_perfectly(provider):
    report = run_experiment("sensitivity", small(), provider)
    assert report.auroc == 1.0
    assert report.fpr == 0.0
    assert report.fnr == 0.0
    assert report.samples == 10


def test_single_detection_reports_rates(provider):
    report = run_experiment("single_detection", small(), provider)
    assert report.fnr == 0.0
    for value in (report.auroc, report.fpr, report.acc, report.precision, report.recall):
        assert 0.0 <= value <= 1.0


def test_multi_key_classifies_every_sample(provider):
    report = run_experiment("multi_key", small(samples=5), provider)
    assert [row["accuracy"] for row in report.curve] == [1.0, 1.0, 1.0]
    assert report.acc == 1.0


def test_temperature_sweep_endpoints(provider):
    report = run_experiment("temperature_sweep", small(temperatures=[0.0, 1.0]), provider)
    cold, hot = report.curve
    assert cold["acc"] >= hot["acc"]
    assert cold["recall"] == 1.0
    assert cold["ppl_watermarked"] <= hot["ppl_watermarked"]
    assert cold["ppl_plain"] <= hot["ppl_plain"]


def test_amplitude_sweep_endpoints(provider):
    report = run_experiment("amplitude_sweep", small(amplitudes=[2, 5]), provider)
    low, high = report.curve
    assert low["ppl_watermarked"] <= high["ppl_watermarked"]


def test_length_sweep_longer_context_no_worse(provider):
    report = run_experiment("length_sweep", small(), provider)
    acc = {row["context_tokens"]: row["acc"] for row in report.curve}
    assert min(acc[25], acc[50]) >= max(acc[1], acc[5])


def test_copy_paste_recall(provider):
    report = run_experiment("copy_paste", small(), provider)
    assert report.recall >= 0.95
    assert report.extra["detection_rate"] == 1.0


def test_substitution_sweep_endpoints(provider):
    report = run_experiment("substitution_sweep", small(fractions=[0.1, 0.6]), provider)
    assert report.curve[0]["recall"] >= report.curve[-1]["recall"]


def test_paraphrase_sweep_endpoints(provider):
    report = run_experiment("paraphrase_sweep", small(fractions=[0.1, 0.6]), provider)
    assert report.curve[0]["recall"] >= report.curve[-1]["recall"]


def test_cross_model_diagonal(provider):
    report = run_experiment("cross_model", small(samples=5), provider)
    assert len(report.matrix) == 4
    for cell in report.matrix:
        if cell["encoder"] == cell["detector"]:
            assert cell["accuracy"] == 1.0


def test_human_windows_are_mostly_negative(provider):
    # ten-token windows of human text are positive in roughly a fifth of cases,
    # so nearly every long human text has at least one positive window
    report = run_experiment("human_window_fpr", small(), provider)
    assert 0.0 < report.extra["positive_window_share"] <= 0.3
    assert report.fpr >= 0.9


def test_unknown_experiment(provider):
    with pytest.raises(UnknownExperiment):
        run_experiment("nope", small(), provider)


def test_reports_are_reproducible(provider):
    a = run_experiment("sensitivity", small(samples=4, seed=9), provider)
    b = run_experiment("sensitivity", small(samples=4, seed=9, workers=1), provider)
    assert a.to_json() == b.to_json()


def test_outputs_and_checkpoints(tmp_path, provider):
    out = tmp_path / "run"
    run_experiment("amplitude_sweep", small(samples=3, checkpoint_every=2, amplitudes=[3, 5],
                                             output_dir=str(out)), provider)
    assert os.path.exists(out / "amplitude_sweep.json")
    assert os.path.exists(out / "amplitude_sweep.csv")
    with open(out / "amplitude_sweep.A5.checkpoint.jsonl", encoding="utf-8") as f:
        assert len(f.read().splitlines()) == 3


class FlakyProvider:
    """Delegates to a real provider and fails after a fixed number of pool requests."""

    def __init__(self, inner, fail_after):
        self.inner = inner
        self.calls = 0
        self.fail_after = fail_after

    def next_pool(self, *args, **kwargs):
        self.calls += 1
        if self.calls > self.fail_after:
            raise RemoteError("server went away", status_code=503)
        return self.inner.next_pool(*args, **kwargs)

    def __getattr__(self, name):
        return getattr(self.inner, name)


def test_provider_failure_keeps_checkpoint(tmp_path, provider):
    # each sensitivity sample asks for 800 pools; fail inside the second chunk
    flaky = FlakyProvider(provider, fail_after=1700)
    cfg = small(samples=4, workers=1, checkpoint_every=2, output_dir=str(tmp_path))
    with pytest.raises(ExperimentAborted) as exc:
        run_experiment("sensitivity", cfg, flaky)
    assert exc.value.completed == 2
    with open(tmp_path / "sensitivity.checkpoint.jsonl", encoding="utf-8") as f:
        assert len(f.read().splitlines()) == 2


# ---------------------------------------------------------------
# Experiment scale
# ---------------------------------------------------------------
@pytest.mark.slow
def test_sensitivity_full_scale(provider):
    report = run_experiment("sensitivity", {"samples": 100, "progress": False}, provider)
    assert (report.auroc, report.fpr, report.fnr) == (1.0, 0.0, 0.0)


@pytest.mark.slow
def test_single_detection_full_scale(provider):
    report = run_experiment("single_detection", {"samples": 100, "progress": False}, provider)
    assert report.auroc >= 0.95
    assert report.fpr <= 0.05


@pytest.mark.slow
def test_multi_key_full_scale(provider):
    report = run_experiment("multi_key", {"samples": 100, "progress": False}, provider)
    assert all(row["accuracy"] >= 0.9 for row in report.curve)


@pytest.mark.slow
def test_copy_paste_full_scale(provider):
    report = run_experiment("copy_paste", {"samples": 100, "progress": False}, provider)
    assert report.recall >= 0.95


@pytest.mark.slow
def test_sweeps_full_scale(provider):
    temp = run_experiment("temperature_sweep", {"samples": 100, "progress": False}, provider).curve
    assert_non_increasing([p["acc"] for p in temp])
    assert_non_decreasing([p["ppl_watermarked"] for p in temp])
    amp = run_experiment("amplitude_sweep", {"samples": 100, "progress": False}, provider).curve
    assert_non_decreasing([p["ppl_watermarked"] for p in amp])


@pytest.mark.slow
def test_substitution_sweep_full_scale(provider):
    curve = run_experiment("substitution_sweep", {"samples": 100, "progress": False}, provider).curve
    assert [p["fraction"] for p in curve] == [0.1, 0.2, 0.3, 0.4, 0.5, 0.6]
    assert_non_increasing([p["recall"] for p in curve])


@pytest.mark.slow
def test_human_window_share_full_scale(provider):
    report = run_experiment("human_window_fpr", {"samples": 100, "progress": False}, provider)
    assert report.extra["positive_window_share"] <= 0.25

