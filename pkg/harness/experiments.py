# harness/experiments.py
"""
Experiment runners.

Each experiment walks a fixed list of corpus samples through
generate -> (attack) -> re-compute -> detect and reduces the per-sample
results into a MetricReport. Samples are processed by a bounded thread pool
whose results come back in sample order, so a report depends only on the
config and its seed. Per-sample results are checkpointed to JSON lines every
``checkpoint_every`` samples when an output directory is set.
"""

from __future__ import annotations

import itertools
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, fields, replace
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from tqdm import tqdm

from attacks.attacks import (
    GreedyParaphraser,
    LabeledText,
    ModelSubstituter,
    copy_paste,
    paraphrase_spans,
    substitute,
)
from detection.detector import classify, detect
from detection.locator import locate
from errors import ExperimentAborted, HarnessError, ProviderError, UnknownExperiment
from export.jsonl_exporter import JSONLExporter
from harness.corpus import BUNDLED_RECORD_TOKENS, CorpusSample, bundled_samples, ingest
from harness.metrics import MetricReport, auroc, confusion_rates
from lm_api.base import Provider, ProviderConfig, Token, build_provider
from signal_pattern.pattern import PatternSpec, generate_pattern
from watermark.encoder import GenerationRecord, GenerationRequest, generate_plain, generate_watermarked
from watermark.recompute import RankSeries, perplexity_from_logprobs, recompute_ranks

logger = logging.getLogger(__name__)

EXPERIMENTS = (
    "single_detection",
    "sensitivity",
    "multi_key",
    "temperature_sweep",
    "amplitude_sweep",
    "length_sweep",
    "copy_paste",
    "substitution_sweep",
    "paraphrase_sweep",
    "cross_model",
    "human_window_fpr",
)

# fields that change how a run executes but not what it computes
_RUNTIME_FIELDS = ("workers", "checkpoint_every", "output_dir", "progress")


def _default_cross_models() -> Tuple[ProviderConfig, ...]:
    return (ProviderConfig(kind="reference", order=3), ProviderConfig(kind="reference", order=2))


@dataclass
class ExperimentConfig:
    samples: int = 100
    length: int = 200
    harmonic: int = 1
    phase: float = 0.0
    amplitude: int = 5
    samples_per_period: int = 10
    window: int = 10
    stride: int = 1
    tau: Optional[float] = None
    seed: int = 0
    provider: ProviderConfig = field(default_factory=ProviderConfig)

    # corpus
    corpus: Optional[str] = None
    min_tokens: int = 250
    trim: int = 200

    # sweeps
    temperatures: Tuple[float, ...] = (0.0, 0.2, 0.4, 0.6, 0.8, 1.0)
    amplitudes: Tuple[int, ...] = (2, 3, 4, 5)
    context_lengths: Tuple[int, ...] = (1, 5, 10, 25, 50)
    fractions: Tuple[float, ...] = (0.1, 0.2, 0.3, 0.4, 0.5, 0.6)
    harmonics: Tuple[int, ...] = (1, 2, 3)
    span_len: int = 10
    cross_models: Tuple[ProviderConfig, ...] = field(default_factory=_default_cross_models)

    # execution
    workers: int = 4
    checkpoint_every: int = 10
    output_dir: Optional[str] = None
    progress: bool = True

    def __post_init__(self) -> None:
        if self.samples < 1:
            raise ValueError(f"samples must be >= 1, got {self.samples}")
        if self.workers < 1 or self.checkpoint_every < 1:
            raise ValueError("workers and checkpoint_every must be >= 1")

    @property
    def provider_config(self) -> ProviderConfig:
        return replace(self.provider, seed=self.seed)

    def key(self, harmonic: Optional[int] = None, amplitude: Optional[int] = None) -> PatternSpec:
        return PatternSpec(
            harmonic=harmonic or self.harmonic,
            phase=self.phase,
            amplitude_max=amplitude or self.amplitude,
            samples_per_period=self.samples_per_period,
            length=self.length,
        ).validate()

    def to_dict(self) -> Dict[str, Any]:
        out: Dict[str, Any] = {}
        for f in fields(self):
            if f.name in _RUNTIME_FIELDS:
                continue
            value = getattr(self, f.name)
            if isinstance(value, ProviderConfig):
                value = value.to_dict()
            elif f.name == "cross_models":
                value = [c.to_dict() for c in value]
            elif isinstance(value, tuple):
                value = list(value)
            out[f.name] = value
        return out

    @classmethod
    def from_dict(cls, d: Dict[str, Any]) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        kwargs: Dict[str, Any] = {}
        for raw_key, value in d.items():
            key = raw_key.replace("-", "_")
            if key not in known:
                logger.warning("Ignoring unknown experiment parameter %r", raw_key)
                continue
            if key == "provider" and isinstance(value, dict):
                value = ProviderConfig.from_dict(value)
            elif key == "cross_models":
                value = tuple(ProviderConfig.from_dict(c) if isinstance(c, dict) else c for c in value)
            elif isinstance(value, list):
                value = tuple(value)
            kwargs[key] = value
        return cls(**kwargs)


def _retokenize(tokens: Sequence[Token], src: Provider, dst: Provider) -> List[Token]:
    if src is dst:
        return list(tokens)
    return dst.tokenize(src.detokenize(tokens))


def _ppl(series: RankSeries) -> float:
    return perplexity_from_logprobs(series.logprobs)


def _mean(values: Sequence[float]) -> Optional[float]:
    return float(np.mean(values)) if len(values) else None


class ExperimentRunner:

    def __init__(self, config: ExperimentConfig, provider: Optional[Provider] = None):
        self.config = config
        self.gen_config = config.provider_config
        self.provider = provider or build_provider(self.gen_config)
        self.exporter = JSONLExporter(config.output_dir) if config.output_dir else None
        self.logger = logging.getLogger(self.__class__.__name__)
        self._samples: Optional[List[CorpusSample]] = None

    # ---------------------------------------------------------------
    # Plumbing
    # ---------------------------------------------------------------
    @property
    def samples(self) -> List[CorpusSample]:
        if self._samples is None:
            cfg = self.config
            if cfg.corpus:
                source = ingest(cfg.corpus, self.provider, cfg.min_tokens, cfg.trim, seed=cfg.seed)
            else:
                source = bundled_samples(
                    self.provider, record_tokens=max(BUNDLED_RECORD_TOKENS, cfg.trim + 100), trim=cfg.trim
                )
            self._samples = list(itertools.islice(source, cfg.samples))
            if not self._samples:
                raise HarnessError("No corpus samples available")
            if len(self._samples) < cfg.samples:
                self.logger.warning("Only %d of %d requested samples available", len(self._samples), cfg.samples)
        return self._samples

    def _map(self, label: str, fn: Callable[[int, Any], Dict], items: Sequence[Any]) -> List[Dict]:
        cfg = self.config
        results: List[Dict] = []
        checkpoint = f"{label}.checkpoint.jsonl"
        quiet = not cfg.progress or logging.getLogger().getEffectiveLevel() > logging.INFO

        with ThreadPoolExecutor(max_workers=cfg.workers) as pool, tqdm(
            total=len(items), desc=label, disable=quiet
        ) as bar:
            for start in range(0, len(items), cfg.checkpoint_every):
                chunk = items[start : start + cfg.checkpoint_every]
                try:
                    done = list(pool.map(fn, range(start, start + len(chunk)), chunk))
                except ProviderError as e:
                    self.logger.error("%s aborted after %d samples: %s", label, len(results), e)
                    raise ExperimentAborted(f"{label}: {e}", completed=len(results)) from e

                results.extend(done)
                if self.exporter:
                    self.exporter.write_jsonl(done, checkpoint, append=start > 0)
                bar.update(len(chunk))

        return results

    def _watermark(self, prompt: Sequence[Token], key: PatternSpec, config: Optional[ProviderConfig] = None,
                   provider: Optional[Provider] = None) -> GenerationRecord:
        request = GenerationRequest(list(prompt), generate_pattern(key), config or self.gen_config, self.config.length)
        return generate_watermarked(request, provider or self.provider)

    def _series(self, text: Sequence[Token], context: Sequence[Token],
                provider: Optional[Provider] = None) -> RankSeries:
        provider = provider or self.provider
        return recompute_ranks(text, context, self.gen_config, provider)

    def _human(self, sample: CorpusSample) -> List[Token]:
        return sample.completion[: self.config.length]

    def _human_results(self, key: PatternSpec) -> List[Dict]:
        def one(i: int, sample: CorpusSample) -> Dict:
            series = self._series(self._human(sample), sample.prompt)
            res = detect(series, key, self.config.tau)
            return {"index": i, "score": res.score, "verdict": res.verdict, "ppl": _ppl(series)}

        return self._map("human", one, self.samples)

    def _report(self, name: str, **kwargs) -> MetricReport:
        return MetricReport(experiment=name, params=self.config.to_dict(), samples=len(self.samples), **kwargs)

    def _balanced(self, report: MetricReport, pos: Sequence[Dict], neg: Sequence[Dict]) -> MetricReport:
        report.auroc = auroc([r["score"] for r in pos], [r["score"] for r in neg])
        verdicts = [r["verdict"] for r in pos] + [r["verdict"] for r in neg]
        gold = [True] * len(pos) + [False] * len(neg)
        return report.set_rates(confusion_rates(verdicts, gold))

    # ---------------------------------------------------------------
    # Experiments
    # ---------------------------------------------------------------
    def run(self, name: str) -> MetricReport:
        runner = getattr(self, f"_run_{name}", None)
        if name not in EXPERIMENTS or runner is None:
            raise UnknownExperiment(f"Unknown experiment {name!r}; expected one of {', '.join(EXPERIMENTS)}")

        self.logger.info("=== Running %s on %s ===", name, self.gen_config.name())
        report = runner()
        self.logger.info("%s finished: %s", name, {k: report.to_dict()[k] for k in ("auroc", "fpr", "fnr", "acc")})

        if self.exporter:
            self.exporter.write_json(report, f"{name}.json")
            if report.curve:
                self.exporter.write_csv(report.curve, f"{name}.csv")
            if report.matrix:
                self.exporter.write_csv(report.matrix, f"{name}_matrix.csv")
        return report

    def _paired(self, name: str, negative: str) -> MetricReport:
        key = self.config.key()

        def one(i: int, sample: CorpusSample) -> Dict:
            rec = self._watermark(sample.prompt, key)
            pos = self._series(rec.tokens, rec.prompt_tokens)
            if negative == "plain":
                neg_tokens = generate_plain(sample.prompt, self.gen_config, self.config.length, self.provider).tokens
            else:
                neg_tokens = self._human(sample)
            neg = self._series(neg_tokens, sample.prompt)
            dp, dn = detect(pos, key, self.config.tau), detect(neg, key, self.config.tau)
            return {
                "index": i,
                "pos": {"score": dp.score, "verdict": dp.verdict, "ppl": _ppl(pos)},
                "neg": {"score": dn.score, "verdict": dn.verdict, "ppl": _ppl(neg)},
            }

        rows = self._map(name, one, self.samples)
        pos, neg = [r["pos"] for r in rows], [r["neg"] for r in rows]
        report = self._report(name, mean_ppl=_mean([r["ppl"] for r in pos]))
        report.extra["mean_ppl_negative"] = _mean([r["ppl"] for r in neg])
        return self._balanced(report, pos, neg)

    def _run_single_detection(self) -> MetricReport:
        return self._paired("single_detection", "human")

    def _run_sensitivity(self) -> MetricReport:
        return self._paired("sensitivity", "plain")

    def _run_multi_key(self) -> MetricReport:
        keys = [self.config.key(harmonic=h) for h in self.config.harmonics]
        report = self._report("multi_key")
        correct_total = 0

        for key in keys:
            def one(i: int, sample: CorpusSample, key=key) -> Dict:
                rec = self._watermark(sample.prompt, key)
                res = classify(self._series(rec.tokens, rec.prompt_tokens), keys, self.config.tau)
                hit = res.verdict and res.matched_key == key
                return {"index": i, "matched": res.matched_key.label() if res.matched_key else None, "correct": hit}

            rows = self._map(f"multi_key.{key.label()}", one, self.samples)
            correct = sum(r["correct"] for r in rows)
            correct_total += correct
            report.curve.append({"key": key.label(), "harmonic": key.harmonic, "accuracy": correct / len(rows)})

        report.acc = correct_total / (len(keys) * len(self.samples))
        return report

    def _run_temperature_sweep(self) -> MetricReport:
        key = self.config.key()
        human = self._human_results(key)
        report = self._report("temperature_sweep")
        report.extra["mean_ppl_human"] = _mean([r["ppl"] for r in human])

        for t in self.config.temperatures:
            hot = self.gen_config.with_temperature(t)

            def one(i: int, sample: CorpusSample, hot=hot) -> Dict:
                rec = self._watermark(sample.prompt, key, config=hot)
                series = self._series(rec.tokens, rec.prompt_tokens)
                res = detect(series, key, self.config.tau)
                plain = generate_plain(sample.prompt, hot, self.config.length, self.provider)
                plain_series = self._series(plain.tokens, plain.prompt_tokens)
                return {"index": i, "score": res.score, "verdict": res.verdict,
                        "ppl": _ppl(series), "ppl_plain": _ppl(plain_series)}

            rows = self._map(f"temperature_sweep.t{t}", one, self.samples)
            point = self._balanced(MetricReport("point"), rows, human)
            report.curve.append({
                "temperature": t,
                "acc": point.acc,
                "auroc": point.auroc,
                "recall": point.recall,
                "ppl_watermarked": _mean([r["ppl"] for r in rows]),
                "ppl_plain": _mean([r["ppl_plain"] for r in rows]),
                "ppl_human": report.extra["mean_ppl_human"],
            })
        return report

    def _run_amplitude_sweep(self) -> MetricReport:
        report = self._report("amplitude_sweep")
        human = self._human_results(self.config.key())

        for amplitude in self.config.amplitudes:
            key = self.config.key(amplitude=amplitude)

            def one(i: int, sample: CorpusSample, key=key) -> Dict:
                rec = self._watermark(sample.prompt, key)
                series = self._series(rec.tokens, rec.prompt_tokens)
                res = detect(series, key, self.config.tau)
                return {"index": i, "score": res.score, "verdict": res.verdict, "ppl": _ppl(series)}

            rows = self._map(f"amplitude_sweep.A{amplitude}", one, self.samples)
            point = self._balanced(MetricReport("point"), rows, human)
            report.curve.append({
                "amplitude": amplitude,
                "acc": point.acc,
                "auroc": point.auroc,
                "ppl_watermarked": _mean([r["ppl"] for r in rows]),
            })
        return report

    def _run_length_sweep(self) -> MetricReport:
        """Detection with only the last L prompt tokens available as context."""
        key = self.config.key()
        lengths = list(self.config.context_lengths)

        def one(i: int, sample: CorpusSample) -> Dict:
            rec = self._watermark(sample.prompt, key)
            out: Dict[str, Any] = {"index": i}
            for n_ctx in lengths:
                ctx = sample.prompt[-n_ctx:]
                dp = detect(self._series(rec.tokens, ctx), key, self.config.tau)
                dn = detect(self._series(self._human(sample), ctx), key, self.config.tau)
                out[str(n_ctx)] = {"pos": {"score": dp.score, "verdict": dp.verdict},
                                   "neg": {"score": dn.score, "verdict": dn.verdict}}
            return out

        rows = self._map("length_sweep", one, self.samples)
        report = self._report("length_sweep")
        for n_ctx in lengths:
            pos = [r[str(n_ctx)]["pos"] for r in rows]
            neg = [r[str(n_ctx)]["neg"] for r in rows]
            point = self._balanced(MetricReport("point"), pos, neg)
            report.curve.append({"context_tokens": n_ctx, "acc": point.acc, "auroc": point.auroc,
                                 "recall": point.recall, "fpr": point.fpr})
        return report

    # ---------------------------------------------------------------
    # Localization under attack
    # ---------------------------------------------------------------
    def _localize(self, rec: GenerationRecord, attacked: LabeledText, key: PatternSpec) -> Dict:
        labeled = copy_paste(rec.prompt_tokens, attacked)
        verdicts = locate(labeled.tokens, [], key, self.gen_config, self.config.window,
                          self.config.stride, self.config.tau, self.provider)
        # the first prompt token seeds the pass and carries no rank
        segment = verdicts.ranks[len(rec.prompt_tokens) - 1:]
        detected = detect(segment, key, self.config.tau).verdict
        return {"pred": verdicts.labels, "gold": labeled.labels, "detected": detected}

    def _token_point(self, rows: Sequence[Dict]) -> Dict[str, float]:
        pred = [p for r in rows for p in r["pred"]]
        gold = [g for r in rows for g in r["gold"]]
        rates = confusion_rates(pred, gold)
        return {"precision": rates.precision, "recall": rates.recall, "acc": rates.acc, "fpr": rates.fpr,
                "detection_rate": sum(r["detected"] for r in rows) / len(rows)}

    def _run_copy_paste(self) -> MetricReport:
        key = self.config.key()

        def one(i: int, sample: CorpusSample) -> Dict:
            rec = self._watermark(sample.prompt, key)
            return self._localize(rec, LabeledText.unattacked(rec.tokens, True), key)

        rows = self._map("copy_paste", one, self.samples)
        point = self._token_point(rows)
        report = self._report("copy_paste")
        report.precision, report.recall, report.acc, report.fpr = (
            point["precision"], point["recall"], point["acc"], point["fpr"],
        )
        report.fnr = 1.0 - point["recall"]
        report.extra["detection_rate"] = point["detection_rate"]
        return report

    def _attack_sweep(self, name: str, attack: Callable[[GenerationRecord, float, int], LabeledText]) -> MetricReport:
        key = self.config.key()
        rows = self._map(f"{name}.generate", lambda i, s: self._watermark(s.prompt, key).to_dict(), self.samples)
        recs = [GenerationRecord.from_dict(r) for r in rows]

        report = self._report(name)
        for fraction in self.config.fractions:
            def one(i: int, rec: GenerationRecord, fraction=fraction) -> Dict:
                return self._localize(rec, attack(rec, fraction, self.config.seed + i), key)

            rows = self._map(f"{name}.p{fraction}", one, recs)
            report.curve.append({"fraction": fraction, **self._token_point(rows)})
        return report

    def _run_substitution_sweep(self) -> MetricReport:
        def attack(rec: GenerationRecord, fraction: float, seed: int) -> LabeledText:
            sub = ModelSubstituter(self.gen_config, self.provider, context=rec.prompt_tokens)
            return substitute(LabeledText.unattacked(rec.tokens, True), fraction, sub, seed)

        return self._attack_sweep("substitution_sweep", attack)

    def _run_paraphrase_sweep(self) -> MetricReport:
        def attack(rec: GenerationRecord, fraction: float, seed: int) -> LabeledText:
            para = GreedyParaphraser(self.gen_config, self.provider, context=rec.prompt_tokens)
            return paraphrase_spans(LabeledText.unattacked(rec.tokens, True), fraction,
                                    self.config.span_len, para, seed)

        return self._attack_sweep("paraphrase_sweep", attack)

    # ---------------------------------------------------------------
    # Cross-model and false positives
    # ---------------------------------------------------------------
    def _run_cross_model(self) -> MetricReport:
        key = self.config.key()
        configs = [replace(c, top_k=self.gen_config.top_k, seed=self.config.seed) for c in self.config.cross_models]
        providers = [build_provider(c) for c in configs]
        report = self._report("cross_model")

        for enc_cfg, enc in zip(configs, providers):
            def one(i: int, sample: CorpusSample, enc_cfg=enc_cfg, enc=enc) -> Dict:
                prompt = _retokenize(sample.prompt, self.provider, enc)
                rec = self._watermark(prompt, key, config=enc_cfg, provider=enc)
                verdicts = []
                for det_cfg, det in zip(configs, providers):
                    text = _retokenize(rec.tokens, enc, det)
                    ctx = _retokenize(rec.prompt_tokens, enc, det)
                    series = recompute_ranks(text, ctx, det_cfg, det)
                    verdicts.append(detect(series, key, self.config.tau).verdict)
                return {"index": i, "verdicts": verdicts}

            rows = self._map(f"cross_model.{enc_cfg.name()}", one, self.samples)
            for j, det_cfg in enumerate(configs):
                report.matrix.append({
                    "encoder": enc_cfg.name(),
                    "detector": det_cfg.name(),
                    "accuracy": sum(r["verdicts"][j] for r in rows) / len(rows),
                })
        return report

    def _run_human_window_fpr(self) -> MetricReport:
        """Share of human completions with at least one positive window."""
        key = self.config.key()

        def one(i: int, sample: CorpusSample) -> Dict:
            v = locate(self._human(sample), sample.prompt, key, self.gen_config, self.config.window,
                       self.config.stride, self.config.tau, self.provider)
            return {"index": i, "flagged": any(v.labels), "positive_windows": v.positive_windows,
                    "windows": len(v.results)}

        rows = self._map("human_window_fpr", one, self.samples)
        report = self._report("human_window_fpr")
        report.fpr = sum(r["flagged"] for r in rows) / len(rows)
        report.extra["positive_window_share"] = (
            sum(r["positive_windows"] for r in rows) / sum(r["windows"] for r in rows)
        )
        return report


def run_experiment(
    name: str,
    params: Union[ExperimentConfig, Dict[str, Any], None] = None,
    provider: Optional[Provider] = None,
) -> MetricReport:
    config = params if isinstance(params, ExperimentConfig) else ExperimentConfig.from_dict(params or {})
    return ExperimentRunner(config, provider).run(name)
