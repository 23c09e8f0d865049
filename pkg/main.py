# main.py
"""
Command-line entry point.

    python main.py generate --prompt "the river" --key 1 --out out/wm.jsonl
    python main.py detect --input out/wm.jsonl --key 1 --strict
    python main.py locate --input out/pasted.jsonl --key 1 --window 10
    python main.py eval sensitivity --out results/

Exit codes: 0 success, 1 usage or input error, 2 provider failure,
3 negative verdict under --strict.
"""

import argparse
import json
import logging
import os
import sys
from dataclasses import dataclass, field, replace
from typing import Any, Dict, Iterable, List, Optional, Tuple

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
from detection.plot import write_spectrum_svg
from detection.spectrum import spectrum
from errors import ExperimentAborted, ProviderError, WatermarkError
from export.jsonl_exporter import JSONLExporter, read_jsonl
from harness.corpus import bundled_samples, ingest
from harness.experiments import EXPERIMENTS, run_experiment
from lm_api.base import PROVIDER_KINDS, Provider, ProviderConfig, Token, build_provider
from signal_pattern.pattern import PatternSpec, generate_pattern, load_key_file, parse_key
from watermark.encoder import GenerationRequest, generate_watermarked
from watermark.recompute import RankSeries, recompute_ranks

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_PROVIDER = 2
EXIT_NEGATIVE = 3

ATTACKS = ("copy_paste", "substitute", "paraphrase")

# long flag -> default, also the keys a --config file may set
DEFAULTS: Dict[str, Any] = {
    "provider": "reference",
    "model": None,
    "base_url": None,
    "order": 3,
    "top_k": 5,
    "temperature": 0.0,
    "seed": 0,
    "key": None,
    "keys_file": None,
    "amplitude": None,
    "length": 200,
    "window": 10,
    "stride": 1,
    "tau": None,
    "text": None,
    "context": None,
    "prompt": None,
    "input": None,
    "series": None,
    "ranks": None,
    "corpus": None,
    "samples": None,
    "out": None,
    "strict": False,
    "attack": "substitute",
    "fraction": 0.1,
    "span_len": 10,
    "verbose": 0,
    "quiet": False,
}


class CliParser(argparse.ArgumentParser):
    def error(self, message: str):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


class UsageError(WatermarkError, ValueError):
    pass


@dataclass
class CliConfig:
    command: str
    provider: ProviderConfig
    keys: List[PatternSpec] = field(default_factory=list)
    corpus: Optional[str] = None
    out: Optional[str] = None
    seed: int = 0
    verbosity: int = 0
    options: Dict[str, Any] = field(default_factory=dict)

    def __getattr__(self, name: str) -> Any:
        try:
            return self.__dict__["options"][name]
        except KeyError:
            raise AttributeError(name) from None

    def key(self) -> PatternSpec:
        if not self.keys:
            raise UsageError(f"{self.command} needs a pattern key (--key or --keys-file)")
        return self.keys[0]


# ---------------------------------------------------------------
# Parsing
# ---------------------------------------------------------------
def build_parser() -> CliParser:
    common = argparse.ArgumentParser(add_help=False)

    prov = common.add_argument_group("provider")
    prov.add_argument("--provider", choices=PROVIDER_KINDS)
    prov.add_argument("--model", help="remote model name")
    prov.add_argument("--base-url", help="remote completion endpoint base URL")
    prov.add_argument("--order", type=int, help="reference n-gram order (1-3)")
    prov.add_argument("--top-k", type=int)
    prov.add_argument("--temperature", type=float)
    prov.add_argument("--seed", type=int)

    wm = common.add_argument_group("watermark")
    wm.add_argument("--key", action="append", help="harmonic[,phase[,amplitude[,samples_per_period]]]")
    wm.add_argument("--keys-file")
    wm.add_argument("--amplitude", type=int)
    wm.add_argument("--length", type=int)
    wm.add_argument("--window", type=int)
    wm.add_argument("--stride", type=int)
    wm.add_argument("--tau", type=float)
    wm.add_argument("--strict", action="store_true", default=None)

    io = common.add_argument_group("input/output")
    io.add_argument("--text")
    io.add_argument("--context")
    io.add_argument("--prompt")
    io.add_argument("--input", help="JSON-lines records with text/prompt fields")
    io.add_argument("--series", help="JSON-lines rank series")
    io.add_argument("--ranks", help="comma-separated rank series")
    io.add_argument("--corpus", help="JSON-lines corpus (default: bundled corpus)")
    io.add_argument("--samples", type=int)
    io.add_argument("--out")
    io.add_argument("--config", help="JSON file whose keys mirror the long flags")

    atk = common.add_argument_group("attack")
    atk.add_argument("--attack", choices=ATTACKS)
    atk.add_argument("--fraction", type=float)
    atk.add_argument("--span-len", type=int)

    common.add_argument("-v", "--verbose", action="count", default=None)
    common.add_argument("--quiet", action="store_true", default=None)

    parser = CliParser(prog="signal-watermark", description="Signal watermarking for generated text")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("generate", parents=[common], help="prompt or corpus -> watermarked JSONL")
    sub.add_parser("recompute", parents=[common], help="text -> rank series")
    sub.add_parser("detect", parents=[common], help="text or series + key -> detection result")
    sub.add_parser("classify", parents=[common], help="text + key file -> matched key")
    sub.add_parser("locate", parents=[common], help="text + key -> per-token labels")
    sub.add_parser("attack", parents=[common], help="JSONL -> attacked JSONL")
    ev = sub.add_parser("eval", parents=[common], help="run a named experiment")
    ev.add_argument("experiment", choices=EXPERIMENTS)
    sub.add_parser("spectrum", parents=[common], help="series -> CSV + SVG")
    return parser


def _load_config_file(path: Optional[str]) -> Dict[str, Any]:
    if not path:
        return {}
    with open(path, "r", encoding="utf-8") as f:
        raw = json.load(f)
    if not isinstance(raw, dict):
        raise UsageError(f"Config file {path} must hold a JSON object")
    return {k.replace("-", "_"): v for k, v in raw.items()}


def resolve(args: argparse.Namespace) -> CliConfig:
    """Flags override the config file, which overrides DEFAULTS."""
    from_file = _load_config_file(getattr(args, "config", None))
    values: Dict[str, Any] = {}
    for name, default in DEFAULTS.items():
        value = getattr(args, name, None)
        if value is None:
            value = from_file.get(name, default)
        values[name] = value

    overrides = {k: values[k] for k in ("model", "base_url") if values[k]}
    provider = ProviderConfig(
        kind=values["provider"],
        top_k=values["top_k"],
        temperature=values["temperature"],
        seed=values["seed"],
        order=values["order"],
        **overrides,
    )

    length = values["length"]
    key_texts = values["key"] or []
    if not isinstance(key_texts, list):
        key_texts = [key_texts]
    keys = [parse_key(str(k), length=length) for k in key_texts]
    if values["keys_file"]:
        keys += load_key_file(values["keys_file"], length=length)
    if values["amplitude"] is not None:
        keys = [replace(k, amplitude_max=values["amplitude"]).validate() for k in keys]

    options = {k: v for k, v in values.items() if k not in ("corpus", "out", "seed", "verbose")}
    if args.command == "eval":
        options["experiment"] = args.experiment
        options["experiment_params"] = from_file.get("experiment", {})

    return CliConfig(
        command=args.command,
        provider=provider,
        keys=keys,
        corpus=values["corpus"],
        out=values["out"],
        seed=values["seed"],
        verbosity=-1 if values["quiet"] else int(values["verbose"] or 0),
        options=options,
    )


def _configure_logging(verbosity: int) -> None:
    level = {-1: logging.ERROR, 0: logging.WARNING, 1: logging.INFO}.get(verbosity, logging.DEBUG)
    logging.basicConfig(level=level, stream=sys.stderr)
    logging.getLogger().setLevel(level)


# ---------------------------------------------------------------
# Inputs and outputs
# ---------------------------------------------------------------
def _record_text(rec: Dict, provider: Provider) -> Tuple[List[Token], List[Token]]:
    if isinstance(rec.get("text"), str):
        text = provider.tokenize(rec["text"])
    elif "tokens" in rec:
        text = provider.tokenize(provider.detokenize([Token(int(i), s) for i, s in rec["tokens"]]))
    else:
        raise UsageError("input record has neither 'text' nor 'tokens'")
    context = provider.tokenize(rec.get("prompt") or "")
    return context, text


def load_texts(cfg: CliConfig, provider: Provider) -> List[Tuple[List[Token], List[Token]]]:
    """(context, text) pairs from --text/--context or --input."""
    if cfg.text is not None:
        return [(provider.tokenize(cfg.context or ""), provider.tokenize(cfg.text))]
    if cfg.input:
        return [_record_text(rec, provider) for rec in read_jsonl(cfg.input)]
    raise UsageError(f"{cfg.command} needs --text or --input")


def load_series(cfg: CliConfig, provider: Optional[Provider] = None) -> List[RankSeries]:
    if cfg.ranks:
        return [RankSeries([int(r) for r in str(cfg.ranks).replace(",", " ").split()])]
    if cfg.series:
        out = []
        for rec in read_jsonl(cfg.series):
            out.append(RankSeries([int(r) for r in rec]) if isinstance(rec, list) else RankSeries.from_dict(rec))
        return out
    provider = provider or build_provider(cfg.provider)
    return [recompute_ranks(text, ctx, cfg.provider, provider) for ctx, text in load_texts(cfg, provider)]


def emit(records: Iterable[Any], out: Optional[str]) -> None:
    records = list(records)
    if out:
        exporter = JSONLExporter(os.path.dirname(os.path.abspath(out)))
        exporter.write_jsonl(records, os.path.basename(out))
    else:
        for rec in records:
            print(json.dumps(rec.to_dict(), ensure_ascii=False, sort_keys=True))


# ---------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------
def cmd_generate(cfg: CliConfig) -> int:
    provider = build_provider(cfg.provider)
    length = cfg.length
    pattern = generate_pattern(cfg.key().with_length(length))

    if cfg.prompt:
        prompts: List[Any] = [cfg.prompt]
    else:
        source = ingest(cfg.corpus, provider, seed=cfg.seed) if cfg.corpus else bundled_samples(provider)
        count = cfg.samples or 10
        prompts = [s.prompt for _, s in zip(range(count), source)]

    records = [
        generate_watermarked(GenerationRequest(p, pattern, cfg.provider, length), provider) for p in prompts
    ]
    emit(records, cfg.out)
    return EXIT_OK


def cmd_recompute(cfg: CliConfig) -> int:
    provider = build_provider(cfg.provider)
    emit([recompute_ranks(text, ctx, cfg.provider, provider) for ctx, text in load_texts(cfg, provider)], cfg.out)
    return EXIT_OK


def cmd_detect(cfg: CliConfig) -> int:
    key = cfg.key()
    results = [detect(s, key, cfg.tau) for s in load_series(cfg)]
    emit(results, cfg.out)
    if cfg.strict and not all(r.verdict for r in results):
        return EXIT_NEGATIVE
    return EXIT_OK


def cmd_classify(cfg: CliConfig) -> int:
    if not cfg.keys:
        raise UsageError("classify needs --keys-file or --key")
    results = [classify(s, cfg.keys, cfg.tau) for s in load_series(cfg)]
    emit(results, cfg.out)
    if cfg.strict and not all(r.verdict for r in results):
        return EXIT_NEGATIVE
    return EXIT_OK


def cmd_locate(cfg: CliConfig) -> int:
    key = cfg.key()
    provider = build_provider(cfg.provider)
    verdicts = [
        locate(text, ctx, key, cfg.provider, cfg.window, cfg.stride, cfg.tau, provider)
        for ctx, text in load_texts(cfg, provider)
    ]
    emit(verdicts, cfg.out)
    return EXIT_OK


def cmd_attack(cfg: CliConfig) -> int:
    if not cfg.input:
        raise UsageError("attack needs --input")
    provider = build_provider(cfg.provider)
    out: List[LabeledText] = []
    for i, rec in enumerate(read_jsonl(cfg.input)):
        context, tokens = _record_text(rec, provider)
        if cfg.attack == "copy_paste":
            out.append(copy_paste(context, tokens))
        elif cfg.attack == "substitute":
            sub = ModelSubstituter(cfg.provider, provider, context=context)
            out.append(substitute(LabeledText.unattacked(tokens, True), cfg.fraction, sub, cfg.seed + i))
        else:
            para = GreedyParaphraser(cfg.provider, provider, context=context)
            out.append(paraphrase_spans(LabeledText.unattacked(tokens, True), cfg.fraction,
                                        cfg.span_len, para, cfg.seed + i))
    emit(out, cfg.out)
    return EXIT_OK


def cmd_eval(cfg: CliConfig) -> int:
    params: Dict[str, Any] = dict(cfg.experiment_params)
    params.update({
        "provider": cfg.provider,
        "seed": cfg.seed,
        "length": cfg.length,
        "window": cfg.window,
        "stride": cfg.stride,
        "tau": cfg.tau,
        "corpus": cfg.corpus,
        "output_dir": cfg.out,
        "progress": cfg.verbosity >= 1,
    })
    if cfg.samples:
        params["samples"] = cfg.samples
    if cfg.keys:
        key = cfg.keys[0]
        params.update(harmonic=key.harmonic, phase=key.phase, amplitude=key.amplitude_max,
                      samples_per_period=key.samples_per_period)
    if cfg.amplitude is not None:
        params["amplitude"] = cfg.amplitude

    report = run_experiment(cfg.experiment, params)
    print(report.to_json())
    return EXIT_OK


def cmd_spectrum(cfg: CliConfig) -> int:
    exporter = JSONLExporter(cfg.out or "output")
    key_frequency = float(cfg.keys[0].frequency) if cfg.keys else None
    series = load_series(cfg)
    for i, s in enumerate(series):
        stem = "spectrum" if len(series) == 1 else f"spectrum_{i}"
        spec = spectrum(s)
        exporter.write_csv(spec.rows(), f"{stem}.csv", fieldnames=["bin", "frequency", "magnitude"])
        write_spectrum_svg(spec, exporter.path(f"{stem}.svg"), key_frequency=key_frequency)
        print(exporter.path(f"{stem}.csv"))
    return EXIT_OK


COMMANDS = {
    "generate": cmd_generate,
    "recompute": cmd_recompute,
    "detect": cmd_detect,
    "classify": cmd_classify,
    "locate": cmd_locate,
    "attack": cmd_attack,
    "eval": cmd_eval,
    "spectrum": cmd_spectrum,
}


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)

    try:
        cfg = resolve(args)
        _configure_logging(cfg.verbosity)
        return COMMANDS[cfg.command](cfg)
    except (ProviderError, ExperimentAborted) as e:
        logger.error("Provider failure: %s", e)
        print(f"error: {e}", file=sys.stderr)
        return EXIT_PROVIDER
    except (WatermarkError, ValueError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
