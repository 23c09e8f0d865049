# run_pipeline.py

import logging
import sys

from detection.plot import write_spectrum_svg
from detection.spectrum import spectrum
from export.jsonl_exporter import JSONLExporter
from harness.experiments import ExperimentConfig, ExperimentRunner
from lm_api.base import ProviderConfig
from signal_pattern.pattern import generate_pattern, key_family

logging.basicConfig(level=logging.INFO)
logger = logging.getLogger(__name__)

OUTPUT_DIR = "output"

# experiments in the order they are reported
PIPELINE = (
    "sensitivity",
    "single_detection",
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


def run(samples: int = 100, output_dir: str = OUTPUT_DIR) -> dict:
    config = ExperimentConfig(
        samples=samples,
        provider=ProviderConfig(kind="reference", top_k=5),
        output_dir=output_dir,
    )
    runner = ExperimentRunner(config)
    exporter = JSONLExporter(output_dir)

    # ------------------------------------------------
    # 1. KEYS AND THE REFERENCE SPECTRUM
    # ------------------------------------------------
    keys = key_family(config.samples_per_period, config.amplitude, length=config.length)
    print(f"Admissible keys at S={config.samples_per_period}: {[k.label() for k in keys]}")

    key = config.key()
    tone = spectrum(generate_pattern(key).ranks)
    exporter.write_csv(tone.rows(), "reference_spectrum.csv")
    write_spectrum_svg(tone, exporter.path("reference_spectrum.svg"), key_frequency=float(key.frequency))

    # ------------------------------------------------
    # 2. EXPERIMENTS
    # ------------------------------------------------
    reports = {}
    for name in PIPELINE:
        print(f"\n=== {name} ===")
        report = runner.run(name)
        reports[name] = report
        summary = {k: v for k, v in report.to_dict().items() if k in ("auroc", "fpr", "fnr", "acc", "precision", "recall")}
        print({k: v for k, v in summary.items() if v is not None} or f"{len(report.curve or report.matrix)} rows")

    # ------------------------------------------------
    # 3. SUMMARY
    # ------------------------------------------------
    exporter.write_jsonl(reports.values(), "reports.jsonl")
    return reports


if __name__ == "__main__":
    print("\n=== SIGNAL WATERMARK EXPERIMENT PIPELINE ===")
    n = int(sys.argv[1]) if len(sys.argv) > 1 else 100
    run(samples=n)
    print(f"\n=== PIPELINE COMPLETE: results in {OUTPUT_DIR}/ ===")
