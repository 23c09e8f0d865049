# export/jsonl_exporter.py

import csv
import json
import os
from dataclasses import asdict, is_dataclass
import logging
from typing import Any, Dict, Iterable, Iterator, List, Optional, Sequence

logger = logging.getLogger(__name__)


def _to_dict(record: Any) -> Dict:
    """
    Record → plain dict. Prefers the record's own to_dict(), then dataclass
    fields; plain dicts pass through.
    """
    if hasattr(record, "to_dict"):
        return record.to_dict()
    if is_dataclass(record):
        return asdict(record)
    return dict(record)


def read_jsonl(path: str) -> Iterator[Dict]:
    with open(path, "r", encoding="utf-8") as f:
        for line in f:
            line = line.strip()
            if line:
                yield json.loads(line)


class JSONLExporter:

    def __init__(self, output_dir: str = "output"):
        self.output_dir = output_dir
        os.makedirs(self.output_dir, exist_ok=True)

    def path(self, filename: str) -> str:
        return os.path.join(self.output_dir, filename)

    # ---------------------------------------------------------------
    def write_jsonl(self, records: Iterable[Any], filename: str, append: bool = False) -> str:
        output_path = self.path(filename)
        count = 0
        with open(output_path, "a" if append else "w", encoding="utf-8") as f:
            for rec in records:
                f.write(json.dumps(_to_dict(rec), ensure_ascii=False, sort_keys=True) + "\n")
                count += 1

        logger.info("Saved %d JSONL records to: %s", count, output_path)
        return output_path

    def write_json(self, record: Any, filename: str) -> str:
        output_path = self.path(filename)
        with open(output_path, "w", encoding="utf-8") as f:
            json.dump(_to_dict(record), f, indent=2, ensure_ascii=False, sort_keys=True)

        logger.info("Saved JSON to: %s", output_path)
        return output_path

    def write_csv(
        self,
        rows: Sequence[Dict],
        filename: str,
        fieldnames: Optional[List[str]] = None,
    ) -> str:
        """Rows of flat dicts; columns default to the first row's keys in order."""
        output_path = self.path(filename)
        if fieldnames is None:
            fieldnames = list(rows[0].keys()) if rows else []

        with open(output_path, "w", encoding="utf-8", newline="") as f:
            writer = csv.DictWriter(f, fieldnames=fieldnames, extrasaction="ignore")
            writer.writeheader()
            writer.writerows(rows)

        logger.info("Saved %d CSV rows to: %s", len(rows), output_path)
        return output_path
