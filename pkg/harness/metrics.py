# harness/metrics.py

import json
import logging
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence

from sklearn.metrics import confusion_matrix, roc_auc_score

from errors import EmptyClass, LengthMismatch

logger = logging.getLogger(__name__)


def _rate(num: float, den: float) -> float:
    # undefined rates (empty denominator) are reported as 0.0
    return float(num) / float(den) if den else 0.0


def auroc(scores_pos: Sequence[float], scores_neg: Sequence[float]) -> float:
    """P(pos > neg) + 0.5 * P(tie) over all pos/neg pairs."""
    if not len(scores_pos) or not len(scores_neg):
        raise EmptyClass("auroc needs at least one positive and one negative score")
    y_true = [1] * len(scores_pos) + [0] * len(scores_neg)
    return float(roc_auc_score(y_true, list(scores_pos) + list(scores_neg)))


@dataclass(frozen=True)
class ConfusionRates:
    fpr: float
    fnr: float
    acc: float
    precision: float
    recall: float

    def __iter__(self):
        return iter((self.fpr, self.fnr, self.acc, self.precision, self.recall))


def confusion_rates(verdicts: Sequence[bool], gold: Sequence[bool]) -> ConfusionRates:
    if len(verdicts) != len(gold):
        raise LengthMismatch(f"{len(verdicts)} verdicts against {len(gold)} gold labels")
    if not len(gold):
        raise EmptyClass("confusion_rates needs at least one label")

    tn, fp, fn, tp = confusion_matrix(
        [bool(g) for g in gold], [bool(v) for v in verdicts], labels=[False, True]
    ).ravel()
    return ConfusionRates(
        fpr=_rate(fp, fp + tn),
        fnr=_rate(fn, fn + tp),
        acc=_rate(tp + tn, tp + tn + fp + fn),
        precision=_rate(tp, tp + fp),
        recall=_rate(tp, tp + fn),
    )


@dataclass
class MetricReport:
    experiment: str
    params: Dict[str, Any] = field(default_factory=dict)
    auroc: Optional[float] = None
    fpr: Optional[float] = None
    fnr: Optional[float] = None
    acc: Optional[float] = None
    precision: Optional[float] = None
    recall: Optional[float] = None
    mean_ppl: Optional[float] = None
    samples: int = 0
    curve: List[Dict[str, Any]] = field(default_factory=list)
    matrix: List[Dict[str, Any]] = field(default_factory=list)
    extra: Dict[str, Any] = field(default_factory=dict)

    def set_rates(self, rates: ConfusionRates) -> "MetricReport":
        self.fpr, self.fnr, self.acc, self.precision, self.recall = rates
        return self

    def to_dict(self) -> Dict:
        return {
            "experiment": self.experiment,
            "params": self.params,
            "auroc": self.auroc,
            "fpr": self.fpr,
            "fnr": self.fnr,
            "acc": self.acc,
            "precision": self.precision,
            "recall": self.recall,
            "mean_ppl": self.mean_ppl,
            "samples": self.samples,
            "curve": self.curve,
            "matrix": self.matrix,
            "extra": self.extra,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)
