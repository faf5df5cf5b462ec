"""SHD / F1 / FDR over exact (src, lag, dst) edge triples."""

from __future__ import annotations

from dataclasses import asdict, dataclass

from .data import TemporalGraph


@dataclass(frozen=True)
class ScoreCard:
    shd: int
    f1: float
    fdr: float
    tp: int
    fp: int
    fn: int
    empty_prediction: bool = False

    @property
    def precision(self) -> float:
        return self.tp / (self.tp + self.fp) if self.tp + self.fp else 0.0

    @property
    def recall(self) -> float:
        return self.tp / (self.tp + self.fn) if self.tp + self.fn else 0.0

    def to_dict(self) -> dict:
        return asdict(self)

    def row(self) -> str:
        return f"shd={self.shd} f1={round(self.f1, 3)} fdr={round(self.fdr, 3)}"


def score(pred: TemporalGraph, truth: TemporalGraph) -> ScoreCard:
    """Compare two graphs edge by edge; a reversed lag-0 edge costs 2."""
    if set(pred.variables) != set(truth.variables):
        raise ValueError(f"variable sets differ: {pred.variables} vs {truth.variables}")
    if pred.max_lag != truth.max_lag:
        raise ValueError(f"max_lag differs: {pred.max_lag} vs {truth.max_lag}")
    P, G = pred.keys(), truth.keys()
    tp, fp, fn = len(P & G), len(P - G), len(G - P)
    precision = tp / (tp + fp) if P else 0.0
    recall = tp / (tp + fn) if G else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
    fdr = fp / (fp + tp) if P else 0.0
    return ScoreCard(shd=fp + fn, f1=f1, fdr=fdr, tp=tp, fp=fp, fn=fn, empty_prediction=not P)
