"""Classifier training and evaluation on recurrence images.

Metrics follow the usual confusion-matrix definitions with the
arrhythmia class as positive: accuracy = (TP+TN)/total,
specificity = TN/(TN+FP), sensitivity = TP/(TP+FN). Metrics with a zero
denominator are reported as absent (None), never as zero. ROC sweeps
the positive-class softmax score; AUC integrates by trapezoid and
equals the pairwise-ordering statistic with ties counted one half.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import PxafError
from .nn import SGD, BatchNorm, Conv2d, Linear, Module, no_grad
from .nn import tensor as T
from .nn.tensor import Tensor


class EmptyData(PxafError):
    pass


class SingleClass(PxafError):
    pass


class ManifestMismatch(PxafError):
    pass


class LabelImbalanceWarning(UserWarning):
    pass


POSITIVE_CLASS = 1  # arrhythmia (PxAF) label index


@dataclass
class TrainConfig:
    epochs: int = 200
    batch_size: int = 10
    lr: float = 0.025
    momentum: float = 0.9
    weight_decay: float = 3e-4
    seed: int = 0


@dataclass
class ConfusionCounts:
    tp: int = 0
    tn: int = 0
    fp: int = 0
    fn: int = 0

    @property
    def total(self) -> int:
        return self.tp + self.tn + self.fp + self.fn


@dataclass
class RocCurve:
    points: list                      # (fpr, sensitivity) sorted by threshold
    thresholds: list
    auc: float


class BaselineCnn(Module):
    """Fixed small conv net used as a comparison baseline ("baseline-cnn")."""

    def __init__(self, seed: int = 0, channels: int = 16, num_classes: int = 2,
                 dtype=np.float32):
        super().__init__()
        rng = np.random.default_rng([seed, 0xBA5E])
        c = channels
        spec = [(1, c, 1), (c, c, 2), (c, 2 * c, 1), (2 * c, 2 * c, 2)]
        self.convs = [Conv2d(ci, co, 3, stride=s, pad=1, bias=False,
                             rng=rng, dtype=dtype) for ci, co, s in spec]
        self.bns = [BatchNorm(co, dtype=dtype) for _, co, _ in spec]
        self.head = Linear(2 * c, num_classes, rng=rng, dtype=dtype)

    def forward(self, x):
        for conv, bn in zip(self.convs, self.bns):
            x = T.relu(bn(conv(x)))
        x = T.max_pool2d(x, 3, 2, 1)
        return self.head(x.mean(axis=(2, 3)))


def train_classifier(model: Module, data: tuple[np.ndarray, np.ndarray],
                     cfg: TrainConfig) -> list[dict]:
    """SGD-with-momentum cross-entropy training; returns per-epoch history."""
    x, y = data
    if len(x) == 0:
        raise EmptyData("empty training set")
    x = np.asarray(x)
    y = np.asarray(y, dtype=np.int64)
    present = set(np.unique(y).tolist())
    if len(present) < 2:
        warnings.warn(f"only classes {sorted(present)} present in training data",
                      LabelImbalanceWarning)
    opt = SGD(model.parameters(), lr=cfg.lr, momentum=cfg.momentum,
              weight_decay=cfg.weight_decay)
    rng = np.random.default_rng([cfg.seed, 20])
    history = []
    model.train()
    for epoch in range(cfg.epochs):
        order = rng.permutation(len(x))
        losses, correct, seen = [], 0, 0
        for start in range(0, len(x) - cfg.batch_size + 1, cfg.batch_size):
            idx = order[start: start + cfg.batch_size]
            logits = model(Tensor(x[idx].astype(x.dtype, copy=False)))
            loss = T.cross_entropy(logits, y[idx])
            opt.zero_grad()
            loss.backward()
            opt.step()
            losses.append(loss.item())
            correct += int((logits.data.argmax(axis=1) == y[idx]).sum())
            seen += len(idx)
        history.append({"epoch": epoch, "loss": float(np.mean(losses)),
                        "accuracy": correct / seen})
    return history


def predict_scores(model: Module, x: np.ndarray,
                   batch_size: int = 64) -> np.ndarray:
    """Positive-class softmax probability per example."""
    model.eval()
    scores = []
    with no_grad():
        for start in range(0, len(x), batch_size):
            logits = model(Tensor(x[start: start + batch_size])).data
            z = logits - logits.max(axis=1, keepdims=True)
            p = np.exp(z)
            p /= p.sum(axis=1, keepdims=True)
            scores.append(p[:, POSITIVE_CLASS])
    model.train()
    return np.concatenate(scores)


def confusion(pred_positive: np.ndarray, labels: np.ndarray) -> ConfusionCounts:
    labels = np.asarray(labels).astype(bool)
    pred_positive = np.asarray(pred_positive).astype(bool)
    return ConfusionCounts(
        tp=int(np.sum(pred_positive & labels)),
        tn=int(np.sum(~pred_positive & ~labels)),
        fp=int(np.sum(pred_positive & ~labels)),
        fn=int(np.sum(~pred_positive & labels)))


def metrics_from_counts(c: ConfusionCounts) -> dict:
    """Accuracy / specificity / sensitivity; absent (None) when undefined."""
    out = {"tp": c.tp, "tn": c.tn, "fp": c.fp, "fn": c.fn}
    out["accuracy"] = (c.tp + c.tn) / c.total if c.total else None
    out["specificity"] = c.tn / (c.tn + c.fp) if (c.tn + c.fp) else None
    out["sensitivity"] = c.tp / (c.tp + c.fn) if (c.tp + c.fn) else None
    return out


def evaluate(model: Module, data: tuple[np.ndarray, np.ndarray],
             threshold: float = 0.5) -> dict:
    x, y = data
    if len(x) == 0:
        raise EmptyData("empty evaluation set")
    scores = predict_scores(model, np.asarray(x))
    counts = confusion(scores >= threshold, y)
    result = metrics_from_counts(counts)
    result["threshold"] = threshold
    result["n"] = counts.total
    return result


def roc_auc(scores, labels) -> RocCurve:
    """Threshold sweep over all distinct scores plus the +/-inf endpoints."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels).astype(bool)
    n_pos = int(labels.sum())
    n_neg = int((~labels).sum())
    if n_pos == 0 or n_neg == 0:
        raise SingleClass("ROC needs both classes present")
    order = np.argsort(-scores, kind="stable")
    sorted_scores = scores[order]
    sorted_labels = labels[order]
    points = [(0.0, 0.0)]
    thresholds = [float("inf")]
    tp = fp = 0
    i = 0
    n = len(scores)
    while i < n:
        j = i
        while j < n and sorted_scores[j] == sorted_scores[i]:
            tp += bool(sorted_labels[j])
            fp += not sorted_labels[j]
            j += 1
        points.append((fp / n_neg, tp / n_pos))
        thresholds.append(float(sorted_scores[i]))
        i = j
    auc = 0.0
    for (x0, y0), (x1, y1) in zip(points[:-1], points[1:]):
        auc += (x1 - x0) * (y0 + y1) / 2.0
    return RocCurve(points=points, thresholds=thresholds, auc=float(auc))


def write_roc_csv(curve: RocCurve, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = ["threshold,fpr,tpr"]
    lines += [f"{t!r},{fpr!r},{tpr!r}"
              for t, (fpr, tpr) in zip(curve.thresholds, curve.points)]
    path.write_text("\n".join(lines) + "\n")
    return path


def compare_runs(runs: list[dict]) -> list[dict]:
    """Side-by-side metric table for runs on the same test manifest."""
    if len(runs) < 2:
        raise ValueError("need at least two runs to compare")
    manifests = {r.get("test_manifest_hash") for r in runs}
    if len(manifests) > 1:
        raise ManifestMismatch(f"runs evaluated on different manifests: {manifests}")
    rows = []
    for r in runs:
        rows.append({
            "run": r.get("name", "unnamed"),
            "accuracy": r.get("accuracy"),
            "sensitivity": r.get("sensitivity"),
            "specificity": r.get("specificity"),
            "auc": r.get("auc"),
        })
    return rows


def write_comparison(rows: list[dict], path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    cols = ["run", "accuracy", "sensitivity", "specificity", "auc"]
    lines = [",".join(cols)]
    for r in rows:
        lines.append(",".join("" if r[c] is None else str(r[c]) for c in cols))
    path.write_text("\n".join(lines) + "\n")
    path.with_suffix(".json").write_text(json.dumps(rows, indent=1))
    return path
