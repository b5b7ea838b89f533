"""Confusion matrices and the two accuracy summaries used throughout.

WA (weighted accuracy) is the overall fraction correct: trace / total.
UA (unweighted accuracy) is the mean of per-class recalls over classes that
actually appear, so it ignores class imbalance.
"""

import numpy as np

from .errors import InvalidInput


def confusion_matrix(true_labels, pred_labels, num_classes: int) -> np.ndarray:
    """K x K count matrix with rows indexed by true label."""
    conf = np.zeros((num_classes, num_classes), dtype=np.int64)
    for t, p in zip(true_labels, pred_labels, strict=True):
        conf[int(t), int(p)] += 1
    return conf


def compute_wa_ua(confusion) -> tuple[float, float]:
    conf = np.asarray(confusion, dtype=np.float64)
    if conf.ndim != 2 or conf.shape[0] != conf.shape[1]:
        raise InvalidInput(f"confusion matrix must be square, got {conf.shape}")
    if np.any(conf < 0):
        raise InvalidInput("confusion matrix has negative counts")
    total = conf.sum()
    if total == 0:
        raise InvalidInput("confusion matrix is empty")
    wa = float(np.trace(conf) / total)
    support = conf.sum(axis=1)
    present = support > 0
    recalls = np.diag(conf)[present] / support[present]
    ua = float(recalls.mean())
    return wa, ua


def format_confusion(confusion, class_names) -> str:
    """Aligned text table, rows = true classes."""
    conf = np.asarray(confusion)
    width = max(len(str(n)) for n in class_names)
    width = max(width, len(str(int(conf.max(initial=0)))), 5)
    header = " " * (width + 2) + " ".join(f"{n:>{width}}" for n in class_names)
    lines = [header]
    for name, row in zip(class_names, conf):
        lines.append(f"{name:>{width}} |" + " ".join(f"{int(v):>{width}}" for v in row))
    return "\n".join(lines)
