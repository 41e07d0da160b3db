"""Evaluation metrics (MSE, RMSE, Pearson r, concordance index, AUC) and
the exact binomial sign test, computed in log space."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, asdict

import numpy as np
from scipy.special import gammaln, logsumexp
from scipy.stats import rankdata

__all__ = [
    "MetricReport",
    "SignTestResult",
    "concordance_index",
    "regression_metrics",
    "auc",
    "sign_test",
    "binomial_sign_test",
    "evaluate",
    "report_to_csv_rows",
]

REGRESSION_TASKS = ("kd", "ki", "ic50", "ec50", "ph", "qed")


def concordance_index(y_true, y_pred):
    """Fraction of comparable pairs (true_i > true_j) ranked concordantly;
    prediction ties count 0.5."""
    y = np.asarray(y_true, dtype=np.float64)
    f = np.asarray(y_pred, dtype=np.float64)
    if y.shape != f.shape or y.ndim != 1:
        raise ValueError("inputs must be equal-length 1-D arrays")
    n = y.size
    if n < 2:
        raise ValueError("need at least 2 values")
    hits = 0.0
    comparable = 0
    chunk = 512
    for start in range(0, n, chunk):
        yi = y[start:start + chunk, None]
        fi = f[start:start + chunk, None]
        gt = yi > y[None, :]
        comparable += int(gt.sum())
        df = fi - f[None, :]
        hits += float(((df > 0) & gt).sum()) + 0.5 * float(((df == 0) & gt).sum())
    if comparable == 0:
        raise ValueError("all true values equal: no comparable pairs")
    return hits / comparable


def regression_metrics(y_true, y_pred):
    """(mse, rmse, pearson_r); r is None when either side is constant."""
    y = np.asarray(y_true, dtype=np.float64)
    f = np.asarray(y_pred, dtype=np.float64)
    if y.shape != f.shape:
        raise ValueError("length mismatch")
    if y.size < 2:
        raise ValueError("need at least 2 values")
    mse = float(np.mean((y - f) ** 2))
    rmse = math.sqrt(mse)
    sy, sf = y.std(), f.std()
    if sy == 0.0 or sf == 0.0:
        r = None
    else:
        r = float(np.mean((y - y.mean()) * (f - f.mean())) / (sy * sf))
    return mse, rmse, r


def auc(y_true, scores):
    """Probability that a random positive outranks a random negative
    (rank-sum formulation, ties at 0.5)."""
    y = np.asarray(y_true)
    s = np.asarray(scores, dtype=np.float64)
    pos = int((y == 1).sum())
    neg = int((y == 0).sum())
    if pos == 0 or neg == 0:
        raise ValueError("AUC needs both classes present")
    ranks = rankdata(s)
    return float((ranks[y == 1].sum() - pos * (pos + 1) / 2.0) / (pos * neg))


@dataclass
class SignTestResult:
    n_pairs: int
    n_positive: int
    n_negative: int
    n_ties_dropped: int
    log10_p: float
    p_value: float


def binomial_sign_test(n_positive, n_negative, n_ties_dropped=0):
    """Two-sided exact binomial test at p=0.5 on sign counts.

    The p-value is assembled in log space from log-gamma binomial
    coefficients, so extreme results (p ~ 1e-85) stay representable;
    ``log10_p`` is the authoritative output.
    """
    n = n_positive + n_negative
    if n == 0:
        raise ValueError("no pairs left after dropping ties")
    k = max(n_positive, n_negative)
    i = np.arange(k, n + 1)
    log_coeffs = gammaln(n + 1) - gammaln(i + 1) - gammaln(n - i + 1)
    log_tail = logsumexp(log_coeffs) + n * math.log(0.5)
    log_p = min(0.0, math.log(2.0) + log_tail)
    return SignTestResult(
        n_pairs=n,
        n_positive=n_positive,
        n_negative=n_negative,
        n_ties_dropped=n_ties_dropped,
        log10_p=log_p / math.log(10.0),
        p_value=math.exp(log_p),
    )


def sign_test(pred_a, pred_b, reference):
    """Sign test on paired absolute errors of two prediction vectors
    against a shared ground truth; exact ties are dropped."""
    a = np.asarray(pred_a, dtype=np.float64)
    b = np.asarray(pred_b, dtype=np.float64)
    ref = np.asarray(reference, dtype=np.float64)
    if not a.shape == b.shape == ref.shape:
        raise ValueError("inputs must have equal lengths")
    diffs = np.abs(a - ref) - np.abs(b - ref)
    n_pos = int((diffs > 0).sum())
    n_neg = int((diffs < 0).sum())
    return binomial_sign_test(n_pos, n_neg,
                              n_ties_dropped=int((diffs == 0).sum()))


@dataclass
class TaskMetrics:
    n_evaluated: int
    mse: float | None = None
    rmse: float | None = None
    pearson_r: float | None = None
    ci: float | None = None
    auc: float | None = None


@dataclass
class MetricReport:
    tasks: dict            # task name -> TaskMetrics

    def to_json(self):
        return json.dumps({t: asdict(m) for t, m in self.tasks.items()},
                          indent=2, sort_keys=True)


def evaluate(predictions, labels):
    """Per-task metrics over present labels only.

    ``predictions`` and ``labels`` map task name to arrays; ``labels``
    values are (values, present_mask) pairs. Tasks with fewer than 2
    present labels are reported with counts only.
    """
    report = {}
    for task, (values, mask) in labels.items():
        mask = np.asarray(mask, dtype=bool)
        n = int(mask.sum())
        tm = TaskMetrics(n_evaluated=n)
        if n >= 2:
            y = np.asarray(values, dtype=np.float64)[mask]
            p = np.asarray(predictions[task], dtype=np.float64)[mask]
            if task == "active":
                try:
                    tm.auc = auc(y, p)
                except ValueError:
                    pass
            else:
                tm.mse, tm.rmse, tm.pearson_r = regression_metrics(y, p)
                try:
                    tm.ci = concordance_index(y, p)
                except ValueError:
                    pass
        report[task] = tm
    return MetricReport(tasks=report)


def report_to_csv_rows(report, model_name, partition):
    rows = []
    for task, tm in report.tasks.items():
        for metric in ("mse", "rmse", "pearson_r", "ci", "auc"):
            value = getattr(tm, metric)
            if value is not None:
                rows.append((model_name, partition, task, metric, value))
    return rows


def write_report_files(report, json_path, csv_path, model_name, partition):
    with open(json_path, "w") as fh:
        fh.write(report.to_json())
        fh.write("\n")
    with open(csv_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(("model", "partition", "task", "metric", "value"))
        writer.writerows(report_to_csv_rows(report, model_name, partition))
