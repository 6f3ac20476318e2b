"""Query-level accuracy metrics and the calibrated-cost baseline."""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field

import numpy as np

from .errors import FitError, MetricError, UsageError

EPSILON = 1e-6  # seconds; floor for predictions inside ratio metrics
REPORT_FORMAT = "planlat-report"
REPORT_VERSION = 1


def _pairs(actual, predicted):
    a = np.asarray(actual, dtype=np.float64)
    p = np.asarray(predicted, dtype=np.float64)
    if a.shape != p.shape or a.ndim != 1:
        raise MetricError("actual and predicted must be equal-length sequences")
    return a, p


def relative_error(actual, predicted):
    """Mean of ``|actual - predicted| / actual``."""
    a, p = _pairs(actual, predicted)
    if a.size == 0:
        raise MetricError("no pairs")
    if np.any(a <= 0):
        raise MetricError(f"{int(np.sum(a <= 0))} pairs have actual latency <= 0")
    return float(np.mean(np.abs(a - p) / a))


def mean_absolute_error(actual, predicted):
    a, p = _pairs(actual, predicted)
    if a.size == 0:
        raise MetricError("no pairs")
    return float(np.mean(np.abs(a - p)))


def r_factor(actual, predicted, eps=EPSILON):
    """``max(actual/predicted, predicted/actual)`` with predictions floored at ``eps``."""
    if actual <= 0:
        raise MetricError("actual latency must be > 0")
    pred = max(float(predicted), eps)
    return max(actual / pred, pred / actual)


def r_values(actual, predicted, eps=EPSILON):
    a, p = _pairs(actual, predicted)
    if np.any(a <= 0):
        raise MetricError("actual latency must be > 0")
    p = np.maximum(p, eps)
    return np.maximum(a / p, p / a)


def factor_buckets(rs):
    """Fractions with ``R <= 1.5``, ``1.5 < R < 2``, ``R >= 2``."""
    r = np.asarray(rs, dtype=np.float64)
    if r.size == 0:
        raise MetricError("no R values")
    low = int(np.sum(r <= 1.5))
    high = int(np.sum(r >= 2.0))
    mid = r.size - low - high
    return (low / r.size, mid / r.size, high / r.size)


def cdf_points(rs):
    """``(k/n, R_k)`` for the k-th smallest R value."""
    r = np.sort(np.asarray(rs, dtype=np.float64))
    if r.size == 0:
        raise MetricError("no R values")
    n = r.size
    return [((k + 1) / n, float(v)) for k, v in enumerate(r)]


@dataclass
class EvalReport:
    relative_error: float
    mean_absolute_error: float
    r_values: list
    buckets: tuple
    cdf: list
    per_template_mae: dict = field(default_factory=dict)
    n: int = 0

    def summary(self):
        return {
            "n": self.n,
            "relative_error": self.relative_error,
            "mean_absolute_error": self.mean_absolute_error,
            "buckets": {"le_1_5": self.buckets[0], "1_5_to_2": self.buckets[1],
                        "ge_2": self.buckets[2]},
            "median_r": float(np.median(self.r_values)),
            "per_template_mae": dict(sorted(self.per_template_mae.items())),
        }


def evaluate_predictions(actual, predicted, templates=None):
    """Bundle every metric for root-level ``(actual, predicted)`` pairs."""
    a, p = _pairs(actual, predicted)
    rs = r_values(a, p)
    per_template = {}
    if templates is not None:
        tags = np.array([t if t is not None else "" for t in templates], dtype=object)
        for tag in sorted(set(tags.tolist())):
            mask = tags == tag
            per_template[tag] = mean_absolute_error(a[mask], p[mask])
    return EvalReport(
        relative_error=relative_error(a, p),
        mean_absolute_error=mean_absolute_error(a, p),
        r_values=rs.tolist(),
        buckets=factor_buckets(rs),
        cdf=cdf_points(rs),
        per_template_mae=per_template,
        n=int(a.size),
    )


def report_to_json(reports, meta=None):
    """Serialize ``{name: EvalReport}`` as a versioned JSON document."""
    doc = {"format": REPORT_FORMAT, "version": REPORT_VERSION, "meta": meta or {},
           "reports": {name: r.summary() for name, r in sorted(reports.items())}}
    return json.dumps(doc, sort_keys=True, indent=1) + "\n"


def cdf_to_csv(reports):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["model", "fraction", "r"])
    for name, rep in sorted(reports.items()):
        for frac, r in rep.cdf:
            w.writerow([name, repr(frac), repr(r)])
    return buf.getvalue()


def template_mae_to_csv(reports):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["model", "template", "mae"])
    for name, rep in sorted(reports.items()):
        for tag, mae in sorted(rep.per_template_mae.items()):
            w.writerow([name, tag, repr(mae)])
    return buf.getvalue()


# calibrated cost baseline

BASELINE_FEATURES = ("total-cost", "plan-rows", "plan-width")


def root_features(tree):
    attrs = tree.root.attrs
    return [float(attrs.get(name, 0.0) or 0.0) for name in BASELINE_FEATURES]


class CalibratedCostModel:
    """Least-squares map from root optimizer estimates to latency.

    Design columns are an intercept plus the root's total cost, row estimate
    and row width. Columns that are constant over the training corpus are
    dropped, and a constant latency gives an intercept-only fit. If the
    remaining design is still rank deficient the fit falls back to a single
    cost coefficient through the origin.
    """

    def __init__(self):
        self.columns = None  # indices into BASELINE_FEATURES
        self.intercept = 0.0
        self.coef = None
        self.mode = None
        self.fitted = False

    def design(self, X):
        X = np.asarray(X, dtype=np.float64)
        cols = [np.ones(X.shape[0])] if self.mode != "cost-only" else []
        cols.extend(X[:, j] for j in self.columns)
        return np.column_stack(cols)

    def fit(self, corpus):
        corpus = list(corpus)
        if not corpus:
            raise UsageError("cannot fit the baseline on an empty corpus")
        y = np.array([t.latency for t in corpus], dtype=np.float64)
        if np.any(~np.isfinite(y)):
            raise FitError("baseline needs labeled root latencies")
        X = np.array([root_features(t) for t in corpus])
        self.columns = [j for j in range(X.shape[1]) if np.ptp(X[:, j]) > 0]
        self.mode = "ols"
        if np.ptp(y) == 0 or not self.columns:
            self.mode, self.columns = "intercept", []
        A = self.design(X)
        if np.linalg.matrix_rank(A) < A.shape[1]:
            self._fit_cost_only(X, y)
        else:
            beta, *_ = np.linalg.lstsq(A, y, rcond=None)
            self.intercept = float(beta[0])
            self.coef = beta[1:]
        if not (np.isfinite(self.intercept) and np.all(np.isfinite(self.coef))):
            raise FitError("baseline coefficients are not finite")
        self.fitted = True
        return self

    def _fit_cost_only(self, X, y):
        cost = X[:, 0]
        denom = float(cost @ cost)
        if denom == 0.0:
            raise FitError("singular design and zero total cost everywhere")
        self.mode = "cost-only"
        self.columns = [0]
        self.intercept = 0.0
        self.coef = np.array([float(cost @ y) / denom])

    def predict_features(self, X):
        if not self.fitted:
            raise UsageError("baseline is not fitted")
        A = self.design(np.atleast_2d(X))
        if self.mode == "cost-only":
            beta = self.coef
        else:
            beta = np.concatenate([[self.intercept], self.coef])
        return A @ beta

    def predict(self, tree):
        return float(self.predict_features([root_features(tree)])[0])

    def predict_many(self, trees):
        return self.predict_features([root_features(t) for t in trees])

    def to_dict(self):
        return {"mode": self.mode, "features": [BASELINE_FEATURES[j] for j in self.columns],
                "intercept": self.intercept, "coef": [float(c) for c in self.coef]}


def fit_baseline(corpus):
    return CalibratedCostModel().fit(corpus)


def baseline_predict(model, tree):
    return model.predict(tree)
