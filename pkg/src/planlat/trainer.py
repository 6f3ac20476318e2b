"""Training: the all-operator loss, subtree caching and structure-grouped batches.

The optimized objective is the mean squared latency error over every operator
of every plan; reports use its square root (RMSE). Batches are partitioned
by structure signature, each group's gradient is computed with one batched
pass, and the group gradients are combined with weights ``w_i`` and
normalization ``1 / sum(w_i)``. With operator-count weights that combination
is exactly the gradient of the whole-batch mean squared error.
"""
from __future__ import annotations

import csv
import math
import os
import time
from dataclasses import dataclass, field

import numpy as np

from .diffnet import Graph, sgd_step
from .errors import TrainingDataError, TrainingError, UsageError
from .planingest.plan import PlanTree
from .plannet import (
    PreparedPlan,
    UnitOutput,
    check_kinds,
    forward_group,
    group_by_signature,
    predict_prepared,
    prepare,
)

STATS_FIELDS = ("epoch", "train_rmse", "test_mae", "wall_seconds")


@dataclass
class TrainConfig:
    lr: float = 0.001
    momentum: float = 0.9
    epochs: int = 200
    batch_size: int = 256
    seed: int = 0
    holdout: str = "random"  # "random" | "template" | "none"
    holdout_fraction: float = 0.1
    holdout_templates: int = 10
    weighting: str = "operators"  # or "plans"

    def __post_init__(self):
        if not self.lr > 0:
            raise UsageError("lr must be > 0")
        if not 0 <= self.momentum < 1:
            raise UsageError("momentum must be in [0, 1)")
        if self.epochs < 0:
            raise UsageError("epochs must be >= 0")
        if self.batch_size < 1:
            raise UsageError("batch_size must be >= 1")
        if self.holdout not in ("random", "template", "none"):
            raise UsageError(f"unknown holdout mode {self.holdout!r}")
        if not 0 <= self.holdout_fraction < 1:
            raise UsageError("holdout_fraction must be in [0, 1)")
        if self.weighting not in ("operators", "plans"):
            raise UsageError(f"unknown weighting {self.weighting!r}")


def _require_labels(plan):
    if plan.targets is None:
        for path, node in plan.tree.walk():
            if node.latency is None:
                raise TrainingDataError(f"plan {plan.tree.id} node {path} ({node.kind}) has no latency")
    return plan.targets


def _as_prepared(model, trees):
    if trees and isinstance(trees[0], PreparedPlan):
        return list(trees)
    return prepare(model, list(trees))


def group_sse(model, graph, plans):
    """Graph node of the summed squared error over every operator of ``plans``.

    Each node output is computed once and reused by its own error term and
    by its parent, so a plan costs exactly one unit call per node.
    """
    targets = [_require_labels(p) for p in plans]
    outs = forward_group(model, graph, plans)
    lat = graph.concat([graph.column(o, 0) for o in outs])
    # position-major, matching the concat order above
    y = np.stack(targets, axis=0).T.reshape(-1)
    err = graph.sub(lat, graph.input(y))
    return graph.sum(graph.square(err)), outs


def tree_loss_cached(model, tree):
    """``(sse, outputs)`` for one plan; outputs keyed by node path."""
    check_kinds(model, tree)
    plan = PreparedPlan(tree, model.encoder)
    sse, outs = group_sse(model, Graph(), [plan])
    outputs = {path: UnitOutput.from_vector(o.value[0]) for path, o in zip(plan.layout.paths, outs)}
    return float(sse.value), outputs


def tree_loss_naive(model, tree):
    """Reference SSE that re-evaluates the whole subtree under every node."""
    check_kinds(model, tree)
    sse = 0.0
    for path, node in tree.walk():
        if node.latency is None:
            raise TrainingDataError(f"plan {tree.id} node {path} ({node.kind}) has no latency")
        sub = PreparedPlan(PlanTree(f"{tree.id}@{path}", node), model.encoder)
        outs = forward_group(model, Graph(), [sub])
        sse += (float(outs[-1].value[0, 0]) - node.latency) ** 2
    return sse


def corpus_sse(model, trees):
    """``(total squared error, operator count)`` over a corpus."""
    plans = _as_prepared(model, trees)
    total, count = 0.0, 0
    for idx in group_by_signature(plans).values():
        group = [plans[i] for i in idx]
        sse, _ = group_sse(model, Graph(), group)
        total += float(sse.value)
        count += len(group) * len(group[0].layout)
    return total, count


def full_loss(model, corpus):
    """Root mean squared latency error over all operators of ``corpus``."""
    corpus = list(corpus)
    if not corpus:
        raise UsageError("full_loss needs a nonempty corpus")
    total, count = corpus_sse(model, corpus)
    return math.sqrt(total / count)


@dataclass
class GroupedGradient:
    grads: dict  # param id -> combined gradient
    signatures: list
    weights: list
    normalization: float
    sse: float  # summed squared error of the batch
    n_ops: int

    @property
    def mse(self):
        return self.sse / self.n_ops


def group_weights(sizes, weighting="operators"):
    """``(weights, normalization)`` for groups given as ``(plans, operators)`` pairs."""
    w = [ops if weighting == "operators" else plans for plans, ops in sizes]
    return w, 1.0 / sum(w)


def grouped_gradient(model, batch, weighting="operators"):
    """Structure-grouped gradient of the batch's mean squared operator error.

    ``batch`` holds plan trees or prepared plans. Groups are processed in
    sorted signature order so the reduction is deterministic.
    """
    plans = _as_prepared(model, batch)
    if not plans:
        raise UsageError("grouped_gradient needs a nonempty batch")
    groups = group_by_signature(plans)
    sizes, group_grads = [], []
    sse_total = 0.0
    for idx in groups.values():
        group = [plans[i] for i in idx]
        n_ops = len(group) * len(group[0].layout)
        g = Graph()
        sse, _ = group_sse(model, g, group)
        g.backward(g.scale(sse, 1.0 / n_ops), accumulate=False)
        group_grads.append(g.param_grads())
        sizes.append((len(group), n_ops))
        sse_total += float(sse.value)
    weights, norm = group_weights(sizes, weighting)
    combined = {p.id: np.zeros_like(p.value) for p in model.parameters()}
    for w, pairs in zip(weights, group_grads):
        for p, grad in pairs:
            combined[p.id] += w * grad
    for acc in combined.values():
        acc *= norm
    return GroupedGradient(combined, list(groups), weights, norm, sse_total,
                           sum(ops for _, ops in sizes))


def flat_gradient(model, batch):
    """Reference gradient of the batch MSE: one graph, plans evaluated one by one."""
    plans = _as_prepared(model, batch)
    params = model.parameters()
    for p in params:
        p.zero_grad()
    g = Graph()
    terms = [group_sse(model, g, [plan])[0] for plan in plans]
    n_ops = sum(len(plan.layout) for plan in plans)
    total = terms[0]
    for t in terms[1:]:
        total = g.add(total, t)
    g.backward(g.scale(total, 1.0 / n_ops))
    grads = {p.id: p.grad.copy() for p in params}
    for p in params:
        p.zero_grad()
    return grads


# training loop


@dataclass
class EpochStats:
    epoch: int
    train_rmse: float
    test_mae: float
    wall_seconds: float

    def row(self):
        return [self.epoch, repr(self.train_rmse), repr(self.test_mae), f"{self.wall_seconds:.3f}"]


@dataclass
class TrainResult:
    model: object
    stats: list = field(default_factory=list)


def _labeled(model, trees):
    plans = _as_prepared(model, trees)
    for p in plans:
        _require_labels(p)
    return plans


def train(model, corpus, config, test=None, on_epoch=None):
    """Run ``config.epochs`` epochs of grouped-batch SGD on ``corpus``.

    ``test`` (optional) is scored by root-level MAE after every epoch.
    ``on_epoch`` is called with each :class:`EpochStats`.
    """
    plans = _labeled(model, corpus)
    test_plans = _labeled(model, test) if test else []
    test_actual = np.array([p.tree.latency for p in test_plans])
    params = model.parameters()
    rng = np.random.default_rng(config.seed)
    result = TrainResult(model)
    n = len(plans)
    if n == 0 and config.epochs > 0:
        raise UsageError("cannot train on an empty corpus")
    for epoch in range(1, config.epochs + 1):
        t0 = time.perf_counter()
        order = rng.permutation(n)
        sse, ops = 0.0, 0
        for start in range(0, n, config.batch_size):
            batch = [plans[i] for i in order[start:start + config.batch_size]]
            gg = grouped_gradient(model, batch, config.weighting)
            if not math.isfinite(gg.sse):
                raise TrainingError(f"training diverged at epoch {epoch}: non-finite loss")
            for p in params:
                p.grad[...] = gg.grads[p.id]
            try:
                sgd_step(params, config.lr, config.momentum)
            except TrainingError as exc:
                raise TrainingError(f"training diverged at epoch {epoch}: {exc}") from exc
            sse += gg.sse
            ops += gg.n_ops
        test_mae = float("nan")
        if test_plans:
            pred = predict_prepared(model, test_plans)
            test_mae = float(np.mean(np.abs(test_actual - pred)))
        stats = EpochStats(epoch, math.sqrt(sse / ops), test_mae, time.perf_counter() - t0)
        result.stats.append(stats)
        if on_epoch is not None:
            on_epoch(stats)
    return result


class StatsWriter:
    """Appends one CSV row per epoch, flushing as it goes."""

    def __init__(self, path):
        self.path = path
        fresh = not os.path.exists(path) or os.path.getsize(path) == 0
        self._fh = open(path, "a", newline="", encoding="utf-8")
        self._csv = csv.writer(self._fh, lineterminator="\n")
        if fresh:
            self._csv.writerow(STATS_FIELDS)

    def __call__(self, stats):
        self._csv.writerow(stats.row())
        self._fh.flush()

    def close(self):
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def holdout_split(corpus, config):
    """Split into ``(train, test)``; deterministic in ``config.seed``.

    ``random`` sends ``holdout_fraction`` of the plans to test; ``template``
    sends every instance of ``holdout_templates`` randomly chosen templates.
    Both lists keep the corpus order.
    """
    corpus = list(corpus)
    rng = np.random.default_rng(config.seed)
    if config.holdout == "none":
        return corpus, []
    if config.holdout == "random":
        n_test = int(round(config.holdout_fraction * len(corpus)))
        test_idx = set(rng.permutation(len(corpus))[:n_test].tolist())
        train = [t for i, t in enumerate(corpus) if i not in test_idx]
        test = [t for i, t in enumerate(corpus) if i in test_idx]
        return train, test
    if any(t.template is None for t in corpus):
        raise UsageError("template hold-out needs a template tag on every plan")
    templates = sorted({t.template for t in corpus})
    k = config.holdout_templates
    if k > len(templates):
        raise UsageError(f"asked to hold out {k} templates but only {len(templates)} exist")
    chosen = set(rng.choice(templates, size=k, replace=False).tolist()) if k else set()
    train = [t for t in corpus if t.template not in chosen]
    test = [t for t in corpus if t.template in chosen]
    return train, test
