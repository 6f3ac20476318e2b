"""Seeded synthetic plan corpora with closed-form latencies.

Each node's inclusive latency is

* leaf:      ``a[kind] * rows + c[kind]``
* internal:  ``sum(child latencies) + b[kind] * rows_out``
             plus ``j[kind] * rows_l * rows_r / (rows_l + rows_r)`` for joins

multiplied by lognormal noise ``exp(sigma * z)`` drawn per node. Plans are
drawn from a fixed number of templates; a template fixes the tree shape and
the categorical attributes, instances vary the row counts.

The optimizer-side ``total-cost`` follows a different (miscalibrated) linear
recipe so that a cost-calibrated baseline has something to get wrong.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..errors import UsageError
from .plan import PlanNode, PlanTree

JOIN_KINDS = ("hash-join", "merge-join", "nested-loop-join")
UNARY_KINDS = ("sort", "aggregate", "filter")
SCAN_KINDS = ("seq-scan", "index-scan")


def default_coefficients():
    return {
        "seq-scan": {"a": 2.0e-6, "c": 0.05},
        "index-scan": {"a": 4.0e-6, "c": 0.03},
        "hash-join": {"b": 4.0e-7, "j": 1.5e-6},
        "merge-join": {"b": 3.0e-7, "j": 2.5e-6},
        "nested-loop-join": {"b": 5.0e-7, "j": 6.0e-6},
        "hash": {"b": 6.0e-7},
        "sort": {"b": 1.5e-6},
        "aggregate": {"b": 8.0e-7},
        "filter": {"b": 3.0e-7},
        "append": {"b": 1.0e-7},
    }


# per-row optimizer cost units; deliberately not proportional to the latency
# coefficients above
COST_PER_ROW = {
    "seq-scan": 0.01, "index-scan": 0.04, "hash-join": 0.01, "merge-join": 0.01,
    "nested-loop-join": 0.01, "hash": 0.01, "sort": 0.05, "aggregate": 0.02, "filter": 0.0025,
    "append": 0.001,
}

DEFAULT_RELATIONS = {
    "lineitem": 300_000, "orders": 150_000, "customer": 75_000, "part": 100_000,
    "partsupp": 200_000, "supplier": 50_000,
}
REL_WIDTH = {
    "lineitem": 120, "orders": 100, "customer": 160, "part": 130,
    "partsupp": 140, "supplier": 140, "nation": 110, "region": 120,
}


@dataclass
class SynthConfig:
    """Generator knobs. Ranges are inclusive ``(lo, hi)`` pairs."""

    n_plans: int = 2000
    n_templates: int = 40
    depth_range: tuple = (1, 4)
    fanout_range: tuple = (2, 2)
    operator_mix: dict = field(default_factory=lambda: {
        "hash-join": 3.0, "merge-join": 1.0, "nested-loop-join": 1.0,
        "sort": 1.0, "aggregate": 1.0, "filter": 1.0})
    scan_mix: dict = field(default_factory=lambda: {"seq-scan": 2.0, "index-scan": 1.0})
    coefficients: dict = field(default_factory=default_coefficients)
    relations: dict = field(default_factory=lambda: dict(DEFAULT_RELATIONS))
    scan_selectivity: tuple = (0.25, 1.0)
    sigma: float = 0.1
    seed: int = 0

    def __post_init__(self):
        for name in ("depth_range", "fanout_range", "scan_selectivity"):
            lo, hi = getattr(self, name)
            if lo > hi:
                raise UsageError(f"{name} is empty: {lo} > {hi}")
            setattr(self, name, (lo, hi))
        if self.depth_range[0] < 1:
            raise UsageError("depth_range must start at 1 or more")
        if self.fanout_range[0] < 2:
            raise UsageError("fanout_range must start at 2 or more")
        if self.sigma < 0:
            raise UsageError("sigma must be >= 0")
        if self.n_plans < 0 or self.n_templates < 1:
            raise UsageError("n_plans must be >= 0 and n_templates >= 1")
        if not self.relations or not self.scan_mix:
            raise UsageError("relations and scan_mix must be nonempty")

    def to_dict(self):
        return {
            "n_plans": self.n_plans, "n_templates": self.n_templates,
            "depth_range": list(self.depth_range), "fanout_range": list(self.fanout_range),
            "operator_mix": dict(self.operator_mix), "scan_mix": dict(self.scan_mix),
            "coefficients": {k: dict(v) for k, v in self.coefficients.items()},
            "relations": dict(self.relations), "scan_selectivity": list(self.scan_selectivity),
            "sigma": self.sigma, "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        for name in ("depth_range", "fanout_range", "scan_selectivity"):
            if name in d:
                d[name] = tuple(d[name])
        return cls(**d)


def leaf_latency(coeffs, rows):
    return coeffs["a"] * rows + coeffs["c"]


def internal_latency(kind, coeffs, rows_out, child_latencies, child_rows):
    lat = sum(child_latencies) + coeffs["b"] * rows_out
    if kind in JOIN_KINDS:
        left, right = child_rows[0], child_rows[1]
        lat += coeffs["j"] * left * right / (left + right)
    return lat


def _pick(rng, mix):
    names = sorted(mix)
    w = np.array([mix[n] for n in names], dtype=np.float64)
    return names[int(rng.choice(len(names), p=w / w.sum()))]


class _Template:
    """A tree skeleton: nested ``(kind, fixed_attrs, children)`` tuples."""

    def __init__(self, name, skeleton):
        self.name = name
        self.skeleton = skeleton


def _make_skeleton(rng, cfg, depth):
    if depth <= 1:
        kind = _pick(rng, cfg.scan_mix)
        rel = sorted(cfg.relations)[int(rng.integers(len(cfg.relations)))]
        fixed = {"relation-name": rel}
        if kind == "index-scan":
            fixed["index-name"] = f"{rel}_pkey"
            fixed["scan-direction"] = bool(rng.random() < 0.8)
        return (kind, fixed, [])
    kind = _pick(rng, cfg.operator_mix)
    sub = depth - 1
    if kind in JOIN_KINDS:
        fixed = {"join-type": ("inner", "inner", "semi", "anti")[int(rng.integers(4))]}
        # one side may be shallower so depths vary within the requested range
        left = _make_skeleton(rng, cfg, sub)
        right = _make_skeleton(rng, cfg, int(rng.integers(1, sub + 1)))
        if kind == "hash-join":
            right = ("hash", {"hash-algorithm": "murmur"}, [right])
        return (kind, fixed, [left, right])
    if kind == "append":
        n = int(rng.integers(cfg.fanout_range[0], cfg.fanout_range[1] + 1))
        return (kind, {}, [_make_skeleton(rng, cfg, sub) for _ in range(n)])
    if kind == "sort":
        fixed = {"sort-method": ("quicksort", "external merge")[int(rng.integers(2))],
                 "sort-key": f"k{int(rng.integers(3))}"}
    elif kind == "aggregate":
        fixed = {"strategy": ("plain", "sorted", "hashed")[int(rng.integers(3))],
                 "partial-mode": False,
                 "operator": ("sum", "avg", "max")[int(rng.integers(3))]}
    else:
        fixed = {}
    return (kind, fixed, [_make_skeleton(rng, cfg, sub)])


def _instantiate(rng, cfg, skeleton):
    """Return ``(node, rows_out, cost)`` with latencies filled in bottom-up."""
    kind, fixed, kids = skeleton
    coeffs = cfg.coefficients[kind]
    attrs = dict(fixed)
    if not kids:
        rel = fixed["relation-name"]
        lo, hi = cfg.scan_selectivity
        sel = rng.uniform(lo, hi) if hi > lo else lo
        rows = max(1.0, round(cfg.relations[rel] * sel))
        width = REL_WIDTH.get(rel, 100)
        latency = leaf_latency(coeffs, rows)
        cost = COST_PER_ROW.get(kind, 0.01) * cfg.relations[rel] * (sel if kind == "index-scan" else 1.0)
        attrs["estimated-ios"] = float(math.ceil(rows * width / 8192.0))
        children = []
    else:
        built = [_instantiate(rng, cfg, k) for k in kids]
        children = [b[0] for b in built]
        child_rows = [b[1] for b in built]
        child_lat = [c.latency for c in children]
        child_cost = sum(b[2] for b in built)
        if kind in JOIN_KINDS:
            rows = max(1.0, round(max(child_rows) * rng.uniform(0.2, 1.0)))
            width = sum(c.attrs["plan-width"] for c in children)
            cost = child_cost + COST_PER_ROW[kind] * (child_rows[0] + child_rows[1])
        elif kind == "aggregate":
            rows = 1.0 if fixed["strategy"] == "plain" else max(1.0, round(child_rows[0] * rng.uniform(0.001, 0.1)))
            width = 40
            cost = child_cost + COST_PER_ROW[kind] * child_rows[0]
        elif kind == "append":
            rows = sum(child_rows)
            width = max(c.attrs["plan-width"] for c in children)
            cost = child_cost + COST_PER_ROW[kind] * rows
        elif kind == "filter":
            rows = max(1.0, round(child_rows[0] * rng.uniform(0.1, 1.0)))
            width = children[0].attrs["plan-width"]
            cost = child_cost + COST_PER_ROW[kind] * child_rows[0]
        else:
            rows = child_rows[0]
            width = children[0].attrs["plan-width"]
            cost = child_cost + COST_PER_ROW.get(kind, 0.01) * rows
        if kind == "hash":
            attrs["hash-buckets"] = float(2 ** max(10, math.ceil(math.log2(rows))))
        latency = internal_latency(kind, coeffs, rows, child_lat, child_rows)
    if cfg.sigma > 0:
        latency *= math.exp(cfg.sigma * rng.standard_normal())
    attrs["plan-rows"] = float(rows)
    attrs["plan-width"] = float(width)
    attrs["total-cost"] = round(float(cost), 2)
    return PlanNode(kind, attrs, children, latency), rows, cost


def synth_generate(config):
    """Generate ``config.n_plans`` labeled plans; deterministic per seed."""
    rng = np.random.default_rng(config.seed)
    lo, hi = config.depth_range
    templates = []
    for t in range(config.n_templates):
        depth = int(rng.integers(lo, hi + 1))
        templates.append(_Template(f"t{t:03d}", _make_skeleton(rng, config, depth)))
    corpus = []
    for i in range(config.n_plans):
        tpl = templates[int(rng.integers(len(templates)))]
        node, _, _ = _instantiate(rng, config, tpl.skeleton)
        corpus.append(PlanTree(f"s{i:06d}", node, tpl.name))
    return corpus
