import sys

import numpy as np
import pytest

from planlat.planingest import PlanNode, PlanTree, SynthConfig, default_schema, fit_encoder, synth_generate
from planlat.plannet import Hyperparams, init_model


def scan(rows=1000.0, rel="orders", cost=100.0, latency=None, kind="seq-scan"):
    return PlanNode(kind, {"plan-rows": rows, "total-cost": cost, "plan-width": 8.0,
                           "relation-name": rel}, [], latency)


def join(left, right, rows=500.0, latency=None, jt="inner", kind="hash-join"):
    return PlanNode(kind, {"plan-rows": rows, "total-cost": 400.0, "plan-width": 16.0,
                           "join-type": jt}, [left, right], latency)


def random_tree(rng, min_nodes=3, max_nodes=7, labeled=True):
    """Random plan with between min_nodes and max_nodes operators."""
    target = int(rng.integers(min_nodes, max_nodes + 1))

    def lat():
        return float(rng.uniform(0.1, 2.0)) if labeled else None

    def build(budget):
        if budget <= 1:
            return PlanNode(("seq-scan", "index-scan")[int(rng.integers(2))],
                            {"plan-rows": float(rng.integers(1, 10_000)),
                             "total-cost": float(rng.uniform(1, 1000)),
                             "relation-name": ("a", "b", "c")[int(rng.integers(3))]},
                            [], lat())
        if budget >= 3 and rng.random() < 0.6:
            left = int(rng.integers(1, budget - 1))
            kind = ("hash-join", "merge-join", "nested-loop-join")[int(rng.integers(3))]
            return PlanNode(kind, {"plan-rows": float(rng.integers(1, 10_000)),
                                   "total-cost": float(rng.uniform(1, 5000)),
                                   "join-type": ("inner", "semi")[int(rng.integers(2))]},
                            [build(left), build(budget - 1 - left)], lat())
        kind = ("sort", "aggregate", "filter")[int(rng.integers(3))]
        return PlanNode(kind, {"plan-rows": float(rng.integers(1, 10_000)),
                               "total-cost": float(rng.uniform(1, 5000))},
                        [build(budget - 1)], lat())

    return build(target)


@pytest.fixture(scope="session")
def schema():
    return default_schema()


@pytest.fixture(scope="session")
def small_corpus():
    return synth_generate(SynthConfig(n_plans=120, n_templates=8, depth_range=(1, 3), seed=3))


@pytest.fixture(scope="session")
def encoder(small_corpus, schema):
    return fit_encoder(small_corpus, schema)


@pytest.fixture
def small_model(encoder):
    return init_model(encoder, Hyperparams(hidden_layers=2, hidden_width=8, d=3, seed=1))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def tree_of(node, id="p", template=None):
    return PlanTree(id, node, template)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
