"""Acceptance suite: one PASS/FAIL line per criterion.

Run with ``pytest tests/test_acceptance.py -v`` (lines appear in the terminal
summary) or directly with ``python tests/test_acceptance.py``.
"""
import copy
import json
import sys
import time
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from conftest import random_tree, tree_of  # noqa: E402
from planlat import evalkit  # noqa: E402
from planlat.cli import main as cli_main  # noqa: E402
from planlat.diffnet import Graph, finite_difference_grad, kernels  # noqa: E402
from planlat.planingest import (  # noqa: E402
    PlanNode,
    SynthConfig,
    default_schema,
    fit_encoder,
    synth_generate,
)
from planlat.plannet import (  # noqa: E402
    Hyperparams,
    NeuralUnit,
    PreparedPlan,
    evaluate_plan,
    init_model,
    predict_many,
)
from planlat.trainer import (  # noqa: E402
    TrainConfig,
    flat_gradient,
    group_sse,
    grouped_gradient,
    holdout_split,
    train,
    tree_loss_cached,
    tree_loss_naive,
)

RESULTS = []
FIXTURE = Path(__file__).parent / "fixtures" / "acceptance_e2e.json"


def report(n, ok, detail):
    line = f"{'PASS' if ok else 'FAIL'} criterion {n}: {detail}"
    RESULTS.append(line)
    print(line)
    return ok


def tensor_rel_err(a, b):
    denom = max(np.linalg.norm(a), np.linalg.norm(b))
    return 0.0 if denom < 1e-12 else float(np.linalg.norm(a - b) / denom)


def global_rel_err(ga, gb):
    num = np.sqrt(sum(np.sum((ga[k] - gb[k]) ** 2) for k in gb))
    den = np.sqrt(sum(np.sum(gb[k] ** 2) for k in gb))
    return 0.0 if den == 0 else float(num / den)


@pytest.fixture(scope="module")
def synth_encoder():
    corpus = synth_generate(SynthConfig(n_plans=300, n_templates=20, seed=21))
    return corpus, fit_encoder(corpus, default_schema())


def test_criterion_1_gradient_oracle():
    t0 = time.perf_counter()
    rng = np.random.default_rng(101)
    worst_unit = 0.0
    for i in range(50):
        hp = Hyperparams(hidden_layers=int(rng.integers(1, 4)), hidden_width=int(rng.integers(1, 17)),
                         d=int(rng.integers(1, 6)), seed=i)
        unit = NeuralUnit("u", int(rng.integers(1, 9)), int(rng.integers(0, 3)), hp, rng)
        x = rng.normal(size=(3, unit.input_width))
        y = rng.normal(size=(3, unit.output_width))

        def loss():
            g = Graph()
            return g, g.sum(g.square(g.sub(unit.forward(g, g.input(x)), g.input(y))))

        g, root = loss()
        g.backward(root)
        for p in unit.params():
            fd = finite_difference_grad(lambda: loss()[1].value, p, 1e-5)
            worst_unit = max(worst_unit, tensor_rel_err(p.grad, fd))
            p.zero_grad()

    # plan networks use an encoder fitted on the plans themselves
    plans = [tree_of(random_tree(rng, 3, 7), f"g{i}") for i in range(10)]
    encoder = fit_encoder(plans, default_schema())
    worst_plan = 0.0
    for i, tree in enumerate(plans):
        model = init_model(encoder, Hyperparams(hidden_layers=2, hidden_width=6, d=3, seed=i))
        n_ops = tree.root.size()
        grads = grouped_gradient(model, [tree]).grads
        plan = PreparedPlan(tree, encoder)
        used = set(plan.layout.kinds)

        def plan_loss():
            g = Graph()
            return float(group_sse(model, g, [plan])[0].value) / n_ops

        for p in model.parameters():
            if p.id.split("/")[0] not in used:
                continue
            fd = finite_difference_grad(plan_loss, p, 1e-5)
            worst_plan = max(worst_plan, tensor_rel_err(grads[p.id], fd))
    elapsed = time.perf_counter() - t0
    ok = worst_unit <= 1e-5 and worst_plan <= 1e-5 and elapsed < 30
    report(1, ok, f"max rel err units={worst_unit:.2e} plans={worst_plan:.2e} (<=1e-5), {elapsed:.1f}s (<30s)")
    assert ok


def test_criterion_2_caching_equivalence(synth_encoder):
    t0 = time.perf_counter()
    _, encoder = synth_encoder
    trees = synth_generate(SynthConfig(n_plans=200, n_templates=200, depth_range=(1, 4), seed=33))
    model = init_model(encoder, Hyperparams(hidden_layers=2, hidden_width=16, d=4, seed=2))

    def subtree_sizes(node):
        return node.size() + sum(subtree_sizes(c) for c in node.children)

    worst, counts_ok = 0.0, True
    for tree in trees:
        model.unit_calls = 0
        cached, _ = tree_loss_cached(model, tree)
        counts_ok &= model.unit_calls == tree.root.size()
        model.unit_calls = 0
        naive = tree_loss_naive(model, tree)
        counts_ok &= model.unit_calls == subtree_sizes(tree.root)
        worst = max(worst, abs(cached - naive) / max(abs(naive), 1e-300))
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-12 and counts_ok and elapsed < 60
    report(2, ok, f"max rel diff={worst:.1e} (<=1e-12), call counts {'match' if counts_ok else 'MISMATCH'}, "
                  f"{elapsed:.1f}s (<60s)")
    assert ok


def test_criterion_3_grouped_identity(synth_encoder):
    t0 = time.perf_counter()
    _, encoder = synth_encoder
    rng = np.random.default_rng(303)
    model = init_model(encoder, Hyperparams(hidden_layers=2, hidden_width=12, d=3, seed=3))
    worst, min_groups = 0.0, 99
    for b in range(50):
        batch = [tree_of(random_tree(rng, 1, 6), f"b{b}p{i}") for i in range(int(rng.integers(8, 25)))]
        gg = grouped_gradient(model, batch, "operators")
        min_groups = min(min_groups, len(gg.signatures))
        worst = max(worst, global_rel_err(gg.grads, flat_gradient(model, batch)))

    def leaf(kind, i):
        return PlanNode(kind, {"plan-rows": float(i + 1), "total-cost": 1.0}, [], 0.1)

    batch = ([tree_of(leaf("seq-scan", i), f"a{i}") for i in range(10)]
             + [tree_of(leaf("index-scan", i), f"b{i}") for i in range(20)]
             + [tree_of(PlanNode("sort", {"plan-rows": 1.0}, [leaf("seq-scan", i)], 0.2), f"c{i}")
                for i in range(300)])
    gg = grouped_gradient(model, batch, "plans")
    example_ok = sorted(gg.weights) == [10, 20, 300] and gg.normalization == 1 / 330
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-9 and example_ok and min_groups > 1 and elapsed < 60
    report(3, ok, f"max rel diff={worst:.1e} (<=1e-9), 10/20/300 normalization="
                  f"{'1/330' if example_ok else gg.normalization}, {elapsed:.1f}s (<60s)")
    assert ok


def test_criterion_4_branch_isolation(synth_encoder):
    _, encoder = synth_encoder
    rng = np.random.default_rng(404)
    model = init_model(encoder, Hyperparams(hidden_layers=2, hidden_width=16, d=4, seed=4))
    violations, ancestors_moved = 0, 0
    for i in range(100):
        tree = tree_of(random_tree(rng, 3, 9), f"t{i}")
        paths = [p for p, _ in tree.walk()]
        target = paths[int(rng.integers(1, len(paths)))]
        mutated = copy.deepcopy(tree)
        for p, node in mutated.walk():
            if p == target or p.startswith(target + "."):
                node.attrs["plan-rows"] = float(node.attrs.get("plan-rows", 1.0)) * 7.0 + 13.0
        before, after = evaluate_plan(model, tree), evaluate_plan(model, mutated)
        for p in paths:
            inside = p == target or p.startswith(target + ".")
            ancestor = target.startswith(p + ".")
            if inside or ancestor:
                ancestors_moved += ancestor and before[p].latency != after[p].latency
                continue
            if before[p].latency != after[p].latency or before[p].data.tobytes() != after[p].data.tobytes():
                violations += 1
    ok = violations == 0
    report(4, ok, f"{violations} outside-path output changes over 100 trees (bit-exact), "
                  f"{ancestors_moved} ancestor outputs responded")
    assert ok


def test_criterion_5_weight_sharing(synth_encoder):
    corpus, encoder = synth_encoder
    hp = Hyperparams(hidden_layers=2, hidden_width=16, d=4, seed=5)
    bigger = fit_encoder(corpus * 5, default_schema())
    count_ok = init_model(encoder, hp).param_count() == init_model(bigger, hp).param_count()
    model = init_model(encoder, hp)
    before = model.param_count()
    predict_many(model, corpus)
    count_ok &= model.param_count() == before

    # symmetric corpus: the same plan twice inside one batched evaluation
    plan = PreparedPlan(corpus[0], encoder)

    def sse_grads(plans):
        g = Graph()
        g.backward(group_sse(model, g, plans)[0], accumulate=False)
        return {p.id: grad for p, grad in g.param_grads()}

    one, two = sse_grads([plan]), sse_grads([plan, plan])
    worst = max(tensor_rel_err(two[k], 2.0 * one[k]) for k in one)

    # two separately built instances of one unit on identical input
    unit = model.unit("seq-scan")
    x = np.random.default_rng(0).normal(size=unit.input_width)

    def unit_grads(copies):
        g = Graph()
        terms = [g.sum(g.square(unit.forward(g, g.input(x)))) for _ in range(copies)]
        total = terms[0]
        for t in terms[1:]:
            total = g.add(total, t)
        g.backward(total, accumulate=False)
        return {p.id: grad for p, grad in g.param_grads()}

    u1, u2 = unit_grads(1), unit_grads(2)
    worst = max(worst, max(tensor_rel_err(u2[k], 2.0 * u1[k]) for k in u1))
    ok = count_ok and worst <= 1e-9
    report(5, ok, f"param count {'independent' if count_ok else 'VARIES'} of instance counts, "
                  f"duplication doubles gradient (rel err {worst:.1e} <=1e-9)")
    assert ok


E2E = dict(n_plans=2000, sigma=0.1, corpus_seed=7, hidden_layers=3, hidden_width=32, d=8,
           epochs=200, batch_size=16, lr=0.001, momentum=0.9, seed=0)


def run_end_to_end(on_epoch=None):
    corpus = synth_generate(SynthConfig(n_plans=E2E["n_plans"], sigma=E2E["sigma"], seed=E2E["corpus_seed"]))
    cfg = TrainConfig(lr=E2E["lr"], momentum=E2E["momentum"], epochs=E2E["epochs"],
                      batch_size=E2E["batch_size"], seed=E2E["seed"], holdout="random", holdout_fraction=0.1)
    train_set, test_set = holdout_split(corpus, cfg)
    encoder = fit_encoder(train_set, default_schema())
    model = init_model(encoder, Hyperparams(E2E["hidden_layers"], E2E["hidden_width"], E2E["d"], E2E["seed"]))
    t0 = time.perf_counter()
    train(model, train_set, cfg, on_epoch=on_epoch)
    elapsed = time.perf_counter() - t0
    actual = [t.latency for t in test_set]
    rep = evalkit.evaluate_predictions(actual, predict_many(model, test_set))
    base = evalkit.fit_baseline(train_set)
    base_rep = evalkit.evaluate_predictions(actual, base.predict_many(test_set))
    return {"relative_error": rep.relative_error, "mae": rep.mean_absolute_error,
            "within_1_5": rep.buckets[0], "baseline_mae": base_rep.mean_absolute_error,
            "baseline_relative_error": base_rep.relative_error, "seconds": elapsed,
            "backend": kernels.BACKEND}


@pytest.mark.slow
def test_criterion_6_synthetic_end_to_end():
    res = run_end_to_end()
    ok = (res["relative_error"] <= 0.15 and res["within_1_5"] >= 0.80
          and res["mae"] < res["baseline_mae"] and res["seconds"] <= 600)
    regression = ""
    pinned = json.loads(FIXTURE.read_text()) if FIXTURE.exists() else None
    if pinned is not None and pinned.get("backend") != kernels.BACKEND:
        regression = f", fixture skipped ({kernels.BACKEND} kernels, pinned with {pinned.get('backend')})"
    elif pinned is not None:
        same = all(abs(res[k] - pinned[k]) <= 1e-9 * max(abs(pinned[k]), 1.0)
                   for k in ("relative_error", "mae", "within_1_5", "baseline_mae"))
        regression = ", matches pinned fixture" if same else ", DIFFERS from pinned fixture"
        ok &= same
    report(6, ok, f"rel err={res['relative_error']:.4f} (<=0.15), R<=1.5 for {res['within_1_5']:.1%} (>=80%), "
                  f"MAE={res['mae']:.4f}s vs baseline {res['baseline_mae']:.4f}s, "
                  f"{res['seconds']:.0f}s (<=600s){regression}")
    assert ok


def test_criterion_7_metric_fidelity(synth_encoder):
    r_ok = evalkit.r_factor(1.0, 2.0) == 2.0 and evalkit.r_factor(4.0, 2.0) == 2.0
    rng = np.random.default_rng(707)
    sums_ok = True
    for _ in range(50):
        a = rng.uniform(0.01, 5, size=int(rng.integers(1, 200)))
        p = a * np.exp(rng.normal(scale=0.8, size=a.size))
        sums_ok &= abs(sum(evalkit.factor_buckets(evalkit.r_values(a, p))) - 1.0) <= 1e-12
    worst_mean, worst_var, n_cols = 0.0, 0.0, 0
    corpora = [synth_encoder[0]] + [synth_generate(SynthConfig(n_plans=150, seed=s)) for s in (1, 2, 3)]
    for corpus in corpora:
        enc = fit_encoder(corpus, default_schema())
        cols = {}
        for tree in corpus:
            for _, node in tree.walk():
                vec = enc.encode(node)
                for name, (encoding, start, width) in enc.segments(node.kind).items():
                    if encoding in ("numeric", "vector") and node.attrs.get(name) is not None:
                        for j in range(width):
                            cols.setdefault((node.kind, name, j), []).append(vec[start + j])
        for key, vals in cols.items():
            vals = np.asarray(vals)
            if np.ptp(vals) == 0:
                continue  # constant in training data: encodes to all zeros
            n_cols += 1
            worst_mean = max(worst_mean, abs(vals.mean()))
            worst_var = max(worst_var, abs(vals.var() - 1.0))
    ok = r_ok and sums_ok and worst_mean <= 1e-9 and worst_var <= 1e-9
    report(7, ok, f"R examples {'2 and 2' if r_ok else 'WRONG'}, buckets sum to 1: {bool(sums_ok)}, "
                  f"whitening over {n_cols} columns |mean|<={worst_mean:.1e} |var-1|<={worst_var:.1e}")
    assert ok


def test_criterion_8_determinism(tmp_path):
    digests = []
    for run in ("a", "b"):
        d = tmp_path / run
        d.mkdir()
        corpus = d / "corpus.ndjson"
        cmds = [
            ["synth", "--out", str(corpus), "--n-plans", "300", "--seed", "8"],
            ["train", "--corpus", str(corpus), "--model-out", str(d / "model.json"),
             "--encoder-out", str(d / "enc.json"), "--hidden-layers", "2", "--hidden-width", "16",
             "--d", "4", "--epochs", "3", "--batch-size", "32", "--seed", "8"],
            ["evaluate", "--model", str(d / "model.json"), "--encoder", str(d / "enc.json"),
             "--corpus", str(corpus), "--baseline", "--seed", "8", "--report-out", str(d / "report.json"),
             "--cdf-out", str(d / "cdf.csv")],
        ]
        for argv in cmds:
            assert cli_main(argv) == 0
        digests.append({name: (d / name).read_bytes()
                        for name in ("model.json", "enc.json", "report.json", "cdf.csv")})
    same = [name for name in digests[0] if digests[0][name] == digests[1][name]]
    ok = len(same) == len(digests[0])
    report(8, ok, f"byte-identical across two runs: {', '.join(sorted(same))}")
    assert ok


if __name__ == "__main__":
    if "--pin" in sys.argv:
        res = run_end_to_end(on_epoch=lambda s: print(s.epoch, s.train_rmse, flush=True)
                             if s.epoch % 20 == 0 else None)
        FIXTURE.parent.mkdir(exist_ok=True)
        FIXTURE.write_text(json.dumps({**E2E, **res}, indent=1, sort_keys=True) + "\n")
        print(json.dumps(res, indent=1))
    else:
        sys.exit(pytest.main([__file__, "-q", "-p", "no:cacheprovider"]))
