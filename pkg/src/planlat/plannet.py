"""Per-operator neural units assembled into plan-shaped networks.

Every operator kind owns one :class:`NeuralUnit`; all instances of the kind
in every plan share its parameters. A unit's input is the node's feature
vector followed by each child's full output (latency first, then the data
vector), left to right; absent children of variable-arity kinds are
zero-filled so the input width is always ``feature_width + max_arity*(d+1)``.
Output index 0 is the (subtree-inclusive) latency in seconds, the remaining
``d`` entries are the opaque data vector passed to the parent.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np

from .diffnet import Graph, Param, uniform_init
from .errors import DimensionError, InferenceError, SchemaError, UsageError
from .planingest.encoder import FeatureEncoder
from .planingest.plan import PlanTree, Schema, structure_signature

MODEL_FORMAT = "planlat-model"
MODEL_VERSION = 1


@dataclass(frozen=True)
class Hyperparams:
    hidden_layers: int = 5
    hidden_width: int = 128
    d: int = 32
    seed: int = 0

    def __post_init__(self):
        for name in ("hidden_layers", "hidden_width", "d"):
            if getattr(self, name) < 1:
                raise UsageError(f"{name} must be >= 1")


@dataclass
class UnitOutput:
    latency: float
    data: np.ndarray

    @classmethod
    def from_vector(cls, vec):
        return cls(float(vec[0]), np.array(vec[1:]))


class NeuralUnit:
    """An MLP for one operator kind: ReLU hidden layers, linear output of width d+1."""

    def __init__(self, kind, feature_width, max_arity, hp, rng):
        self.kind = kind
        self.feature_width = feature_width
        self.max_arity = max_arity
        self.d = hp.d
        self.input_width = feature_width + max_arity * (hp.d + 1)
        sizes = [self.input_width] + [hp.hidden_width] * hp.hidden_layers + [hp.d + 1]
        self.layers = []
        for i, (n_in, n_out) in enumerate(zip(sizes[:-1], sizes[1:])):
            W = Param(f"{kind}/W{i}", uniform_init(rng, n_in, (n_out, n_in)))
            b = Param(f"{kind}/b{i}", uniform_init(rng, n_in, (n_out,)))
            self.layers.append((W, b))

    @property
    def output_width(self):
        return self.d + 1

    def params(self):
        return [p for layer in self.layers for p in layer]

    def forward(self, graph, x):
        """Graph node of the unit's output for input node ``x`` (rows = instances)."""
        if x.value.shape[-1] != self.input_width:
            raise DimensionError(
                f"{self.kind} unit expects input width {self.input_width}, got {x.value.shape[-1]}")
        h = x
        last = len(self.layers) - 1
        for i, (W, b) in enumerate(self.layers):
            h = graph.affine(W, b, h)
            if i != last:
                h = graph.relu(h)
        return h


class QppModel:
    """Unit registry keyed by operator kind plus the encoder it was built for.

    ``unit_calls`` counts unit evaluations (one per evaluated node row) and
    is only used for instrumentation.
    """

    def __init__(self, hyperparams, encoder, units):
        self.hyperparams = hyperparams
        self.encoder = encoder
        self.units = units
        self.unit_calls = 0

    @property
    def schema(self):
        return self.encoder.schema

    def parameters(self):
        return [p for unit in self.units.values() for p in unit.params()]

    def param_count(self):
        return sum(p.value.size for p in self.parameters())

    def unit(self, kind):
        try:
            return self.units[kind]
        except KeyError:
            raise InferenceError(f"no neural unit for operator kind {kind!r}") from None

    def snapshot(self):
        """Copies of every parameter value keyed by id."""
        return {p.id: p.value.copy() for p in self.parameters()}


def init_model(encoder, hyperparams=None):
    """One randomly initialized unit per kind of ``encoder.schema``; seeded."""
    hp = hyperparams or Hyperparams()
    rng = np.random.default_rng(hp.seed)
    units = {}
    for kind in encoder.schema:
        fw = encoder.width(kind.name)
        if fw == 0 and kind.max_arity == 0:
            raise SchemaError(f"kind {kind.name!r} has no features and no children")
        units[kind.name] = NeuralUnit(kind.name, fw, kind.max_arity, hp, rng)
    return QppModel(hp, encoder, units)


def unit_forward(model, kind, x):
    """Evaluate ``kind``'s unit on a plain input vector (features then child outputs)."""
    unit = model.unit(kind)
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != unit.input_width:
        raise DimensionError(f"{kind} unit expects input width {unit.input_width}, got {x.shape[-1]}")
    g = Graph()
    out = unit.forward(g, g.input(x))
    model.unit_calls += 1 if x.ndim == 1 else x.shape[0]
    return UnitOutput.from_vector(out.value) if x.ndim == 1 else out.value


class Layout:
    """Post-order positions of a plan shape with each position's child positions."""

    __slots__ = ("signature", "kinds", "children", "paths")

    def __init__(self, tree):
        root = tree.root if isinstance(tree, PlanTree) else tree
        order = root.postorder()
        index = {id(n): i for i, n in enumerate(order)}
        paths = {id(n): p for p, n in root.walk()}
        self.signature = structure_signature(root)
        self.kinds = [n.kind for n in order]
        self.children = [tuple(index[id(c)] for c in n.children) for n in order]
        self.paths = [paths[id(n)] for n in order]

    def __len__(self):
        return len(self.kinds)


class PreparedPlan:
    """A plan with its layout, encoded features and (optional) targets cached."""

    __slots__ = ("tree", "layout", "features", "targets")

    def __init__(self, tree, encoder, layout=None):
        self.tree = tree
        self.layout = layout or Layout(tree)
        nodes = tree.root.postorder()
        self.features = [encoder.encode(n) for n in nodes]
        lats = [n.latency for n in nodes]
        self.targets = None if any(v is None for v in lats) else np.array(lats)

    @property
    def signature(self):
        return self.layout.signature


def check_kinds(model, tree):
    for path, node in tree.walk():
        if node.kind not in model.units:
            raise InferenceError(f"plan {tree.id} node {path}: no neural unit for kind {node.kind!r}")


def prepare(model, trees):
    """Prepare plans for evaluation, sharing one :class:`Layout` per signature."""
    layouts = {}
    out = []
    for tree in trees:
        check_kinds(model, tree)
        layout = Layout(tree)
        layout = layouts.setdefault(layout.signature, layout)
        out.append(PreparedPlan(tree, model.encoder, layout))
    return out


def forward_group(model, graph, plans):
    """Evaluate same-shape plans together, one batched unit call per position.

    Returns the output node of every post-order position; row ``r`` of each
    node belongs to ``plans[r]``. Each position is evaluated exactly once.
    """
    layout = plans[0].layout
    for p in plans:
        if p.layout.signature != layout.signature:
            raise UsageError("forward_group needs plans with identical structure")
    B = len(plans)
    d1 = model.hyperparams.d + 1
    outs = []
    for pos, kind in enumerate(layout.kinds):
        unit = model.unit(kind)
        feats = np.stack([p.features[pos] for p in plans]) if unit.feature_width else np.zeros((B, 0))
        parts = [graph.input(feats)]
        kids = layout.children[pos]
        parts.extend(outs[c] for c in kids)
        missing = unit.max_arity - len(kids)
        if missing > 0:
            parts.append(graph.input(np.zeros((B, missing * d1))))
        x = graph.concat(parts) if len(parts) > 1 else parts[0]
        outs.append(unit.forward(graph, x))
        model.unit_calls += B
    return outs


def evaluate_plan(model, tree):
    """Per-node outputs of ``tree`` keyed by node path (``"0"`` is the root)."""
    check_kinds(model, tree)
    plan = PreparedPlan(tree, model.encoder)
    outs = forward_group(model, Graph(), [plan])
    return {path: UnitOutput.from_vector(node.value[0])
            for path, node in zip(plan.layout.paths, outs)}


def predict_latency(model, tree):
    """Root latency prediction in seconds (raw; may be negative)."""
    return evaluate_plan(model, tree)["0"].latency


def group_by_signature(plans):
    """``{signature: [indices]}`` with signatures in sorted order."""
    groups = {}
    for i, p in enumerate(plans):
        groups.setdefault(p.signature, []).append(i)
    return {sig: groups[sig] for sig in sorted(groups)}


def predict_prepared(model, plans, per_node=False):
    """Batched predictions for prepared plans.

    Returns root latencies as an array, or with ``per_node`` a list of
    per-plan arrays of node latencies in post-order.
    """
    roots = np.zeros(len(plans))
    nodes = [None] * len(plans)
    for idx in group_by_signature(plans).values():
        group = [plans[i] for i in idx]
        outs = forward_group(model, Graph(), group)
        lat = np.stack([o.value[:, 0] for o in outs], axis=1)
        for r, i in enumerate(idx):
            roots[i] = lat[r, -1]
            nodes[i] = lat[r]
    return nodes if per_node else roots


def predict_many(model, trees):
    return predict_prepared(model, prepare(model, trees))


# persistence


def _tensor_doc(arr):
    return {"dims": list(arr.shape), "data": [float(v) for v in arr.reshape(-1)]}


def _tensor_from(doc):
    arr = np.array(doc["data"], dtype=np.float64)
    return arr.reshape(doc["dims"])


def model_to_dict(model, meta=None):
    units = {}
    for kind, unit in model.units.items():
        units[kind] = {
            "feature_width": unit.feature_width,
            "max_arity": unit.max_arity,
            "layers": [{"W": _tensor_doc(W.value), "b": _tensor_doc(b.value)} for W, b in unit.layers],
        }
    return {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "hyperparams": asdict(model.hyperparams),
        "schema": model.schema.to_dict(),
        "encoder_hash": model.encoder.content_hash(),
        "units": units,
        "meta": meta or {},
    }


def model_to_json(model, meta=None):
    # json writes floats with repr(), the shortest exact round-trip form
    return json.dumps(model_to_dict(model, meta), sort_keys=True) + "\n"


def save_model(model, path, meta=None):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(model_to_json(model, meta))


def model_from_dict(doc, encoder, check_hash=True):
    if doc.get("format") != MODEL_FORMAT:
        raise UsageError(f"not a model document (format={doc.get('format')!r})")
    if doc.get("version") != MODEL_VERSION:
        raise UsageError(f"unsupported model version {doc.get('version')!r}")
    if Schema.from_dict(doc["schema"]) != encoder.schema:
        raise SchemaError("model schema does not match the encoder schema")
    if check_hash and doc["encoder_hash"] != encoder.content_hash():
        raise SchemaError("model was trained with a different encoder")
    hp = Hyperparams(**doc["hyperparams"])
    model = init_model(encoder, hp)
    for kind, udoc in doc["units"].items():
        unit = model.unit(kind)
        if len(udoc["layers"]) != len(unit.layers):
            raise SchemaError(f"unit {kind!r}: layer count mismatch")
        for (W, b), ldoc in zip(unit.layers, udoc["layers"]):
            for p, key in ((W, "W"), (b, "b")):
                val = _tensor_from(ldoc[key])
                if val.shape != p.value.shape:
                    raise SchemaError(f"{p.id}: stored shape {val.shape} != {p.value.shape}")
                p.value[...] = val
    return model


def load_model(path, encoder, check_hash=True):
    with open(path, encoding="utf-8") as fh:
        return model_from_dict(json.load(fh), encoder, check_hash)


__all__ = [
    "FeatureEncoder",
    "Hyperparams",
    "Layout",
    "NeuralUnit",
    "PreparedPlan",
    "QppModel",
    "UnitOutput",
    "evaluate_plan",
    "forward_group",
    "group_by_signature",
    "init_model",
    "load_model",
    "model_to_json",
    "predict_latency",
    "predict_many",
    "predict_prepared",
    "prepare",
    "save_model",
    "unit_forward",
]
