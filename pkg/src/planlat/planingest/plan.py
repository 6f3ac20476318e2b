"""Plan trees, operator schemas and structure signatures."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Iterator, Optional

from ..errors import SchemaError, TrainingDataError

ENCODINGS = ("numeric", "boolean", "onehot", "vector")


@dataclass(frozen=True)
class AttrSpec:
    """How one raw attribute of an operator kind is encoded.

    ``categories`` pins a one-hot vocabulary (otherwise it is collected at
    fit time); ``length`` is the block size of a ``vector`` attribute.
    """

    name: str
    encoding: str
    categories: Optional[tuple] = None
    length: int = 0

    def __post_init__(self):
        if self.encoding not in ENCODINGS:
            raise SchemaError(f"attribute {self.name!r}: unknown encoding {self.encoding!r}")
        if self.encoding == "vector" and self.length < 1:
            raise SchemaError(f"vector attribute {self.name!r} needs length >= 1")

    def to_dict(self):
        d = {"name": self.name, "encoding": self.encoding}
        if self.categories is not None:
            d["categories"] = list(self.categories)
        if self.encoding == "vector":
            d["length"] = self.length
        return d

    @classmethod
    def from_dict(cls, d):
        cats = d.get("categories")
        return cls(d["name"], d["encoding"], tuple(cats) if cats is not None else None,
                   int(d.get("length", 0)))


@dataclass(frozen=True)
class OperatorKind:
    name: str
    max_arity: int
    attrs: tuple = ()

    def __post_init__(self):
        if self.max_arity < 0:
            raise SchemaError(f"kind {self.name!r}: max_arity must be >= 0")
        names = [a.name for a in self.attrs]
        if len(set(names)) != len(names):
            raise SchemaError(f"kind {self.name!r}: duplicate attribute names")
        if any(ch in self.name for ch in "(),"):
            raise SchemaError(f"kind name {self.name!r} may not contain '(', ')' or ','")

    @property
    def is_leaf(self):
        return self.max_arity == 0

    def to_dict(self):
        return {"name": self.name, "max_arity": self.max_arity,
                "attrs": [a.to_dict() for a in self.attrs]}

    @classmethod
    def from_dict(cls, d):
        return cls(d["name"], int(d["max_arity"]),
                   tuple(AttrSpec.from_dict(a) for a in d.get("attrs", ())))


class Schema:
    """The set of operator kinds a model understands, keyed by name."""

    def __init__(self, kinds, fallback=None):
        self.kinds = {}
        for k in kinds:
            if k.name in self.kinds:
                raise SchemaError(f"duplicate operator kind {k.name!r}")
            self.kinds[k.name] = k
        if fallback is not None and fallback not in self.kinds:
            raise SchemaError(f"fallback kind {fallback!r} is not in the schema")
        self.fallback = fallback

    def __contains__(self, name):
        return name in self.kinds

    def __getitem__(self, name):
        try:
            return self.kinds[name]
        except KeyError:
            raise SchemaError(f"unknown operator kind {name!r}") from None

    def __iter__(self):
        return iter(self.kinds.values())

    def __eq__(self, other):
        return isinstance(other, Schema) and self.to_dict() == other.to_dict()

    def names(self):
        return list(self.kinds)

    def validate(self, tree):
        """Check kinds, arities and labels of every node in ``tree``."""
        for path, node in tree.walk():
            kind = self[node.kind]
            if len(node.children) > kind.max_arity:
                raise SchemaError(
                    f"node {path} ({node.kind}) has {len(node.children)} children, "
                    f"max_arity is {kind.max_arity}")

    def to_dict(self):
        return {"kinds": [k.to_dict() for k in self.kinds.values()], "fallback": self.fallback}

    @classmethod
    def from_dict(cls, d):
        return cls([OperatorKind.from_dict(k) for k in d["kinds"]], d.get("fallback"))


def _num(name):
    return AttrSpec(name, "numeric")


COMMON_ATTRS = (
    _num("plan-width"),
    _num("plan-rows"),
    _num("plan-buffers"),
    _num("estimated-ios"),
    _num("total-cost"),
)
JOIN_ATTRS = (
    AttrSpec("join-type", "onehot", ("semi", "inner", "anti", "full")),
    AttrSpec("parent-relationship", "onehot", ("inner", "outer", "subquery")),
)
SCAN_ATTRS = (
    AttrSpec("relation-name", "onehot"),
    AttrSpec("attribute-mins", "vector", length=4),
    AttrSpec("attribute-medians", "vector", length=4),
    AttrSpec("attribute-maxs", "vector", length=4),
)
INDEX_ATTRS = (
    AttrSpec("index-name", "onehot"),
    AttrSpec("scan-direction", "boolean"),
)


def default_schema():
    """Operator kinds and attributes for PostgreSQL plans."""
    kinds = [
        OperatorKind("seq-scan", 0, COMMON_ATTRS + SCAN_ATTRS),
        OperatorKind("index-scan", 0, COMMON_ATTRS + SCAN_ATTRS + INDEX_ATTRS),
        OperatorKind("bitmap-heap-scan", 1, COMMON_ATTRS + SCAN_ATTRS),
        OperatorKind("hash-join", 2, COMMON_ATTRS + JOIN_ATTRS),
        OperatorKind("merge-join", 2, COMMON_ATTRS + JOIN_ATTRS),
        OperatorKind("nested-loop-join", 2, COMMON_ATTRS + JOIN_ATTRS),
        OperatorKind("hash", 1, COMMON_ATTRS + (
            _num("hash-buckets"), AttrSpec("hash-algorithm", "onehot"))),
        OperatorKind("sort", 1, COMMON_ATTRS + (
            AttrSpec("sort-key", "onehot"), AttrSpec("sort-method", "onehot"))),
        OperatorKind("aggregate", 1, COMMON_ATTRS + (
            AttrSpec("strategy", "onehot", ("plain", "sorted", "hashed")),
            AttrSpec("partial-mode", "boolean"),
            AttrSpec("operator", "onehot"))),
        OperatorKind("filter", 1, COMMON_ATTRS),
        OperatorKind("append", 8, COMMON_ATTRS),
        OperatorKind("other", 2, COMMON_ATTRS),
    ]
    return Schema(kinds, fallback="other")


@dataclass(eq=True)
class PlanNode:
    """One operator instance. ``latency`` is inclusive of the subtree, in seconds."""

    kind: str
    attrs: dict = field(default_factory=dict)
    children: list = field(default_factory=list)
    latency: Optional[float] = None

    def __post_init__(self):
        if self.latency is not None:
            lat = float(self.latency)
            if not math.isfinite(lat) or lat < 0:
                raise TrainingDataError(f"{self.kind}: latency must be finite and >= 0, got {lat}")
            self.latency = lat
        for k, v in self.attrs.items():
            if isinstance(v, float) and not math.isfinite(v):
                raise TrainingDataError(f"{self.kind}: attribute {k!r} is not finite")

    def walk(self, path="0") -> Iterator[tuple[str, "PlanNode"]]:
        """Pre-order ``(path, node)`` pairs; child ``i`` of ``p`` has path ``p.i``."""
        yield path, self
        for i, c in enumerate(self.children):
            yield from c.walk(f"{path}.{i}")

    def postorder(self) -> list["PlanNode"]:
        out = []
        stack = [(self, False)]
        while stack:
            node, done = stack.pop()
            if done:
                out.append(node)
                continue
            stack.append((node, True))
            for c in reversed(node.children):
                stack.append((c, False))
        return out

    def size(self):
        return sum(1 for _ in self.walk())

    def to_dict(self):
        return {"kind": self.kind, "attrs": dict(self.attrs), "latency": self.latency,
                "children": [c.to_dict() for c in self.children]}

    @classmethod
    def from_dict(cls, d):
        return cls(d["kind"], dict(d.get("attrs", {})),
                   [cls.from_dict(c) for c in d.get("children", [])], d.get("latency"))


@dataclass(eq=True)
class PlanTree:
    id: str
    root: PlanNode
    template: Optional[str] = None

    def walk(self):
        return self.root.walk()

    def nodes(self):
        return self.root.postorder()

    @property
    def latency(self):
        return self.root.latency

    def is_labeled(self):
        return all(n.latency is not None for _, n in self.walk())

    def to_dict(self):
        return {"id": self.id, "template": self.template, "plan": self.root.to_dict()}

    @classmethod
    def from_dict(cls, d: dict[str, Any]):
        return cls(str(d["id"]), PlanNode.from_dict(d["plan"]), d.get("template"))


def structure_signature(tree):
    """Canonical string of a tree's shape and kinds, e.g. ``hash-join(seq-scan,hash(seq-scan))``."""
    root = tree.root if isinstance(tree, PlanTree) else tree
    # iterative post-order to avoid recursion limits on deep plans
    sigs = {}
    for node in root.postorder():
        if node.children:
            sigs[id(node)] = f"{node.kind}({','.join(sigs.pop(id(c)) for c in node.children)})"
        else:
            sigs[id(node)] = node.kind
    return sigs[id(root)]
