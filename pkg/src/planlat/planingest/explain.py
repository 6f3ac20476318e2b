"""PostgreSQL ``EXPLAIN (ANALYZE, FORMAT JSON)`` parsing."""
import json

from ..errors import ParseError, SchemaError
from .plan import PlanNode, PlanTree

NODE_TYPES = {
    "Seq Scan": "seq-scan",
    "Index Scan": "index-scan",
    "Index Only Scan": "index-scan",
    "Bitmap Index Scan": "index-scan",
    "Bitmap Heap Scan": "bitmap-heap-scan",
    "Hash Join": "hash-join",
    "Merge Join": "merge-join",
    "Nested Loop": "nested-loop-join",
    "Hash": "hash",
    "Sort": "sort",
    "Incremental Sort": "sort",
    "Aggregate": "aggregate",
    "Result": "filter",
    "Append": "append",
    "Merge Append": "append",
}

# raw key -> (attribute name, converter)
_NUMERIC = {
    "Plan Width": "plan-width",
    "Plan Rows": "plan-rows",
    "Plan Buffers": "plan-buffers",
    "Estimated I/Os": "estimated-ios",
    "Total Cost": "total-cost",
    "Hash Buckets": "hash-buckets",
}
_TEXT = {
    "Join Type": "join-type",
    "Parent Relationship": "parent-relationship",
    "Hash Algorithm": "hash-algorithm",
    "Sort Method": "sort-method",
    "Relation Name": "relation-name",
    "Index Name": "index-name",
    "Strategy": "strategy",
    "Operator": "operator",
}
_VECTORS = {
    "Attribute Mins": "attribute-mins",
    "Attribute Medians": "attribute-medians",
    "Attribute Maxs": "attribute-maxs",
}


def _number(value, path, key):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ParseError(f"{key!r} must be numeric, got {value!r}", path)
    return value


def _attrs(raw, path):
    attrs = {}
    for key, name in _NUMERIC.items():
        if key in raw:
            attrs[name] = _number(raw[key], path, key)
    for key, name in _TEXT.items():
        if key in raw and raw[key] is not None:
            attrs[name] = str(raw[key]).lower()
    for key, name in _VECTORS.items():
        if key in raw:
            vals = raw[key]
            if not isinstance(vals, list):
                raise ParseError(f"{key!r} must be a list", path)
            attrs[name] = [_number(v, path, key) for v in vals]
    if "Sort Key" in raw:
        keys = raw["Sort Key"]
        attrs["sort-key"] = ",".join(keys) if isinstance(keys, list) else str(keys)
    if "Scan Direction" in raw:
        attrs["scan-direction"] = str(raw["Scan Direction"]).lower() != "backward"
    if "Partial Mode" in raw:
        attrs["partial-mode"] = str(raw["Partial Mode"]).lower() != "simple"
    return attrs


def _node(raw, path, schema, strict):
    if not isinstance(raw, dict):
        raise ParseError("plan node must be an object", path)
    if "Node Type" not in raw:
        raise ParseError("missing 'Node Type'", path)
    node_type = raw["Node Type"]
    kind = NODE_TYPES.get(node_type)
    if schema is not None and kind is not None and kind not in schema:
        kind = None
    if kind is None:
        fallback = schema.fallback if schema is not None else "other"
        if strict or fallback is None:
            raise ParseError(f"unknown Node Type {node_type!r}", path)
        kind = fallback

    latency = None
    if "Actual Total Time" in raw:
        latency = _number(raw["Actual Total Time"], path, "Actual Total Time") / 1000.0

    children_raw = raw.get("Plans", [])
    if not isinstance(children_raw, list):
        raise ParseError("'Plans' must be a list", path)
    children = [_node(c, f"{path}.Plans[{i}]", schema, strict) for i, c in enumerate(children_raw)]
    node = PlanNode(kind, _attrs(raw, path), children, latency)
    if schema is not None and len(children) > schema[kind].max_arity:
        raise ParseError(
            f"{node_type!r} has {len(children)} children; {kind} allows {schema[kind].max_arity}", path)
    return node


def parse_explain_document(doc, tree_id="q0", schema=None, strict=False, template=None):
    """Build a :class:`PlanTree` from a decoded EXPLAIN JSON document.

    Accepts the ``[{"Plan": ...}]`` list PostgreSQL emits, a bare
    ``{"Plan": ...}`` object, or a bare plan node.
    """
    path = "$"
    if isinstance(doc, list):
        if len(doc) != 1:
            raise ParseError(f"expected one top-level entry, got {len(doc)}", path)
        doc, path = doc[0], "$[0]"
    if isinstance(doc, dict) and "Plan" in doc:
        doc, path = doc["Plan"], f"{path}.Plan"
    try:
        return PlanTree(tree_id, _node(doc, path, schema, strict), template)
    except SchemaError as exc:
        raise ParseError(str(exc), path) from exc


def parse_explain_json(text, tree_id="q0", schema=None, strict=False, template=None):
    """Parse one EXPLAIN (FORMAT JSON) document from ``text``.

    "Actual Total Time" (milliseconds, inclusive of the subtree) becomes the
    node latency in seconds; nodes without ANALYZE timings stay unlabeled.
    """
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON: {exc.msg} at line {exc.lineno} column {exc.colno}") from exc
    return parse_explain_document(doc, tree_id, schema, strict, template)


def parse_explain_file(path, schema=None, strict=False):
    """Parse a file holding one document, or newline-delimited documents."""
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    stem = str(path).rsplit("/", 1)[-1].rsplit(".", 1)[0]
    try:
        return [parse_explain_json(text, stem, schema, strict)]
    except ParseError as whole_err:
        lines = [ln for ln in text.splitlines() if ln.strip()]
        if len(lines) < 2:
            raise whole_err
    trees = []
    for i, line in enumerate(lines):
        try:
            trees.append(parse_explain_json(line, f"{stem}:{i}", schema, strict))
        except ParseError as exc:
            raise ParseError(str(exc), f"{path}:{i + 1}") from exc
    return trees
