"""Native corpus format: newline-delimited JSON, one plan per line.

The first line is a header record::

    {"format": "planlat-corpus", "version": 1, "count": N, "labeled": true, "meta": {...}}

followed by ``N`` records ``{"id", "template", "plan"}`` where ``plan`` is a
nested ``{"kind", "attrs", "latency", "children"}`` object. Latencies are in
seconds, inclusive of the subtree, or ``null`` when unknown.
"""
import json

from ..errors import ParseError
from .plan import PlanTree

CORPUS_FORMAT = "planlat-corpus"
CORPUS_VERSION = 1


def dumps_corpus(trees, meta=None):
    trees = list(trees)
    header = {
        "format": CORPUS_FORMAT,
        "version": CORPUS_VERSION,
        "count": len(trees),
        "labeled": all(t.is_labeled() for t in trees),
        "meta": meta or {},
    }
    lines = [json.dumps(header, sort_keys=True)]
    lines.extend(json.dumps(t.to_dict(), sort_keys=True) for t in trees)
    return "\n".join(lines) + "\n"


def loads_corpus(text):
    """Parse a corpus document; returns ``(header, trees)``."""
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise ParseError("empty corpus file (missing header)")
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as exc:
        raise ParseError(f"bad header: {exc.msg}", "line 1") from exc
    if not isinstance(header, dict) or header.get("format") != CORPUS_FORMAT:
        raise ParseError("not a planlat corpus (bad header)", "line 1")
    if header.get("version") != CORPUS_VERSION:
        raise ParseError(f"unsupported corpus version {header.get('version')!r}", "line 1")
    trees = []
    for n, line in enumerate(lines[1:], start=2):
        try:
            trees.append(PlanTree.from_dict(json.loads(line)))
        except (json.JSONDecodeError, KeyError, TypeError) as exc:
            raise ParseError(f"bad plan record: {exc}", f"line {n}") from exc
    if header.get("count", len(trees)) != len(trees):
        raise ParseError(f"header count {header['count']} but {len(trees)} records")
    return header, trees


def save_corpus(path, trees, meta=None):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dumps_corpus(trees, meta))


def load_corpus(path):
    with open(path, encoding="utf-8") as fh:
        return loads_corpus(fh.read())
