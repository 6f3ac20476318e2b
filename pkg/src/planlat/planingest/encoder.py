"""Featurization of plan nodes: whitened numerics, booleans and one-hot codes."""
import hashlib
import json
import math

import numpy as np

from ..errors import EncodingError, UsageError
from .plan import PlanTree, Schema

ENCODER_FORMAT = "planlat-encoder"
ENCODER_VERSION = 1


def _is_number(v):
    return isinstance(v, (int, float)) and not isinstance(v, bool)


def _whiten_stats(values):
    """Population mean/std; constant (or empty) columns get std 1."""
    if not values:
        return 0.0, 1.0
    arr = np.asarray(values, dtype=np.float64)
    mean = float(arr.mean())
    std = float(arr.std())
    if not std > 0.0 or not math.isfinite(std):
        std = 1.0
    return mean, std


def _vector(value, length):
    out = [float(v) for v in value[:length]]
    return out + [0.0] * (length - len(out))


class FeatureEncoder:
    """Fitted per-kind encoding of node attributes.

    ``stats[kind][attr]`` holds ``{"mean", "std"}`` for numerics,
    ``{"means", "stds"}`` for vector blocks and ``{"vocabulary"}`` for one-hot
    attributes (the unknown slot follows the vocabulary).
    """

    def __init__(self, schema, stats):
        self.schema = schema
        self.stats = stats
        self.widths = {k.name: self._width(k) for k in schema}

    def _width(self, kind):
        w = 0
        for spec in kind.attrs:
            if spec.encoding in ("numeric", "boolean"):
                w += 1
            elif spec.encoding == "vector":
                w += spec.length
            else:
                w += len(self.stats[kind.name][spec.name]["vocabulary"]) + 1
        return w

    def width(self, kind):
        try:
            return self.widths[kind]
        except KeyError:
            raise EncodingError(f"unknown operator kind {kind!r}") from None

    def segments(self, kind):
        """``{attr: (encoding, start, width)}`` locating each attribute's columns."""
        out, pos = {}, 0
        for spec in self.schema[kind].attrs:
            if spec.encoding in ("numeric", "boolean"):
                w = 1
            elif spec.encoding == "vector":
                w = spec.length
            else:
                w = len(self.stats[kind][spec.name]["vocabulary"]) + 1
            out[spec.name] = (spec.encoding, pos, w)
            pos += w
        return out

    def encode(self, node):
        """The feature vector of one node; fixed width per kind."""
        if node.kind not in self.widths:
            raise EncodingError(f"unknown operator kind {node.kind!r}")
        kind = self.schema[node.kind]
        stats = self.stats[node.kind]
        out = np.zeros(self.widths[node.kind])
        pos = 0
        for spec in kind.attrs:
            raw = node.attrs.get(spec.name)
            st = stats.get(spec.name)
            if spec.encoding == "numeric":
                if raw is not None:
                    if not _is_number(raw):
                        raise EncodingError(f"{node.kind}.{spec.name}: expected a number, got {raw!r}")
                    out[pos] = (raw - st["mean"]) / st["std"]
                pos += 1
            elif spec.encoding == "boolean":
                if raw is not None:
                    out[pos] = 1.0 if raw else 0.0
                pos += 1
            elif spec.encoding == "vector":
                if raw is not None:
                    vals = np.asarray(_vector(raw, spec.length))
                    out[pos:pos + spec.length] = (vals - st["means"]) / st["stds"]
                pos += spec.length
            else:
                vocab = st["vocabulary"]
                if raw is not None:
                    key = str(raw)
                    idx = vocab.index(key) if key in vocab else len(vocab)
                    out[pos + idx] = 1.0
                pos += len(vocab) + 1
        return out

    def encode_tree(self, tree):
        """Feature vectors of every node, in post-order."""
        root = tree.root if isinstance(tree, PlanTree) else tree
        return [self.encode(n) for n in root.postorder()]

    def to_dict(self):
        return {"format": ENCODER_FORMAT, "version": ENCODER_VERSION,
                "schema": self.schema.to_dict(), "stats": self.stats}

    @classmethod
    def from_dict(cls, d):
        if d.get("format") != ENCODER_FORMAT:
            raise UsageError(f"not an encoder document (format={d.get('format')!r})")
        if d.get("version") != ENCODER_VERSION:
            raise UsageError(f"unsupported encoder version {d.get('version')!r}")
        stats = {}
        for kind, attrs in d["stats"].items():
            stats[kind] = {}
            for name, st in attrs.items():
                st = dict(st)
                for key in ("means", "stds"):
                    if key in st:
                        st[key] = np.asarray(st[key], dtype=np.float64)
                stats[kind][name] = st
        return cls(Schema.from_dict(d["schema"]), stats)

    def to_json(self):
        return json.dumps(_plain(self.to_dict()), sort_keys=True, indent=1) + "\n"

    def content_hash(self):
        return hashlib.sha256(self.to_json().encode()).hexdigest()

    def save(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.to_json())

    @classmethod
    def load(cls, path):
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


def _plain(obj):
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [float(v) for v in obj]
    return obj


def fit_encoder(corpus, schema):
    """Collect whitening statistics and one-hot vocabularies from ``corpus``."""
    corpus = list(corpus)
    if not corpus:
        raise UsageError("cannot fit an encoder on an empty corpus")
    numeric = {}
    vectors = {}
    categories = {}
    for tree in corpus:
        for path, node in tree.walk():
            if node.kind not in schema:
                raise EncodingError(f"{tree.id} node {path}: kind {node.kind!r} has no schema entry")
            for spec in schema[node.kind].attrs:
                raw = node.attrs.get(spec.name)
                if raw is None:
                    continue
                key = (node.kind, spec.name)
                if spec.encoding == "numeric":
                    if not _is_number(raw):
                        raise EncodingError(f"{tree.id} node {path}: {spec.name} is not numeric")
                    numeric.setdefault(key, []).append(float(raw))
                elif spec.encoding == "vector":
                    vectors.setdefault(key, []).append(_vector(raw, spec.length))
                elif spec.encoding == "onehot":
                    categories.setdefault(key, set()).add(str(raw))

    stats = {}
    for kind in schema:
        ks = stats[kind.name] = {}
        for spec in kind.attrs:
            key = (kind.name, spec.name)
            if spec.encoding == "numeric":
                mean, std = _whiten_stats(numeric.get(key, []))
                ks[spec.name] = {"mean": mean, "std": std}
            elif spec.encoding == "vector":
                rows = vectors.get(key)
                means = np.zeros(spec.length)
                stds = np.ones(spec.length)
                if rows:
                    cols = np.asarray(rows).T
                    for i, col in enumerate(cols):
                        means[i], stds[i] = _whiten_stats(list(col))
                ks[spec.name] = {"means": means, "stds": stds}
            elif spec.encoding == "onehot":
                if spec.categories is not None:
                    vocab = list(spec.categories)
                else:
                    vocab = sorted(categories.get(key, ()))
                ks[spec.name] = {"vocabulary": vocab}
    return FeatureEncoder(schema, stats)
