"""Plan parsing, featurization, structure signatures and synthetic corpora."""
from .corpus import dumps_corpus, load_corpus, loads_corpus, save_corpus
from .encoder import FeatureEncoder, fit_encoder
from .explain import parse_explain_document, parse_explain_file, parse_explain_json
from .plan import (
    AttrSpec,
    OperatorKind,
    PlanNode,
    PlanTree,
    Schema,
    default_schema,
    structure_signature,
)
from .synth import SynthConfig, synth_generate

__all__ = [
    "AttrSpec",
    "FeatureEncoder",
    "OperatorKind",
    "PlanNode",
    "PlanTree",
    "Schema",
    "SynthConfig",
    "default_schema",
    "dumps_corpus",
    "fit_encoder",
    "load_corpus",
    "loads_corpus",
    "parse_explain_document",
    "parse_explain_file",
    "parse_explain_json",
    "save_corpus",
    "structure_signature",
    "synth_generate",
]
