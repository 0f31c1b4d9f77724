"""Contextual latent steering on a toy transformer."""

import json

from ._core import (  # noqa: F401
    ConfigError,
    ContextualVector,
    Error,
    GenerationTrace,
    JudgedRollout,
    MismatchError,
    Model,
    ModelConfig,
    ParseError,
    QuestionKind,
    ReferringExample,
    SceneParams,
    Variant,
    VectorDesign,
    build_vector,
    detokenize,
    make_example,
    relative_attention,
    sample_rollouts,
    tokenize,
    train,
    vocab_size,
)
from ._core import evaluate_synthetic as _evaluate_synthetic


def evaluate_synthetic(model, count=100, kind=QuestionKind.MC, seed=0, plan=None, vectors=None):
    """Runs the synthetic benchmark and returns the report as a dict."""
    plan_json = json.dumps(plan) if plan is not None else ""
    return json.loads(_evaluate_synthetic(model, count, kind, seed, plan_json, vectors or {}))
