"""Entropy-guided metamorphic test generation and label-noise triage."""

from triage._core import (
    BackendError,
    BuiltinModel,
    ConfigError,
    ParseError,
    TransformSpec,
    TriageError,
    ValidationError,
    apply_transform,
    argmax_label,
    build_candidates,
    choice,
    detect,
    draw_index_for,
    load_cifar10,
    load_idx,
    run_cli,
    shannon_index,
)

__all__ = [
    "BackendError",
    "BuiltinModel",
    "ConfigError",
    "ParseError",
    "TransformSpec",
    "TriageError",
    "ValidationError",
    "apply_transform",
    "argmax_label",
    "build_candidates",
    "choice",
    "detect",
    "draw_index_for",
    "load_cifar10",
    "load_idx",
    "run_cli",
    "shannon_index",
]
