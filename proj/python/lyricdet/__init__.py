"""AI-generated song detection from transcribed lyrics."""

import json

from ._core import (
    DetectorModel,
    LyricdetError,
    apply_attack,
    cnn_parameter_count,
    corpus_stats,
    count_tokens,
    embed_text,
    encoder_ids,
    macro_recall,
    make_quantization_corpus,
    make_smoke_corpus,
    mlp_parameter_count,
    pipeline_detect,
    render_report,
    spectrogram,
    validate_manifest,
)
from ._core import run_plan as _run_plan

__all__ = [
    "DetectorModel",
    "LyricdetError",
    "apply_attack",
    "cnn_parameter_count",
    "corpus_stats",
    "count_tokens",
    "embed_text",
    "encoder_ids",
    "macro_recall",
    "make_quantization_corpus",
    "make_smoke_corpus",
    "mlp_parameter_count",
    "pipeline_detect",
    "render_report",
    "run_plan",
    "spectrogram",
    "validate_manifest",
]


def run_plan(plan, out_dir=""):
    """Runs an experiment plan file; returns the reports as dicts."""
    return [json.loads(r) for r in _run_plan(str(plan), str(out_dir))]
