"""Taste-proximity induced song attribute similarity."""

from ._core import (
    TopicModel,
    __version__,
    build_corpus,
    cosine_similarity,
    fit_lda,
    fit_lda_file,
    generate_world,
    predict_pair,
    run_pipeline,
    taste_similarity,
    title_similarity,
)

__all__ = [
    "TopicModel",
    "__version__",
    "build_corpus",
    "cosine_similarity",
    "fit_lda",
    "fit_lda_file",
    "generate_world",
    "predict_pair",
    "run_pipeline",
    "taste_similarity",
    "title_similarity",
]
