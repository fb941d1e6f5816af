"""Task metrics: classification accuracy and retrieval mean average precision.

Both metrics run every image through an optional defense pipeline before the
model sees it, matching a deployment where the transform sits in front of
the network. For retrieval the defense applies to queries and gallery alike;
attacks, by contrast, only ever perturb queries.
"""

from __future__ import annotations

import numpy as np

from . import tinymodel
from .filters import TransformPipeline

__all__ = [
    "ChannelMismatchError",
    "apply_defense",
    "evaluate_accuracy",
    "evaluate_retrieval_map",
    "average_precision",
]


class ChannelMismatchError(ValueError):
    """The defense pipeline's output channels do not fit the model."""


def _check_channels(model: tinymodel.TinyModel, defense: TransformPipeline | None) -> None:
    if defense is None:
        return
    channels = model.channels
    offender = None
    for i, stage in enumerate(defense.stages):
        out = TransformPipeline(stages=(stage,)).output_channels(channels)
        if out != channels:
            offender = (i, stage.op)
        channels = out
    if channels != model.channels:
        where = f"stage {offender[0]} ({offender[1]})" if offender else "pipeline"
        raise ChannelMismatchError(
            f"defense {where} yields {channels} channel(s) but the model "
            f"expects {model.channels}"
        )


def apply_defense(images, defense: TransformPipeline | None) -> list[np.ndarray]:
    """Run each image through the pipeline; None means identity."""
    if defense is None:
        return [np.asarray(img, dtype=np.float64) for img in images]
    return [defense.apply(img) for img in images]


def evaluate_accuracy(
    model: tinymodel.TinyModel,
    dataset,
    defense: TransformPipeline | None = None,
    adversarial=None,
) -> float:
    """Fraction of images classified correctly after the defense runs.

    dataset provides .images/.labels (or an (images, labels) pair).
    adversarial, when given, replaces the images (labels still come from the
    dataset); it must align one-to-one. Pipelines whose output channel count
    does not match the model are rejected, naming the offending stage.
    """
    if hasattr(dataset, "images"):
        images, labels = dataset.images, dataset.labels
    else:
        images, labels = dataset
    labels = np.asarray(labels)
    if adversarial is not None:
        if len(adversarial) != len(labels):
            raise ValueError(
                f"{len(adversarial)} adversarial images for {len(labels)} labels"
            )
        images = adversarial
    if len(labels) == 0:
        raise ValueError("cannot evaluate accuracy on an empty dataset")
    _check_channels(model, defense)
    correct = 0
    for img, label in zip(images, labels):
        transformed = defense.apply(img) if defense is not None else img
        _, logits, _ = tinymodel.forward(model, transformed)
        if int(np.argmax(logits)) == int(label):
            correct += 1
    return correct / len(labels)


def _embedding(model: tinymodel.TinyModel, img: np.ndarray) -> np.ndarray:
    emb, _, _ = tinymodel.forward(model, img)
    norm = float(np.linalg.norm(emb))
    if norm == 0.0:
        raise tinymodel.DegenerateEmbeddingError(
            "image maps to a zero-norm embedding; cosine ranking is undefined"
        )
    return emb / norm


def average_precision(ranked_relevance: np.ndarray) -> float:
    """AP of one ranked list: mean over relevant items of precision at their rank."""
    ranked_relevance = np.asarray(ranked_relevance, dtype=bool)
    total = int(ranked_relevance.sum())
    if total == 0:
        return 0.0
    ranks = np.flatnonzero(ranked_relevance) + 1
    hits = np.arange(1, total + 1)
    return float(np.mean(hits / ranks))


def evaluate_retrieval_map(
    model: tinymodel.TinyModel,
    queries,
    gallery,
    relevance: np.ndarray,
    defense: TransformPipeline | None = None,
    allow_empty: bool = False,
) -> float:
    """Mean average precision of cosine-ranked retrieval.

    relevance is a (num_queries, num_gallery) boolean matrix. Gallery items
    are ranked by descending cosine similarity of the defended embeddings,
    with ties broken by gallery index (stable sort). Queries without any
    relevant item raise unless allow_empty, in which case they contribute 0.
    """
    relevance = np.asarray(relevance, dtype=bool)
    if relevance.shape != (len(queries), len(gallery)):
        raise ValueError(
            f"relevance shape {relevance.shape} does not match "
            f"{len(queries)} queries x {len(gallery)} gallery items"
        )
    if len(queries) == 0:
        raise ValueError("need at least one query")
    _check_channels(model, defense)
    defended_gallery = apply_defense(gallery, defense)
    gallery_emb = np.stack([_embedding(model, g) for g in defended_gallery])
    aps = []
    for qi, query in enumerate(queries):
        if not relevance[qi].any() and not allow_empty:
            raise ValueError(
                f"query {qi} has no relevant gallery items; "
                "pass allow_empty=True to count it as AP 0"
            )
        transformed = defense.apply(query) if defense is not None else query
        q_emb = _embedding(model, transformed)
        sims = gallery_emb @ q_emb
        order = np.argsort(-sims, kind="stable")
        aps.append(average_precision(relevance[qi][order]))
    return float(np.mean(aps))
