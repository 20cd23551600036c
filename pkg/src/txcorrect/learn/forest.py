"""Random-forest error detector: one bagged tree ensemble per error label.

Multi-label detection runs as binary relevance. PER_LABEL mode trains the
ensemble for a single label; JOINT mode trains one ensemble per label over a
shared bootstrap schedule, so the joint model is the union of the per-label
ones. Per-tree randomness derives from hash(seed, tree_index), making
training a pure function of (data, hyperparameters, seed) regardless of
scheduling.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass

import numpy as np

from ..features import Dataset, FeatureSchema, ErrorTaxonomy, FeatureVector, FingerprintMismatch, SPLIT_TRAIN
from .tree import EmptyData, LearnError, TreeNode, train_tree, tree_from_dict, tree_predict_fractions, tree_to_dict

MODE_PER_LABEL = "per_label"
MODE_JOINT = "joint"

PAYLOAD_MAGIC = b"TXMODEL1"


def stable_seed(*parts) -> int:
    """Platform-independent derived seed."""
    text = ":".join(str(p) for p in parts)
    digest = hashlib.sha256(text.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little") & (2**63 - 1)


@dataclass
class ForestModel:
    mode: str
    label_ids: tuple[int, ...]
    label_names: tuple[str, ...]
    n_trees: int
    max_depth: int
    min_leaf: int
    feature_subset_size: int
    seed: int
    schema: FeatureSchema
    taxonomy: ErrorTaxonomy
    trees: tuple[tuple[TreeNode, ...], ...]  # [label][tree]

    @property
    def schema_fingerprint(self) -> str:
        return self.schema.fingerprint

    @property
    def taxonomy_fingerprint(self) -> str:
        return self.taxonomy.fingerprint

    def hyperparameters(self) -> dict:
        return {
            "mode": self.mode,
            "label_ids": list(self.label_ids),
            "n_trees": self.n_trees,
            "max_depth": self.max_depth,
            "min_leaf": self.min_leaf,
            "feature_subset_size": self.feature_subset_size,
        }


def train_forest(dataset: Dataset, mode: str = MODE_JOINT,
                 label_ids: tuple[int, ...] | None = None,
                 n_trees: int = 100, max_depth: int = 16, min_leaf: int = 2,
                 feature_subset_size: int | None = None, seed: int = 0) -> ForestModel:
    """Train on the dataset's TRAIN split; deterministic for a given seed."""
    if dataset.kind != "detection":
        raise LearnError(f"forest training needs a detection dataset, got {dataset.kind}")
    if mode == MODE_PER_LABEL:
        if label_ids is None or len(label_ids) != 1:
            raise LearnError("per_label mode requires exactly one label id")
    elif mode == MODE_JOINT:
        if label_ids is None:
            label_ids = tuple(c.id for c in dataset.taxonomy.classes)
    else:
        raise LearnError(f"unknown forest mode: {mode!r}")
    label_ids = tuple(int(i) for i in label_ids)
    for label in label_ids:
        if not 0 <= label < len(dataset.taxonomy):
            raise LearnError(f"label id {label} outside taxonomy")
    if n_trees < 1:
        raise LearnError("n_trees must be >= 1")

    train_rows = dataset.rows_for(SPLIT_TRAIN)
    if len(train_rows) == 0:
        raise EmptyData("dataset has no TRAIN rows")
    X = dataset.X[train_rows]
    Y = dataset.labels[train_rows]
    n = X.shape[0]
    if feature_subset_size is None:
        feature_subset_size = int(np.ceil(np.sqrt(X.shape[1])))

    all_trees: list[tuple[TreeNode, ...]] = []
    for label in label_ids:
        y = Y[:, label].astype(np.int64)
        grown = []
        for t in range(n_trees):
            boot_rng = np.random.default_rng(stable_seed(seed, t))
            indices = boot_rng.integers(0, n, size=n)
            grow_rng = (boot_rng if mode == MODE_PER_LABEL
                        else np.random.default_rng(stable_seed(seed, t, label)))
            grown.append(train_tree(
                X[indices], y[indices], n_classes=2, max_depth=max_depth,
                min_leaf=min_leaf, feature_subset_size=feature_subset_size,
                seed=grow_rng))
        all_trees.append(tuple(grown))

    names = tuple(dataset.taxonomy.classes[i].name for i in label_ids)
    return ForestModel(
        mode=mode, label_ids=label_ids, label_names=names, n_trees=n_trees,
        max_depth=max_depth, min_leaf=min_leaf,
        feature_subset_size=feature_subset_size, seed=seed,
        schema=dataset.schema, taxonomy=dataset.taxonomy, trees=tuple(all_trees),
    )


def predict_matrix(model: ForestModel, X: np.ndarray) -> np.ndarray:
    """Per-label error probability: mean over trees of leaf positive fraction."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X.reshape(1, -1)
    out = np.zeros((X.shape[0], len(model.label_ids)), dtype=np.float64)
    for column, label_trees in enumerate(model.trees):
        acc = np.zeros(X.shape[0], dtype=np.float64)
        for tree in label_trees:
            fractions = tree_predict_fractions(tree, X)
            acc += fractions[:, 1] if fractions.shape[1] > 1 else 0.0
        out[:, column] = acc / len(label_trees)
    return out


def predict_labels(model: ForestModel, vector: FeatureVector) -> np.ndarray:
    """Probabilities for one transaction, aligned with model.label_ids."""
    if vector.schema_fingerprint != model.schema_fingerprint:
        raise FingerprintMismatch(
            "feature vector was extracted under a different schema than the model")
    return predict_matrix(model, vector.values)[0]


def forest_to_payload(model: ForestModel) -> bytes:
    body = {
        "kind": "forest",
        "mode": model.mode,
        "label_ids": list(model.label_ids),
        "label_names": list(model.label_names),
        "n_trees": model.n_trees,
        "max_depth": model.max_depth,
        "min_leaf": model.min_leaf,
        "feature_subset_size": model.feature_subset_size,
        "seed": model.seed,
        "schema": model.schema.to_dict(),
        "taxonomy": model.taxonomy.to_dict(),
        "trees": [[tree_to_dict(t) for t in label_trees] for label_trees in model.trees],
    }
    encoded = json.dumps(body, sort_keys=True, separators=(",", ":")).encode("utf-8")
    return PAYLOAD_MAGIC + len(encoded).to_bytes(4, "little") + encoded


def forest_from_payload(payload: bytes) -> ForestModel:
    if payload[:8] != PAYLOAD_MAGIC:
        raise LearnError("not a model payload")
    size = int.from_bytes(payload[8:12], "little")
    body = json.loads(payload[12:12 + size].decode("utf-8"))
    if body["kind"] != "forest":
        raise LearnError(f"payload holds a {body['kind']} model, expected forest")
    return ForestModel(
        mode=body["mode"],
        label_ids=tuple(body["label_ids"]),
        label_names=tuple(body["label_names"]),
        n_trees=body["n_trees"],
        max_depth=body["max_depth"],
        min_leaf=body["min_leaf"],
        feature_subset_size=body["feature_subset_size"],
        seed=body["seed"],
        schema=FeatureSchema.from_dict(body["schema"]),
        taxonomy=ErrorTaxonomy.from_dict(body["taxonomy"]),
        trees=tuple(tuple(tree_from_dict(t) for t in label_trees)
                    for label_trees in body["trees"]),
    )
