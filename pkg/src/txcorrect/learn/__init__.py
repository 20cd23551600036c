"""Model training, prediction, and the versioned registry."""

from .tree import EmptyData, LearnError, Leaf, Split, TreeNode, train_tree, tree_depth, tree_predict_fractions
from .forest import (
    MODE_JOINT,
    MODE_PER_LABEL,
    ForestModel,
    forest_from_payload,
    forest_to_payload,
    predict_labels,
    predict_matrix,
    stable_seed,
    train_forest,
)
from .logistic import (
    DEFAULT_PENALTIES,
    KOutOfRange,
    OvrLogisticModel,
    SingleClass,
    expand_categoricals,
    logistic_from_payload,
    logistic_to_payload,
    loss_and_gradient,
    rank_matrix,
    recommend_values,
    train_ovr_logistic,
)
from .registry import (
    ModelArtifact,
    ModelRegistry,
    PayloadCorrupt,
    PURPOSE_DETECTION,
    RegistryError,
    UnknownVersion,
    correction_purpose,
)

__all__ = [
    "EmptyData", "LearnError", "Leaf", "Split", "TreeNode", "train_tree",
    "tree_depth", "tree_predict_fractions",
    "MODE_JOINT", "MODE_PER_LABEL", "ForestModel", "forest_from_payload",
    "forest_to_payload", "predict_labels", "predict_matrix", "stable_seed",
    "train_forest",
    "DEFAULT_PENALTIES", "KOutOfRange", "OvrLogisticModel", "SingleClass",
    "expand_categoricals", "logistic_from_payload", "logistic_to_payload",
    "loss_and_gradient", "rank_matrix", "recommend_values", "train_ovr_logistic",
    "ModelArtifact", "ModelRegistry", "PayloadCorrupt", "PURPOSE_DETECTION",
    "RegistryError", "UnknownVersion", "correction_purpose",
]
