"""One-vs-rest logistic regression for correction-value prediction.

Categorical feature columns are one-hot expanded (trees split on raw indices;
a linear model needs indicators), features are standardized with statistics
fit on the TRAIN split only, and each domain value gets its own binary
classifier trained by gradient descent with step halving. The scores are
per-class sigmoids used for ranking; they are not normalized to sum to 1.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from ..features import Dataset, FeatureSchema, ErrorTaxonomy, FeatureVector, FingerprintMismatch, SPLIT_TRAIN
from .forest import PAYLOAD_MAGIC, stable_seed
from .tree import EmptyData, LearnError

DEFAULT_PENALTIES = (0.001, 0.01, 0.1, 1.0, 10.0)

GRADIENT_TOLERANCE = 1e-6
MAX_ITERATIONS = 10_000
# Inner cross-validation fits only rank penalties; a tighter iteration budget
# keeps model selection fast without touching the final fit's contract.
MAX_ITERATIONS_CV = 500


class SingleClass(LearnError):
    pass


class KOutOfRange(LearnError):
    pass


def expand_categoricals(X: np.ndarray, cardinalities: tuple[tuple[int, int], ...],
                        n_features: int) -> np.ndarray:
    """Replace each categorical column with (cardinality + 1) indicators.

    Index 0 is the reserved unknown/absent slot, so indicators cover 0..V.
    Numeric columns pass through unchanged; column order is original order
    with expansions in place.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X.reshape(1, -1)
    categorical = dict(cardinalities)
    blocks = []
    for column in range(n_features):
        if column in categorical:
            size = categorical[column] + 1
            idx = np.clip(X[:, column].astype(np.int64), 0, size - 1)
            block = np.zeros((X.shape[0], size), dtype=np.float64)
            block[np.arange(X.shape[0]), idx] = 1.0
            blocks.append(block)
        else:
            blocks.append(X[:, column:column + 1])
    return np.hstack(blocks)


def loss_and_gradient(weights: np.ndarray, X1: np.ndarray, y: np.ndarray,
                      penalty: float) -> tuple[float, np.ndarray]:
    """Mean binary cross-entropy + (penalty/2)*||w||^2 (bias unpenalized).

    X1 already carries the leading bias column of ones. The test suite checks
    this gradient against central finite differences of the same loss.
    """
    z = X1 @ weights
    # log(1 + e^z) - y z, stable for large |z|
    xent = np.logaddexp(0.0, z) - y * z
    reg = 0.5 * penalty * float(weights[1:] @ weights[1:])
    loss = float(xent.mean()) + reg

    with np.errstate(over="ignore"):
        sigma = 1.0 / (1.0 + np.exp(-z))
    grad = X1.T @ (sigma - y) / X1.shape[0]
    grad[1:] += penalty * weights[1:]
    return loss, grad


def _fit_binary(X1: np.ndarray, y: np.ndarray, penalty: float,
                max_iterations: int = MAX_ITERATIONS) -> tuple[np.ndarray, bool]:
    """Gradient descent, fixed step halved on non-decrease; returns (w, converged)."""
    weights = np.zeros(X1.shape[1], dtype=np.float64)
    step = 1.0
    loss, grad = loss_and_gradient(weights, X1, y, penalty)
    for _ in range(max_iterations):
        if np.max(np.abs(grad)) < GRADIENT_TOLERANCE:
            return weights, True
        while step > 1e-30:
            candidate = weights - step * grad
            new_loss, new_grad = loss_and_gradient(candidate, X1, y, penalty)
            if new_loss < loss:
                weights, loss, grad = candidate, new_loss, new_grad
                break
            step /= 2.0
        else:
            return weights, False  # step underflow: flat to machine precision
    return weights, bool(np.max(np.abs(grad)) < GRADIENT_TOLERANCE)


def _standardize_fit(X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    mean = X.mean(axis=0)
    std = X.std(axis=0)
    std[std == 0.0] = 1.0
    return mean, std


def _with_bias(X: np.ndarray, mean: np.ndarray, std: np.ndarray) -> np.ndarray:
    scaled = (X - mean) / std
    return np.hstack([np.ones((scaled.shape[0], 1)), scaled])


def _batch_loss_grad(W: np.ndarray, X1: np.ndarray, Y: np.ndarray, penalty: float):
    """Per-class loss vector (K,) and gradient matrix (K, d)."""
    Z = X1 @ W.T                                         # (n, K)
    losses = np.mean(np.logaddexp(0.0, Z) - Y * Z, axis=0)
    losses = losses + 0.5 * penalty * np.sum(W[:, 1:] ** 2, axis=1)
    with np.errstate(over="ignore"):
        sigma = 1.0 / (1.0 + np.exp(-Z))
    grads = (sigma - Y).T @ X1 / X1.shape[0]             # (K, d)
    grads[:, 1:] += penalty * W[:, 1:]
    return losses, grads


def _fit_ovr(X1: np.ndarray, y: np.ndarray, n_classes: int, penalty: float,
             max_iterations: int = MAX_ITERATIONS):
    """All K one-vs-rest classifiers in lockstep.

    Each class follows exactly the per-class trajectory of _fit_binary (its
    own step size, halvings, and acceptance decisions); the lockstep only
    batches the matrix products. A loop round is either an accepted step or
    a halving for each still-active class.
    """
    n, d = X1.shape
    K = n_classes
    Y = np.zeros((n, K), dtype=np.float64)
    Y[np.arange(n), y] = 1.0

    W = np.zeros((K, d), dtype=np.float64)
    steps = np.ones(K)
    accepted = np.zeros(K, dtype=np.int64)
    done = np.zeros(K, dtype=bool)
    converged = np.zeros(K, dtype=bool)
    losses, grads = _batch_loss_grad(W, X1, Y, penalty)

    while True:
        gmax = np.max(np.abs(grads), axis=1)
        newly = ~done & (gmax < GRADIENT_TOLERANCE)
        converged |= newly
        done |= newly | (accepted >= max_iterations) | (steps <= 1e-30)
        active = ~done
        if not active.any():
            break
        candidates = W.copy()
        candidates[active] -= steps[active, None] * grads[active]
        new_losses, new_grads = _batch_loss_grad(candidates, X1, Y, penalty)
        improved = active & (new_losses < losses)
        W[improved] = candidates[improved]
        losses[improved] = new_losses[improved]
        grads[improved] = new_grads[improved]
        accepted[improved] += 1
        halve = active & ~improved
        steps[halve] /= 2.0

    return W, tuple(bool(c) for c in converged)


@dataclass
class OvrLogisticModel:
    class_id: int
    class_values: tuple[str, ...]
    weights: np.ndarray                 # (K, D+1), bias first
    mean: np.ndarray
    std: np.ndarray
    regularization: float
    candidate_regularizations: tuple[float, ...]
    folds: int
    seed: int
    schema: FeatureSchema
    taxonomy: ErrorTaxonomy
    converged: tuple[bool, ...]

    @property
    def n_classes(self) -> int:
        return len(self.class_values)

    @property
    def schema_fingerprint(self) -> str:
        return self.schema.fingerprint

    @property
    def taxonomy_fingerprint(self) -> str:
        return self.taxonomy.fingerprint

    @property
    def fully_converged(self) -> bool:
        return all(self.converged)

    def hyperparameters(self) -> dict:
        return {
            "class_id": self.class_id,
            "regularization": self.regularization,
            "candidate_regularizations": list(self.candidate_regularizations),
            "folds": self.folds,
        }

    def _expand(self, X: np.ndarray) -> np.ndarray:
        return expand_categoricals(X, self.schema.categorical_cardinalities(),
                                   self.schema.vector_length)

    def scores_matrix(self, X: np.ndarray) -> np.ndarray:
        X1 = _with_bias(self._expand(X), self.mean, self.std)
        with np.errstate(over="ignore"):
            return 1.0 / (1.0 + np.exp(-(X1 @ self.weights.T)))


def train_ovr_logistic(dataset: Dataset,
                       candidate_regularizations: tuple[float, ...] = DEFAULT_PENALTIES,
                       folds: int = 5, seed: int = 0) -> OvrLogisticModel:
    """Cross-validate the penalty on the TRAIN split, then fit one model.

    The chosen penalty maximizes mean fold accuracy (argmax of OvR scores),
    ties going to the larger penalty. Classifiers that stop on the iteration
    cap are flagged via ``converged`` but the model is still produced.
    """
    if dataset.kind != "correction":
        raise LearnError(f"logistic training needs a correction dataset, got {dataset.kind}")
    if folds < 2:
        raise LearnError("folds must be >= 2")
    domain = dataset.class_domain
    n_classes = len(domain)
    if n_classes < 2:
        raise SingleClass("value domain has fewer than 2 values")

    train_rows = dataset.rows_for(SPLIT_TRAIN)
    if len(train_rows) == 0:
        raise EmptyData("dataset has no TRAIN rows")
    X = dataset.X[train_rows]
    y = dataset.targets[train_rows].astype(np.int64)
    if len(np.unique(y)) < 2:
        raise SingleClass("fewer than 2 distinct target values observed in TRAIN")

    expanded = expand_categoricals(X, dataset.schema.categorical_cardinalities(),
                                   dataset.schema.vector_length)

    # Penalty selection: deterministic shuffled folds over the TRAIN rows.
    rng = np.random.default_rng(stable_seed(seed, "cv"))
    order = rng.permutation(len(y))
    fold_of = np.zeros(len(y), dtype=np.int64)
    fold_of[order] = np.arange(len(y)) % folds

    best_penalty = None
    best_accuracy = -1.0
    for penalty in candidate_regularizations:
        correct = 0
        total = 0
        for fold in range(folds):
            holdout = fold_of == fold
            if not holdout.any() or holdout.all():
                continue
            mean, std = _standardize_fit(expanded[~holdout])
            X1_fit = _with_bias(expanded[~holdout], mean, std)
            X1_val = _with_bias(expanded[holdout], mean, std)
            weights, _ = _fit_ovr(X1_fit, y[~holdout], n_classes, penalty,
                                  max_iterations=MAX_ITERATIONS_CV)
            predicted = np.argmax(X1_val @ weights.T, axis=1)
            correct += int((predicted == y[holdout]).sum())
            total += int(holdout.sum())
        accuracy = correct / total if total else 0.0
        if accuracy > best_accuracy or (accuracy == best_accuracy and
                                        best_penalty is not None and penalty > best_penalty):
            best_accuracy = accuracy
            best_penalty = penalty

    mean, std = _standardize_fit(expanded)
    X1 = _with_bias(expanded, mean, std)
    weights, converged = _fit_ovr(X1, y, n_classes, best_penalty)

    return OvrLogisticModel(
        class_id=dataset.class_id, class_values=tuple(domain), weights=weights,
        mean=mean, std=std, regularization=float(best_penalty),
        candidate_regularizations=tuple(float(p) for p in candidate_regularizations),
        folds=folds, seed=seed, schema=dataset.schema, taxonomy=dataset.taxonomy,
        converged=converged,
    )


def recommend_values(model: OvrLogisticModel, vector: FeatureVector, k: int,
                     ) -> list[tuple[str, float]]:
    """Top-k domain values by descending sigmoid score, ties by class index."""
    if vector.schema_fingerprint != model.schema_fingerprint:
        raise FingerprintMismatch(
            "feature vector was extracted under a different schema than the model")
    if not 1 <= k <= model.n_classes:
        raise KOutOfRange(f"k must be in 1..{model.n_classes}, got {k}")
    scores = model.scores_matrix(vector.values.reshape(1, -1))[0]
    order = np.lexsort((np.arange(len(scores)), -scores))
    return [(model.class_values[i], float(scores[i])) for i in order[:k]]


def rank_matrix(model: OvrLogisticModel, X: np.ndarray) -> np.ndarray:
    """Full ranking (class indices, best first) per row; (n, K)."""
    scores = model.scores_matrix(X)
    n, K = scores.shape
    idx = np.arange(K)
    return np.stack([np.lexsort((idx, -scores[i])) for i in range(n)])


def logistic_to_payload(model: OvrLogisticModel) -> bytes:
    body = {
        "kind": "ovr_logistic",
        "class_id": model.class_id,
        "class_values": list(model.class_values),
        "weights": [[float(v) for v in row] for row in model.weights],
        "mean": [float(v) for v in model.mean],
        "std": [float(v) for v in model.std],
        "regularization": model.regularization,
        "candidate_regularizations": list(model.candidate_regularizations),
        "folds": model.folds,
        "seed": model.seed,
        "schema": model.schema.to_dict(),
        "taxonomy": model.taxonomy.to_dict(),
        "converged": list(model.converged),
    }
    encoded = json.dumps(body, sort_keys=True, separators=(",", ":")).encode("utf-8")
    return PAYLOAD_MAGIC + len(encoded).to_bytes(4, "little") + encoded


def logistic_from_payload(payload: bytes) -> OvrLogisticModel:
    if payload[:8] != PAYLOAD_MAGIC:
        raise LearnError("not a model payload")
    size = int.from_bytes(payload[8:12], "little")
    body = json.loads(payload[12:12 + size].decode("utf-8"))
    if body["kind"] != "ovr_logistic":
        raise LearnError(f"payload holds a {body['kind']} model, expected ovr_logistic")
    return OvrLogisticModel(
        class_id=body["class_id"],
        class_values=tuple(body["class_values"]),
        weights=np.array(body["weights"], dtype=np.float64),
        mean=np.array(body["mean"], dtype=np.float64),
        std=np.array(body["std"], dtype=np.float64),
        regularization=body["regularization"],
        candidate_regularizations=tuple(body["candidate_regularizations"]),
        folds=body["folds"],
        seed=body["seed"],
        schema=FeatureSchema.from_dict(body["schema"]),
        taxonomy=ErrorTaxonomy.from_dict(body["taxonomy"]),
        converged=tuple(bool(c) for c in body["converged"]),
    )
