"""Independent brute-force oracles. Deliberately dumb, loop-based, and
decoupled from the library's implementation paths so they stay honest."""

from fractions import Fraction


def brute_subset_accuracy(pred, truth):
    hits = 0
    for p, t in zip(pred, truth):
        if list(p) == list(t):
            hits += 1
    return hits / len(pred)


def brute_jaccard(pred, truth):
    """Exact rational mean of per-sample set Jaccard, floated once."""
    total = Fraction(0)
    for p, t in zip(pred, truth):
        pset = {i for i, bit in enumerate(p) if bit}
        tset = {i for i, bit in enumerate(t) if bit}
        if not pset and not tset:
            total += 1
        else:
            total += Fraction(len(pset & tset), len(pset | tset))
    return float(total / len(pred))


def brute_precision(tp, fp):
    return 1.0 if tp + fp == 0 else tp / (tp + fp)


def brute_recall(tp, fn):
    return 1.0 if tp + fn == 0 else tp / (tp + fn)


def brute_accuracy_at_k(rankings, truth, k):
    hits = 0
    for ranked, true in zip(rankings, truth):
        if true in list(ranked)[:k]:
            hits += 1
    return hits / len(rankings)


def central_difference_gradient(fn, w, eps=1e-5):
    """Numerical gradient of a scalar function of a vector."""
    grad = [0.0] * len(w)
    for i in range(len(w)):
        up = list(w)
        down = list(w)
        up[i] += eps
        down[i] -= eps
        grad[i] = (fn(up) - fn(down)) / (2 * eps)
    return grad


def forward_simulate(initial, changes):
    """Apply (field, old, new) changes in order to a plain dict of values.

    None stands for a missing field. Raises if a change's old value does not
    match the current state, which is how the oracle detects a bad inversion.
    """
    state = dict(initial)
    for field_name, old, new in changes:
        current = state.get(field_name)
        if current != old:
            raise AssertionError(
                f"forward simulation diverged on {field_name}: {current!r} != {old!r}")
        if new is None:
            state.pop(field_name, None)
        else:
            state[field_name] = new
    return state


def best_single_feature_threshold(X, y):
    """Exhaustive (feature, threshold, polarity) search; returns best accuracy.

    The recoverability guarantee for designed-EASY corpora: some single
    feature must separate the classes at >= 0.9 accuracy.
    """
    n = len(y)
    best = 0.0
    n_features = len(X[0])
    for j in range(n_features):
        column = sorted({row[j] for row in X})
        thresholds = [column[0] - 1.0]
        thresholds += [(a + b) / 2 for a, b in zip(column, column[1:])]
        thresholds.append(column[-1] + 1.0)
        for threshold in thresholds:
            above = sum(1 for row, label in zip(X, y) if (row[j] > threshold) == bool(label))
            best = max(best, above / n, (n - above) / n)
    return best


def binomial_mass_between(n, p, lo, hi):
    """Exact-probability mass of Binomial(n, p) in [lo, hi], via the pmf recurrence."""
    pmf = (1 - p) ** n
    total = pmf if lo <= 0 <= hi else 0.0
    for k in range(1, n + 1):
        pmf *= (n - k + 1) / k * (p / (1 - p))
        if lo <= k <= hi:
            total += pmf
    return total


def xor_realizable_by_depth2():
    """Brute force: some depth-2 threshold tree classifies XOR perfectly."""
    points = [((0.0, 0.0), 0), ((0.0, 1.0), 1), ((1.0, 0.0), 1), ((1.0, 1.0), 0)]

    def leaf_majority(subset):
        ones = sum(label for _, label in subset)
        return 1 if ones * 2 >= len(subset) else 0

    def accuracy(root_feature, root_threshold, left_rule, right_rule):
        correct = 0
        for (x, y_coord), label in points:
            coords = (x, y_coord)
            side = coords[root_feature] <= root_threshold
            rule = left_rule if side else right_rule
            feature, threshold, left_label, right_label = rule
            predicted = left_label if coords[feature] <= threshold else right_label
            if predicted == label:
                correct += 1
        return correct / len(points)

    thresholds = (0.5,)
    labels = (0, 1)
    for root_feature in (0, 1):
        for root_threshold in thresholds:
            child_rules = [
                (f, t, l1, l2)
                for f in (0, 1) for t in thresholds for l1 in labels for l2 in labels
            ]
            for left_rule in child_rules:
                for right_rule in child_rules:
                    if accuracy(root_feature, root_threshold, left_rule, right_rule) == 1.0:
                        return True
    return False


def brute_gini_best_split(X, y, feature_indices, min_leaf=1):
    """Exhaustive best (cost, feature, threshold) with the tie rules spelled out."""
    n = len(y)
    best = None
    for j in sorted(feature_indices):
        values = sorted({row[j] for row in X})
        for a, b in zip(values, values[1:]):
            threshold = a + (b - a) / 2
            if threshold >= b:
                threshold = a
            left = [label for row, label in zip(X, y) if row[j] <= threshold]
            right = [label for row, label in zip(X, y) if row[j] > threshold]
            if len(left) < min_leaf or len(right) < min_leaf:
                continue

            def gini(group):
                if not group:
                    return 0.0
                out = 1.0
                for cls in set(group):
                    frac = group.count(cls) / len(group)
                    out -= frac * frac
                return out

            cost = (len(left) * gini(left) + len(right) * gini(right)) / n
            key = (cost, j, threshold)
            if best is None or key < best:
                best = key
    return best
