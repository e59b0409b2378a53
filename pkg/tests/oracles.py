"""Independent reference implementations the package is checked against."""

from fractions import Fraction

import numpy as np

from synthseg.model.mlp import PARAM_NAMES, MlpClassifier, loss_and_grad


def brute_iou(pred, gt, c):
    """|A ∩ B| / |A ∪ B| over point index sets, unlabelled gt ignored."""
    keep = [i for i in range(len(gt)) if gt[i] != 0]
    a = {i for i in keep if pred[i] == c}
    b = {i for i in keep if gt[i] == c}
    union = a | b
    return None if not union else Fraction(len(a & b), len(union))


def greedy_fps_oracle(points, k, start):
    """Textbook greedy FPS: recompute min distance to the chosen set from scratch each step."""
    pts = [tuple(p) for p in points]
    chosen = [start]
    while len(chosen) < k:
        best, best_d = None, None
        for i, p in enumerate(pts):
            if i in chosen:
                continue
            d = min(sum((a - b) ** 2 for a, b in zip(p, pts[j])) for j in chosen)
            if best_d is None or d > best_d:  # strict: ties keep the lowest index
                best, best_d = i, d
        chosen.append(best)
    return chosen


GRAD_FLOOR = 1e-6


def finite_difference_grads(model: MlpClassifier, feats, labels, weights=None, h=1e-5):
    """Central differences of the loss, one parameter entry at a time."""
    out = {}
    for name in PARAM_NAMES:
        p = model.params[name]
        g = np.zeros_like(p)
        for idx in np.ndindex(p.shape):
            old = p[idx]
            p[idx] = old + h
            up = loss_and_grad(model, feats, labels, weights)[0]
            p[idx] = old - h
            down = loss_and_grad(model, feats, labels, weights)[0]
            p[idx] = old
            g[idx] = (up - down) / (2 * h)
        out[name] = g
    return out


def max_relative_error(analytic: dict, numeric: dict, floor: float = GRAD_FLOOR) -> float:
    """max |a - n| / max(|a|, |n|, floor) over all entries.

    The floor keeps entries whose true gradient is essentially zero from turning
    finite-difference rounding noise into a huge ratio.
    """
    worst = 0.0
    for k in analytic:
        a, n = analytic[k], numeric[k]
        denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
        worst = max(worst, float(np.max(np.abs(a - n) / denom)))
    return worst


def random_model_and_batch(rng, taxonomy):
    """Small random classifier plus a batch with random standardization and weights."""
    hidden = int(rng.integers(2, 9))
    n = int(rng.integers(4, 40))
    model = MlpClassifier.create(taxonomy, hidden, seed=int(rng.integers(2**31)))
    model.params = {k: v + rng.normal(0, 0.5, v.shape) for k, v in model.params.items()}
    model.offset = rng.normal(0, 1, 8)
    model.scale = rng.uniform(0.5, 2.0, 8)
    feats = rng.normal(0, 1, (n, 8))
    labels = rng.integers(0, len(taxonomy), n)
    labels[0] = 1 + int(rng.integers(len(taxonomy) - 1))  # at least one labeled point
    weights = rng.uniform(0.2, 5.0, len(taxonomy)) if rng.random() < 0.5 else None
    return model, feats, labels, weights


def palette_oracle_model(taxonomy, eps=1e-3):
    """Classifier that labels a palette-painted point with its true class.

    Scores are -|rgb - palette_c|^2 up to a per-point constant, i.e.
    2 p_c . rgb - |p_c|^2, passed through a tanh layer kept in its linear range
    by the small ``eps``. Hidden units 0..2 carry r, g, b.
    """
    model = MlpClassifier.create(taxonomy, hidden=3)
    pal = taxonomy.palette().astype(np.float64) / 255.0
    w1 = np.zeros((8, 3))
    w1[5, 0] = w1[6, 1] = w1[7, 2] = eps
    model.params = {"W1": w1, "b1": np.zeros(3), "W2": 2.0 * pal.T / eps,
                    "b2": -np.sum(pal * pal, axis=1)}
    return model


def brute_iou_all(pred, gt):
    """Per-class IoU from index sets, every class seen in pred or labeled gt."""
    pred_sets, gt_sets = {}, {}
    for i, (p, g) in enumerate(zip(pred.tolist(), gt.tolist())):
        if g == 0:
            continue
        pred_sets.setdefault(p, set()).add(i)
        gt_sets.setdefault(g, set()).add(i)
    out = {}
    for c in set(pred_sets) | set(gt_sets):
        a, b = pred_sets.get(c, set()), gt_sets.get(c, set())
        out[c] = Fraction(len(a & b), len(a | b))
    return out
