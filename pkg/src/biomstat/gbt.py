"""Gradient-boosted decision trees for binary classification, from scratch.

Second-order boosting on the logistic loss: each round fits one depth-limited
regression tree to the per-row gradients g = p - label and hessians
h = p(1 - p) at the current raw scores. Splits maximize the regularized gain

    0.5 * (GL^2/(HL + lambda) + GR^2/(HR + lambda) - G^2/(H + lambda)) - gamma

by exact greedy scan over midpoints between consecutive distinct feature
values; leaf weights are -G/(H + lambda). Rows and columns are subsampled per
tree without replacement from a seeded generator, so training is fully
deterministic for a given config. Early stopping keeps the round with the
lowest validation logloss.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .errors import DataFormatError, DegenerateDataError, ValidationError
from .features import FEATURE_NAMES

MODEL_FORMAT_VERSION = 1
HESSIAN_FLOOR = 1e-16
PROB_CLIP = 1e-15
# validation loss must drop by more than this to count as an improvement
EARLY_STOP_MIN_DELTA = 1e-9


@dataclass(frozen=True)
class TrainConfig:
    max_trees: int = 100
    learning_rate: float = 0.1
    max_depth: int = 6
    min_child_weight: float = 1.0
    gamma: float = 0.1
    reg_lambda: float = 1.0
    subsample: float = 0.8
    colsample: float = 0.8
    early_stopping_patience: int = 10
    rng_seed: int = 0
    base_score: float = 0.5

    def __post_init__(self) -> None:
        if self.max_trees < 1:
            raise ValidationError(f"max_trees must be >= 1, got {self.max_trees}")
        if self.max_depth < 1:
            raise ValidationError(f"max_depth must be >= 1, got {self.max_depth}")
        for name in ("subsample", "colsample"):
            frac = getattr(self, name)
            if not 0.0 < frac <= 1.0:
                raise ValidationError(f"{name} must be in (0, 1], got {frac}")
        if not 0.0 < self.base_score < 1.0:
            raise ValidationError(f"base_score must be in (0, 1), got {self.base_score}")
        if self.learning_rate <= 0.0:
            raise ValidationError(f"learning_rate must be positive, got {self.learning_rate}")
        if self.min_child_weight < 0.0 or self.reg_lambda < 0.0 or self.gamma < 0.0:
            raise ValidationError("min_child_weight, reg_lambda, gamma must be >= 0")
        if self.early_stopping_patience < 0:
            raise ValidationError("early_stopping_patience must be >= 0 (0 disables)")


@dataclass
class TreeNode:
    """Internal node (feature/threshold/children) or leaf (weight).

    Values route left when strictly below the threshold, right otherwise.
    ``gain`` records the realized split gain of internal nodes.
    """

    feature: int = -1
    threshold: float = 0.0
    left: "TreeNode | None" = None
    right: "TreeNode | None" = None
    weight: float = 0.0
    gain: float = 0.0

    @property
    def is_leaf(self) -> bool:
        return self.left is None


@dataclass(frozen=True)
class GbtModel:
    trees: tuple[TreeNode, ...]
    learning_rate: float
    base_score: float
    feature_names: tuple[str, ...]
    trained_rounds: int
    best_round: int

    def used_trees(self) -> tuple[TreeNode, ...]:
        return self.trees[: self.best_round + 1]


@dataclass(frozen=True)
class TrainResult:
    model: GbtModel
    train_logloss: tuple[float, ...]
    valid_logloss: tuple[float, ...]


def sigmoid(x):
    return 1.0 / (1.0 + np.exp(-np.asarray(x, dtype=np.float64)))


def logit(p: float) -> float:
    return math.log(p / (1.0 - p))


def logistic_grad_hess(raw_score: float, label: int) -> tuple[float, float]:
    """Per-sample gradient and hessian of the logistic loss at a raw score."""
    p = 1.0 / (1.0 + math.exp(-raw_score))
    g = p - label
    h = max(p * (1.0 - p), HESSIAN_FLOOR)
    return g, h


def _grad_hess_vec(raw: np.ndarray, labels: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    p = sigmoid(raw)
    return p - labels, np.maximum(p * (1.0 - p), HESSIAN_FLOOR)


def logloss(raw: np.ndarray, labels: np.ndarray) -> float:
    p = np.clip(sigmoid(raw), PROB_CLIP, 1.0 - PROB_CLIP)
    return float(-np.mean(labels * np.log(p) + (1.0 - labels) * np.log(1.0 - p)))


def find_best_split(
    values: np.ndarray,
    grads: np.ndarray,
    hess: np.ndarray,
    reg_lambda: float,
    gamma: float,
    min_child_weight: float,
) -> tuple[float, float] | None:
    """Best (threshold, gain) for one sorted feature column, or None.

    ``values`` must be sorted ascending with ``grads``/``hess`` aligned.
    Candidate thresholds are midpoints between consecutive distinct values;
    sides whose hessian sum falls below ``min_child_weight`` are skipped, and
    only gains strictly above zero qualify. Ties keep the lowest threshold.
    """
    values = np.asarray(values, dtype=np.float64)
    grads = np.asarray(grads, dtype=np.float64)
    hess = np.asarray(hess, dtype=np.float64)
    n = values.shape[0]
    if n < 2:
        return None
    if np.any(np.diff(values) < 0):
        raise ValidationError("find_best_split requires an ascending column")
    cg = np.cumsum(grads)
    ch = np.cumsum(hess)
    total_g = float(cg[-1])
    total_h = float(ch[-1])
    gl = cg[:-1]
    hl = ch[:-1]
    gr = total_g - gl
    hr = total_h - hl
    with np.errstate(divide="ignore", invalid="ignore"):
        gain = 0.5 * (
            gl * gl / (hl + reg_lambda)
            + gr * gr / (hr + reg_lambda)
            - total_g * total_g / (total_h + reg_lambda)
        ) - gamma
    gain = np.nan_to_num(gain, nan=-np.inf, posinf=-np.inf, neginf=-np.inf)
    valid = (
        (np.diff(values) > 0)
        & (hl >= min_child_weight)
        & (hr >= min_child_weight)
    )
    if not valid.any():
        return None
    gain = np.where(valid, gain, -np.inf)
    best = int(np.argmax(gain))
    best_gain = float(gain[best])
    if best_gain <= 0.0:
        return None
    threshold = (values[best] + values[best + 1]) / 2.0
    return float(threshold), best_gain


def _leaf_weight(g_sum: float, h_sum: float, reg_lambda: float) -> float:
    return -g_sum / (h_sum + reg_lambda)


def _grow_tree(
    x: np.ndarray,
    grads: np.ndarray,
    hess: np.ndarray,
    rows: np.ndarray,
    cols: np.ndarray,
    depth: int,
    cfg: TrainConfig,
) -> TreeNode:
    g_sum = float(grads[rows].sum())
    h_sum = float(hess[rows].sum())
    if depth >= cfg.max_depth or rows.size < 2:
        return TreeNode(weight=_leaf_weight(g_sum, h_sum, cfg.reg_lambda))
    best_gain = 0.0
    best_col = -1
    best_thr = 0.0
    for col in cols:
        order = np.argsort(x[rows, col], kind="stable")
        sorted_rows = rows[order]
        found = find_best_split(
            x[sorted_rows, col],
            grads[sorted_rows],
            hess[sorted_rows],
            cfg.reg_lambda,
            cfg.gamma,
            cfg.min_child_weight,
        )
        if found is not None and found[1] > best_gain:
            best_thr, best_gain = found
            best_col = int(col)
    if best_col < 0:
        return TreeNode(weight=_leaf_weight(g_sum, h_sum, cfg.reg_lambda))
    left_mask = x[rows, best_col] < best_thr
    left = _grow_tree(x, grads, hess, rows[left_mask], cols, depth + 1, cfg)
    right = _grow_tree(x, grads, hess, rows[~left_mask], cols, depth + 1, cfg)
    return TreeNode(
        feature=best_col, threshold=best_thr, left=left, right=right, gain=best_gain
    )


def _apply_tree(node: TreeNode, x: np.ndarray, out: np.ndarray, idx: np.ndarray) -> None:
    if node.is_leaf:
        out[idx] = node.weight
        return
    mask = x[idx, node.feature] < node.threshold
    _apply_tree(node.left, x, out, idx[mask])
    _apply_tree(node.right, x, out, idx[~mask])


def tree_output(node: TreeNode, x: np.ndarray) -> np.ndarray:
    out = np.empty(x.shape[0], dtype=np.float64)
    _apply_tree(node, x, out, np.arange(x.shape[0]))
    return out


def _check_matrix(x: np.ndarray, n_features: int, what: str) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != n_features:
        raise ValidationError(
            f"{what} must be 2-D with {n_features} columns, got shape {x.shape}"
        )
    bad = np.nonzero(~np.isfinite(x).all(axis=1))[0]
    if bad.size:
        raise ValidationError(f"{what} row {int(bad[0])} contains NaN or Inf")
    return x


def train(
    features: np.ndarray,
    labels: np.ndarray,
    validation: tuple[np.ndarray, np.ndarray] | None = None,
    config: TrainConfig = TrainConfig(),
    feature_names: tuple[str, ...] | None = None,
) -> TrainResult:
    """Boost up to config.max_trees rounds; returns the model and loss traces.

    ``validation`` is the (features, labels) holdout monitored for early
    stopping and is required when ``early_stopping_patience > 0``. The model's
    ``best_round`` is the earliest round with minimal validation logloss (the
    last round when no validation set is used).
    """
    if feature_names is None:
        feature_names = FEATURE_NAMES
    x = _check_matrix(features, len(feature_names), "features")
    y = np.asarray(labels, dtype=np.float64)
    if y.shape != (x.shape[0],):
        raise ValidationError(f"labels shape {y.shape} does not match {x.shape[0]} rows")
    classes = np.unique(y)
    if classes.size < 2:
        raise DegenerateDataError("degenerate labels: training set has a single class")
    if not np.all(np.isin(classes, (0.0, 1.0))):
        raise ValidationError(f"labels must be 0/1, got {classes}")
    if validation is not None:
        xv = _check_matrix(validation[0], len(feature_names), "validation features")
        yv = np.asarray(validation[1], dtype=np.float64)
        if yv.shape != (xv.shape[0],) or yv.size == 0:
            raise ValidationError("validation labels empty or mismatched")
    elif config.early_stopping_patience > 0:
        raise ValidationError(
            "early stopping needs a validation set (or set early_stopping_patience=0)"
        )

    n, d = x.shape
    rng = np.random.default_rng(config.rng_seed)
    base_raw = logit(config.base_score)
    raw = np.full(n, base_raw, dtype=np.float64)
    raw_v = np.full(xv.shape[0], base_raw, dtype=np.float64) if validation is not None else None

    trees: list[TreeNode] = []
    train_trace: list[float] = []
    valid_trace: list[float] = []
    best_val = math.inf
    best_round = -1
    stale = 0
    n_rows = max(1, math.ceil(config.subsample * n))
    n_cols = max(1, math.ceil(config.colsample * d))

    for t in range(config.max_trees):
        if config.subsample < 1.0:
            rows = np.sort(rng.choice(n, size=n_rows, replace=False))
        else:
            rows = np.arange(n)
        if config.colsample < 1.0:
            cols = np.sort(rng.choice(d, size=n_cols, replace=False))
        else:
            cols = np.arange(d)
        grads, hess = _grad_hess_vec(raw, y)
        tree = _grow_tree(x, grads, hess, rows, cols, 0, config)
        trees.append(tree)
        raw += config.learning_rate * tree_output(tree, x)
        train_trace.append(logloss(raw, y))
        if validation is None:
            best_round = t
            continue
        raw_v += config.learning_rate * tree_output(tree, xv)
        vloss = logloss(raw_v, yv)
        valid_trace.append(vloss)
        if vloss < best_val - EARLY_STOP_MIN_DELTA:
            best_val = vloss
            best_round = t
            stale = 0
        else:
            stale += 1
            if config.early_stopping_patience and stale >= config.early_stopping_patience:
                break

    model = GbtModel(
        trees=tuple(trees),
        learning_rate=config.learning_rate,
        base_score=config.base_score,
        feature_names=tuple(feature_names),
        trained_rounds=len(trees),
        best_round=best_round,
    )
    return TrainResult(model, tuple(train_trace), tuple(valid_trace))


def predict_raw(model: GbtModel, x: np.ndarray) -> np.ndarray:
    x = _check_matrix(x, len(model.feature_names), "features")
    raw = np.full(x.shape[0], logit(model.base_score), dtype=np.float64)
    for tree in model.used_trees():
        raw += model.learning_rate * tree_output(tree, x)
    return raw


def predict_matrix(model: GbtModel, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """(probabilities, raw scores) for a feature matrix."""
    raw = predict_raw(model, x)
    return sigmoid(raw), raw


def predict(model: GbtModel, x) -> tuple[float, float]:
    """(probability, raw score) for one feature vector."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (len(model.feature_names),):
        raise ValidationError(
            f"feature arity mismatch: got {x.shape}, model takes {len(model.feature_names)}"
        )
    probs, raws = predict_matrix(model, x.reshape(1, -1))
    return float(probs[0]), float(raws[0])


def feature_importance(model: GbtModel) -> dict[str, float]:
    """Total realized split gain per feature over the used trees."""
    totals = {name: 0.0 for name in model.feature_names}

    def walk(node: TreeNode) -> None:
        if node.is_leaf:
            return
        totals[model.feature_names[node.feature]] += node.gain
        walk(node.left)
        walk(node.right)

    for tree in model.used_trees():
        walk(tree)
    return totals


def _fmt(x: float) -> str:
    # 17 significant digits: lossless float64 round-trip
    if not math.isfinite(x):
        raise ValidationError(f"cannot serialize non-finite float {x}")
    return format(x, ".17g")


def _flatten_tree(root: TreeNode) -> list[dict]:
    nodes: list[dict] = []

    def add(node: TreeNode) -> int:
        node_id = len(nodes)
        nodes.append({})
        if node.is_leaf:
            nodes[node_id] = {"id": node_id, "weight": node.weight}
        else:
            left_id = add(node.left)
            right_id = add(node.right)
            nodes[node_id] = {
                "id": node_id,
                "feature": node.feature,
                "threshold": node.threshold,
                "left": left_id,
                "right": right_id,
                "gain": node.gain,
            }
        return node_id

    add(root)
    return nodes


def _emit_json(obj) -> str:
    if isinstance(obj, dict):
        return "{" + ",".join(f"{json.dumps(k)}:{_emit_json(v)}" for k, v in obj.items()) + "}"
    if isinstance(obj, (list, tuple)):
        return "[" + ",".join(_emit_json(v) for v in obj) + "]"
    if isinstance(obj, bool):
        return "true" if obj else "false"
    if isinstance(obj, int):
        return str(obj)
    if isinstance(obj, float):
        return _fmt(obj)
    if isinstance(obj, str):
        return json.dumps(obj)
    raise TypeError(f"cannot serialize {type(obj)}")


def serialize(model: GbtModel) -> bytes:
    """Model as JSON bytes; floats carry 17 significant digits."""
    doc = {
        "format_version": MODEL_FORMAT_VERSION,
        "base_score": model.base_score,
        "learning_rate": model.learning_rate,
        "trained_rounds": model.trained_rounds,
        "best_round": model.best_round,
        "feature_names": list(model.feature_names),
        "trees": [{"nodes": _flatten_tree(t)} for t in model.trees],
    }
    return (_emit_json(doc) + "\n").encode("utf-8")


def _build_tree(nodes: list[dict], n_features: int) -> TreeNode:
    by_id: dict[int, dict] = {}
    for raw in nodes:
        if "id" not in raw:
            raise DataFormatError("malformed tree: node without id")
        by_id[int(raw["id"])] = raw
    if 0 not in by_id:
        raise DataFormatError("malformed tree: missing root node 0")

    def build(node_id: int, path: set[int]) -> TreeNode:
        if node_id in path:
            raise DataFormatError(f"malformed tree: cycle through node {node_id}")
        if node_id not in by_id:
            raise DataFormatError(f"malformed tree: dangling child {node_id}")
        raw = by_id[node_id]
        if "weight" in raw:
            return TreeNode(weight=float(raw["weight"]))
        try:
            feature = int(raw["feature"])
            threshold = float(raw["threshold"])
            left_id = int(raw["left"])
            right_id = int(raw["right"])
        except (KeyError, TypeError, ValueError) as exc:
            raise DataFormatError(f"malformed tree: node {node_id} incomplete ({exc})") from exc
        if not 0 <= feature < n_features:
            raise ValidationError(
                f"tree references feature_index {feature} with {n_features} features"
            )
        branch = path | {node_id}
        return TreeNode(
            feature=feature,
            threshold=threshold,
            left=build(left_id, branch),
            right=build(right_id, branch),
            gain=float(raw.get("gain", 0.0)),
        )

    return build(0, set())


def deserialize(data: bytes | str) -> GbtModel:
    try:
        doc = json.loads(data)
    except json.JSONDecodeError as exc:
        raise DataFormatError(f"model JSON parse error: {exc}") from exc
    if not isinstance(doc, dict):
        raise DataFormatError("model JSON must be an object")
    if doc.get("format_version") != MODEL_FORMAT_VERSION:
        raise DataFormatError(f"unsupported model format_version {doc.get('format_version')!r}")
    try:
        feature_names = tuple(str(n) for n in doc["feature_names"])
        trees = tuple(
            _build_tree(t["nodes"], len(feature_names)) for t in doc["trees"]
        )
        model = GbtModel(
            trees=trees,
            learning_rate=float(doc["learning_rate"]),
            base_score=float(doc["base_score"]),
            feature_names=feature_names,
            trained_rounds=int(doc.get("trained_rounds", len(trees))),
            best_round=int(doc["best_round"]),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise DataFormatError(f"model JSON missing or malformed field: {exc}") from exc
    if model.best_round >= len(model.trees):
        raise ValidationError(
            f"best_round {model.best_round} exceeds tree count {len(model.trees)}"
        )
    return model
