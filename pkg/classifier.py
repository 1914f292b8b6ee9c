"""
classifier.py — the good/bad gait filter

Model search is a fixed, auditable sweep instead of an AutoML service:

  1. kNN             k in {1, 3, 5, 9}, euclidean
  2. bagged trees    {10, 50} trees x depth {2, 4, 8}
  3. extra trees     {10, 50} trees x depth {2, 4, 8}  (randomised splits)

Each candidate is scored by mean macro-F1 over stratified k-fold CV
(default 10). The best candidate wins; with ensembling on, the top 3 are
soft-voted, weighted by their CV score. The sweep runs in the order above
and is cut short when the time budget runs out (or, with early_stop, as
soon as a candidate hits a perfect CV score).

Features are z-scored with training-set statistics first so the kNN
distances compare like with like.

Every random stream is derived from (seed, fold index, candidate index),
so the result does not depend on --jobs. Fitted trees are flattened into
plain arrays right after fitting; prediction always walks those arrays,
which is also exactly what the saved JSON holds, so a loaded model predicts
bit-for-bit what the trained one did.
"""

import json
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from joblib import Parallel, delayed
from scipy.spatial.distance import cdist
from sklearn.metrics import confusion_matrix, f1_score, precision_recall_fscore_support
from sklearn.model_selection import StratifiedKFold, train_test_split
from sklearn.preprocessing import StandardScaler
from sklearn.tree import DecisionTreeClassifier, ExtraTreeClassifier

from errors import BudgetError, InvalidInput, ParseError
from features import FEATURE_NAMES, GaitFeatures
from storage import write_json_atomic

GOOD = "GoodGait"
BAD = "BadGait"
CLASSES = (BAD, GOOD)          # confusion-matrix order: rows truth, cols predicted
_CODE = {BAD: 0, GOOD: 1}

MODEL_FORMAT = "gait-triage-model"
MODEL_VERSION = 1

DEFAULT_THRESHOLD = 0.5


# --- Types ------------------------------------------------------------------------

@dataclass(frozen=True)
class LabeledExample:
    id: str
    features: GaitFeatures
    label: str

    def __post_init__(self):
        if self.label not in _CODE:
            raise InvalidInput(f"example '{self.id}': label must be {GOOD} or {BAD}, "
                               f"got {self.label!r}")


@dataclass(frozen=True)
class Candidate:
    kind: str                 # "knn" | "bagged_trees" | "extra_trees"
    k: int = 0
    distance: str = "euclidean"
    n_trees: int = 0
    max_depth: int = 0

    @property
    def name(self) -> str:
        if self.kind == "knn":
            return f"knn(k={self.k},{self.distance})"
        return f"{self.kind}(n={self.n_trees},depth={self.max_depth})"

    def as_dict(self) -> dict:
        return {"kind": self.kind, "k": self.k, "distance": self.distance,
                "n_trees": self.n_trees, "max_depth": self.max_depth}


def default_candidates(include_extra_trees: bool = True) -> list[Candidate]:
    sweep = [Candidate("knn", k=k) for k in (1, 3, 5, 9)]
    kinds = ["bagged_trees"] + (["extra_trees"] if include_extra_trees else [])
    for kind in kinds:
        for n_trees in (10, 50):
            for depth in (2, 4, 8):
                sweep.append(Candidate(kind, n_trees=n_trees, max_depth=depth))
    return sweep


@dataclass
class TrainConfig:
    n_folds: int = 10
    seed: int = 0
    ensemble: bool = True
    top_k: int = 3
    time_budget_s: float = 300.0
    early_stop: bool = True
    threshold: float = DEFAULT_THRESHOLD
    jobs: int = 1
    candidates: list[Candidate] = field(default_factory=default_candidates)

    def __post_init__(self):
        if self.n_folds < 2:
            raise InvalidInput(f"n_folds must be >= 2, got {self.n_folds}")
        if self.top_k < 1:
            raise InvalidInput(f"top_k must be >= 1, got {self.top_k}")


@dataclass
class CandidateScore:
    candidate: Candidate
    fold_scores: list[float]

    @property
    def mean(self) -> float:
        return float(np.mean(self.fold_scores))

    def as_dict(self) -> dict:
        return {"candidate": self.candidate.name, "params": self.candidate.as_dict(),
                "fold_macro_f1": self.fold_scores, "cv_macro_f1": self.mean}


@dataclass
class Member:
    candidate: Candidate
    weight: float
    cv_macro_f1: float
    state: dict


@dataclass
class TriageModel:
    members: list[Member]
    scaler_mean: list[float]
    scaler_scale: list[float]
    threshold: float = DEFAULT_THRESHOLD
    metadata: dict = field(default_factory=dict)


@dataclass
class Metrics:
    classes: tuple[str, ...]
    confusion: list[list[int]]
    precision: dict[str, float]
    recall: dict[str, float]
    f1: dict[str, float]
    support: dict[str, int]
    macro: dict[str, float]
    weighted: dict[str, float]
    accuracy: float

    def as_dict(self) -> dict:
        return {"classes": list(self.classes), "confusion_matrix": self.confusion,
                "precision": self.precision, "recall": self.recall, "f1": self.f1,
                "support": self.support, "macro": self.macro,
                "weighted": self.weighted, "accuracy": self.accuracy}


# --- Feature matrix ---------------------------------------------------------------

def _matrix(feats: list[GaitFeatures]) -> np.ndarray:
    for f in feats:
        if not f.is_finite():
            raise InvalidInput(f"non-finite features: {f}")
    if not feats:
        return np.empty((0, len(FEATURE_NAMES)))
    return np.vstack([f.as_vector() for f in feats])


def _labels(examples: list[LabeledExample]) -> np.ndarray:
    return np.array([_CODE[e.label] for e in examples], dtype=np.int64)


def _standardize(X: np.ndarray, mean, scale) -> np.ndarray:
    return (X - np.asarray(mean)) / np.asarray(scale)


# --- Split ---------------------------------------------------------------------------

def split_train_test(examples: list[LabeledExample], test_fraction: float = 0.2,
                     seed: int = 0) -> tuple[list[LabeledExample], list[LabeledExample]]:
    """Stratified, seeded split. Test size = max(2, ceil(fraction * n))."""
    if not 0 < test_fraction < 1:
        raise InvalidInput(f"test_fraction must be in (0, 1), got {test_fraction}")
    if len(examples) < 5:
        raise InvalidInput(f"need at least 5 examples to split, got {len(examples)}")
    y = _labels(examples)
    if np.unique(y).size < 2:
        raise InvalidInput("split needs both GoodGait and BadGait examples")
    if np.bincount(y, minlength=2).min() < 2:
        raise InvalidInput("split needs at least 2 examples of each class")

    n_test = max(2, math.ceil(test_fraction * len(examples)))
    train_idx, test_idx = train_test_split(np.arange(len(examples)), test_size=n_test,
                                           stratify=y, random_state=seed)
    return ([examples[i] for i in sorted(train_idx)],
            [examples[i] for i in sorted(test_idx)])


# --- Candidate fitting ------------------------------------------------------------

def _rng_seed(seed: int, fold: int, cand: int) -> np.random.SeedSequence:
    return np.random.SeedSequence([seed, fold, cand])


def _flatten_tree(tree) -> dict:
    t = tree.tree_
    counts = t.value[:, 0, :]
    totals = counts.sum(axis=1)
    classes = list(tree.classes_)
    if _CODE[GOOD] in classes:
        p_good = counts[:, classes.index(_CODE[GOOD])] / totals
    else:
        p_good = np.zeros(t.node_count)
    return {"left": t.children_left.tolist(), "right": t.children_right.tolist(),
            "feature": t.feature.tolist(), "threshold": t.threshold.tolist(),
            "p_good": p_good.tolist()}


def _fit_member(cand: Candidate, X: np.ndarray, y: np.ndarray,
                seq: np.random.SeedSequence) -> dict:
    if cand.kind == "knn":
        return {"points": X.tolist(), "labels": y.tolist(),
                "k": cand.k, "distance": cand.distance}

    rng = np.random.default_rng(seq)
    tree_cls = DecisionTreeClassifier if cand.kind == "bagged_trees" else ExtraTreeClassifier
    trees = []
    for _ in range(cand.n_trees):
        boot = rng.integers(0, len(y), len(y))
        tree = tree_cls(max_depth=cand.max_depth,
                        random_state=int(rng.integers(0, 2 ** 31 - 1)))
        tree.fit(X[boot], y[boot])
        trees.append(_flatten_tree(tree))
    return {"trees": trees}


def _tree_p_good(tree: dict, X: np.ndarray) -> np.ndarray:
    left = np.asarray(tree["left"])
    right = np.asarray(tree["right"])
    feature = np.asarray(tree["feature"])
    threshold = np.asarray(tree["threshold"])
    # sklearn splits on float32 features
    X32 = X.astype(np.float32)
    node = np.zeros(X.shape[0], dtype=np.int64)
    active = left[node] != -1
    while np.any(active):
        rows = np.flatnonzero(active)
        cur = node[rows]
        go_left = X32[rows, feature[cur]] <= threshold[cur]
        node[rows] = np.where(go_left, left[cur], right[cur])
        active = left[node] != -1
    return np.asarray(tree["p_good"])[node]


def knn_neighbors(points: np.ndarray, X: np.ndarray, k: int,
                  distance: str = "euclidean") -> np.ndarray:
    """Indices of the k nearest training points per row; ties go to the lower index."""
    metric = {"euclidean": "euclidean", "manhattan": "cityblock"}[distance]
    d = cdist(X, points, metric=metric)
    order = np.argsort(d, axis=1, kind="stable")
    return order[:, :min(k, points.shape[0])]


def _member_p_good(cand: Candidate, state: dict, X: np.ndarray) -> np.ndarray:
    if cand.kind == "knn":
        points = np.asarray(state["points"], dtype=np.float64)
        labels = np.asarray(state["labels"])
        nn = knn_neighbors(points, X, state["k"], state["distance"])
        return labels[nn].mean(axis=1)
    return np.mean([_tree_p_good(t, X) for t in state["trees"]], axis=0)


def _decide(scores: np.ndarray, threshold: float) -> np.ndarray:
    # strictly above: an even vote lands on BadGait
    return (scores > threshold).astype(np.int64)


def _fold_score(cand: Candidate, cand_idx: int, fold: int, X: np.ndarray, y: np.ndarray,
                train_idx: np.ndarray, val_idx: np.ndarray, seed: int,
                threshold: float) -> float:
    scaler = StandardScaler().fit(X[train_idx])
    Xs = scaler.transform(X)
    state = _fit_member(cand, Xs[train_idx], y[train_idx], _rng_seed(seed, fold, cand_idx))
    pred = _decide(_member_p_good(cand, state, Xs[val_idx]), threshold)
    return float(f1_score(y[val_idx], pred, average="macro", labels=[0, 1], zero_division=0))


# --- Training ----------------------------------------------------------------------

def train(examples: list[LabeledExample],
          cfg: TrainConfig | None = None) -> tuple[TriageModel, list[CandidateScore]]:
    """Sweep candidates by stratified CV macro-F1, refit the winner(s) on everything."""
    cfg = cfg or TrainConfig()
    X = _matrix([e.features for e in examples])
    y = _labels(examples)
    counts = np.bincount(y, minlength=2)
    if counts.min() == 0:
        raise InvalidInput("training needs both GoodGait and BadGait examples")
    if counts.min() < cfg.n_folds:
        raise InvalidInput(
            f"smallest class has {counts.min()} examples; with {cfg.n_folds} folds "
            f"some validation fold would hold a single class")

    folds = list(StratifiedKFold(n_splits=cfg.n_folds, shuffle=True,
                                 random_state=cfg.seed).split(X, y))
    deadline = time.monotonic() + cfg.time_budget_s
    report: list[CandidateScore] = []

    with Parallel(n_jobs=cfg.jobs) as parallel:
        for ci, cand in enumerate(cfg.candidates):
            if time.monotonic() >= deadline:
                print(f"[train] budget reached after {len(report)} candidate(s)")
                break
            scores = parallel(
                delayed(_fold_score)(cand, ci, fi, X, y, tr, va, cfg.seed, cfg.threshold)
                for fi, (tr, va) in enumerate(folds))
            if time.monotonic() > deadline:
                print(f"[train] budget ran out during {cand.name}; dropped")
                break
            report.append(CandidateScore(cand, scores))
            print(f"[train] {cand.name:<34} cv_macro_f1={report[-1].mean:.3f}")
            if cfg.early_stop and report[-1].mean >= 1.0:
                print(f"[train] early stop: {cand.name} is perfect on every fold")
                break

    if not report:
        raise BudgetError(f"time budget of {cfg.time_budget_s}s ran out before any "
                          f"candidate finished")

    # stable sort: equal scores keep sweep order
    ranked = sorted(report, key=lambda s: s.mean, reverse=True)
    chosen = ranked[:cfg.top_k] if cfg.ensemble else ranked[:1]
    total = sum(s.mean for s in chosen)

    scaler = StandardScaler().fit(X)
    mean = scaler.mean_.tolist()
    scale = scaler.scale_.tolist()
    Xs = _standardize(X, mean, scale)

    members = []
    for s in chosen:
        ci = cfg.candidates.index(s.candidate)
        weight = s.mean / total if total > 0 else 1.0 / len(chosen)
        state = _fit_member(s.candidate, Xs, y, _rng_seed(cfg.seed, cfg.n_folds, ci))
        members.append(Member(s.candidate, weight, s.mean, state))

    model = TriageModel(
        members=members, scaler_mean=mean, scaler_scale=scale, threshold=cfg.threshold,
        metadata={
            "seed": cfg.seed, "n_folds": cfg.n_folds, "ensemble": cfg.ensemble,
            "n_train": int(len(y)),
            "class_counts": {BAD: int(counts[0]), GOOD: int(counts[1])},
            "cv_report": [s.as_dict() for s in report],
            "feature_names": list(FEATURE_NAMES),
        })
    print(f"[train] selected {', '.join(m.candidate.name for m in members)}")
    return model, report


# --- Prediction -----------------------------------------------------------------

def good_scores(model: TriageModel, feats: list[GaitFeatures]) -> np.ndarray:
    X = _standardize(_matrix(feats), model.scaler_mean, model.scaler_scale)
    total = np.zeros(X.shape[0])
    for m in model.members:
        total += m.weight * _member_p_good(m.candidate, m.state, X)
    return total


def predict_batch(model: TriageModel, feats: list[GaitFeatures],
                  threshold: float | None = None) -> list[tuple[str, float]]:
    if not feats:
        return []
    scores = good_scores(model, feats)
    thr = model.threshold if threshold is None else threshold
    return [(CLASSES[c], float(s)) for c, s in zip(_decide(scores, thr), scores)]


def predict(model: TriageModel, features: GaitFeatures,
            threshold: float | None = None) -> tuple[str, float]:
    return predict_batch(model, [features], threshold)[0]


# --- Metrics ----------------------------------------------------------------------

def metrics_from_labels(truth: list[str], predicted: list[str]) -> Metrics:
    if not truth or len(truth) != len(predicted):
        raise InvalidInput("need equally long, non-empty truth and prediction lists")
    labels = list(CLASSES)
    cm = confusion_matrix(truth, predicted, labels=labels)
    p, r, f, s = precision_recall_fscore_support(truth, predicted, labels=labels,
                                                 zero_division=0)
    support = s.astype(float)
    weights = support / support.sum()
    return Metrics(
        classes=CLASSES,
        confusion=cm.tolist(),
        precision={c: float(v) for c, v in zip(labels, p)},
        recall={c: float(v) for c, v in zip(labels, r)},
        f1={c: float(v) for c, v in zip(labels, f)},
        support={c: int(v) for c, v in zip(labels, s)},
        macro={"precision": float(np.mean(p)), "recall": float(np.mean(r)),
               "f1": float(np.mean(f))},
        weighted={"precision": float(weights @ p), "recall": float(weights @ r),
                  "f1": float(weights @ f)},
        accuracy=float(np.trace(cm) / cm.sum()),
    )


def evaluate(model: TriageModel, test: list[LabeledExample],
             threshold: float | None = None) -> Metrics:
    if not test:
        raise InvalidInput("evaluation needs a non-empty test set")
    predicted = [label for label, _ in predict_batch(model, [e.features for e in test],
                                                     threshold)]
    return metrics_from_labels([e.label for e in test], predicted)


def majority_baseline(train_set: list[LabeledExample],
                      test: list[LabeledExample]) -> Metrics:
    """Always predict the training majority; what the model has to beat."""
    counts = np.bincount(_labels(train_set), minlength=2)
    majority = CLASSES[int(np.argmax(counts))]
    return metrics_from_labels([e.label for e in test], [majority] * len(test))


def threshold_sweep(model: TriageModel, examples: list[LabeledExample],
                    thresholds: list[float]) -> list[dict]:
    truth = [e.label for e in examples]
    scores = good_scores(model, [e.features for e in examples])
    rows = []
    for thr in thresholds:
        predicted = [CLASSES[c] for c in _decide(scores, thr)]
        m = metrics_from_labels(truth, predicted)
        rows.append({"threshold": thr, "macro_f1": m.macro["f1"], "bad_f1": m.f1[BAD],
                     "good_f1": m.f1[GOOD]})
    return rows


def confusion_text(m: Metrics) -> str:
    """Plain-text confusion block: rows = human label, columns = filter decision."""
    width = max(len(c) for c in m.classes) + 2
    lines = ["truth \\ predicted".ljust(width + 8) + "".join(c.rjust(width) for c in m.classes)]
    for c, row in zip(m.classes, m.confusion):
        lines.append(c.ljust(width + 8) + "".join(str(v).rjust(width) for v in row))
    lines.append("")
    lines.append(f"{'class':<{width + 8}}{'precision':>10}{'recall':>10}{'f1':>10}{'support':>10}")
    for c in m.classes:
        lines.append(f"{c:<{width + 8}}{m.precision[c]:>10.2f}{m.recall[c]:>10.2f}"
                     f"{m.f1[c]:>10.2f}{m.support[c]:>10d}")
    lines.append(f"{'macro avg':<{width + 8}}{m.macro['precision']:>10.2f}"
                 f"{m.macro['recall']:>10.2f}{m.macro['f1']:>10.2f}")
    lines.append(f"{'weighted avg':<{width + 8}}{m.weighted['precision']:>10.2f}"
                 f"{m.weighted['recall']:>10.2f}{m.weighted['f1']:>10.2f}")
    return "\n".join(lines)


# --- Persistence -----------------------------------------------------------------

def model_to_dict(model: TriageModel) -> dict:
    return {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "feature_names": list(FEATURE_NAMES),
        "scaler": {"mean": model.scaler_mean, "scale": model.scaler_scale},
        "threshold": model.threshold,
        "members": [{"candidate": m.candidate.as_dict(), "weight": m.weight,
                     "cv_macro_f1": m.cv_macro_f1, "state": m.state}
                    for m in model.members],
        "metadata": model.metadata,
    }


def save_model(model: TriageModel, path: Path | str) -> Path:
    return write_json_atomic(path, model_to_dict(model))


def load_model(path: Path | str) -> TriageModel:
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, UnicodeDecodeError, json.JSONDecodeError) as e:
        raise ParseError(f"{path}: unreadable model file ({e})")
    if not isinstance(doc, dict) or doc.get("format") != MODEL_FORMAT:
        raise ParseError(f"{path}: not a {MODEL_FORMAT} document")
    if doc.get("version") != MODEL_VERSION:
        raise ParseError(f"{path}: model version {doc.get('version')} "
                         f"(this build reads version {MODEL_VERSION})")
    try:
        members = [Member(candidate=Candidate(**m["candidate"]), weight=float(m["weight"]),
                          cv_macro_f1=float(m["cv_macro_f1"]), state=m["state"])
                   for m in doc["members"]]
        model = TriageModel(members=members,
                            scaler_mean=[float(v) for v in doc["scaler"]["mean"]],
                            scaler_scale=[float(v) for v in doc["scaler"]["scale"]],
                            threshold=float(doc["threshold"]),
                            metadata=doc.get("metadata", {}))
    except (KeyError, TypeError, ValueError) as e:
        raise ParseError(f"{path}: malformed model document ({e})")
    if not members or len(model.scaler_mean) != len(FEATURE_NAMES):
        raise ParseError(f"{path}: model has no members or wrong feature count")
    return model
