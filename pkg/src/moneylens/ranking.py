"""Helpfulness ranking for (sentence, reference object) pairs.

A candidate comparison is scored from four signals: semantic similarity
between the sentence and the reference phrase, the reference's familiarity,
its category, and the size of the multiplier linking the two values. The
score is learned as a clipped linear regression on a 1-to-3 label scale:
predictions are clamped to [1, 3] inside the squared loss, so the gradient
vanishes wherever the raw score sits outside the clip range.

Four nested feature sets are supported:

* V1: similarity only
* V2: + familiarity + category indicators
* V3: + log multiplier
* V4: + squared log multiplier
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from decimal import Decimal, localcontext
from pathlib import Path
from typing import Sequence

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.exceptions import NotFittedError

from .embedding import EmbeddingIndex, EmbeddingProvider, cosine_similarity
from .references import CATEGORIES, ReferenceCorpus, ReferenceObject

__all__ = [
    "VARIANTS",
    "feature_names",
    "FeatureVector",
    "featurize",
    "TrainingExample",
    "ClippedLinearRanker",
    "clipped_loss",
    "clipped_loss_gradient",
    "train",
    "evaluate_r2",
    "compare_variants",
    "VariantComparison",
    "save_ranker",
    "load_ranker",
    "read_training_examples",
    "write_training_examples",
]

VARIANTS = ("V1", "V2", "V3", "V4")

CLIP_LO = 1.0
CLIP_HI = 3.0

_CATEGORY_INDEX = {c: i for i, c in enumerate(CATEGORIES)}


def feature_names(variant: str) -> list[str]:
    """Active feature names, in column order, for one variant."""
    if variant not in VARIANTS:
        raise ValueError(f"unknown variant {variant!r}; expected one of {VARIANTS}")
    names = ["similarity"]
    if variant in ("V2", "V3", "V4"):
        names.append("familiarity")
        names.extend(f"category={c}" for c in CATEGORIES)
    if variant in ("V3", "V4"):
        names.append("log_multiplier")
    if variant == "V4":
        names.append("log_multiplier_sq")
    return names


@dataclass(frozen=True)
class FeatureVector:
    """Raw (unstandardized) features for one (sentence, reference) pair."""

    similarity: float
    familiarity: float
    category: str
    log_multiplier: float
    log_multiplier_sq: float
    variant: str

    def to_array(self) -> np.ndarray:
        row = [self.similarity]
        if self.variant in ("V2", "V3", "V4"):
            row.append(self.familiarity)
            onehot = [0.0] * len(CATEGORIES)
            onehot[_CATEGORY_INDEX[self.category]] = 1.0
            row.extend(onehot)
        if self.variant in ("V3", "V4"):
            row.append(self.log_multiplier)
        if self.variant == "V4":
            row.append(self.log_multiplier_sq)
        return np.asarray(row, dtype=np.float64)


def featurize(
    quote_embedding: np.ndarray,
    reference: ReferenceObject,
    focal: Decimal,
    variant: str,
    index: EmbeddingIndex,
    familiarity: dict[str, float],
) -> FeatureVector:
    """Features for re-expressing ``focal`` via ``reference`` in a sentence.

    Requires the reference's cached embedding and familiarity score; both are
    produced upstream (index build + familiarity attachment) and their absence
    is a pipeline wiring error, reported as such.
    """
    if variant not in VARIANTS:
        raise ValueError(f"unknown variant {variant!r}")
    if focal <= 0:
        raise ValueError("focal value must be positive")
    if reference.id not in index:
        raise KeyError(f"no cached embedding for reference {reference.id!r}")
    if reference.id not in familiarity:
        raise KeyError(f"no familiarity score for reference {reference.id!r}")
    with localcontext() as ctx:
        ctx.prec = 50
        multiplier = float(focal / reference.value)
    log_multiplier = math.log(multiplier)
    return FeatureVector(
        similarity=cosine_similarity(quote_embedding, index.vector(reference.id)),
        familiarity=familiarity[reference.id],
        category=reference.category,
        log_multiplier=log_multiplier,
        log_multiplier_sq=log_multiplier * log_multiplier,
        variant=variant,
    )


@dataclass(frozen=True)
class TrainingExample:
    """One labeled (quote, reference) pair on the 1-to-3 helpfulness scale."""

    quote_id: str
    quote_text: str
    focal_value: Decimal
    reference_id: str
    label: float

    def __post_init__(self) -> None:
        if not (CLIP_LO <= self.label <= CLIP_HI):
            raise ValueError(f"label must be in [{CLIP_LO}, {CLIP_HI}], got {self.label}")
        if self.focal_value <= 0:
            raise ValueError("focal_value must be positive")


def clipped_loss(
    weights: np.ndarray, bias: float, x: np.ndarray, y: float,
    lo: float = CLIP_LO, hi: float = CLIP_HI,
) -> float:
    """(clip(bias + w.x) - y)^2 for one example."""
    raw = bias + float(np.dot(weights, x))
    return (min(max(raw, lo), hi) - y) ** 2


def clipped_loss_gradient(
    weights: np.ndarray, bias: float, x: np.ndarray, y: float,
    lo: float = CLIP_LO, hi: float = CLIP_HI,
) -> tuple[np.ndarray, float]:
    """Exact gradient of :func:`clipped_loss` w.r.t. (weights, bias).

    The clip is flat outside [lo, hi], so the gradient there is exactly zero;
    inside, it is the ordinary squared-loss gradient.
    """
    raw = bias + float(np.dot(weights, x))
    if raw < lo or raw > hi:
        return np.zeros_like(x), 0.0
    g = 2.0 * (raw - y)
    return g * x, g


class ClippedLinearRanker(BaseEstimator, RegressorMixin):
    """Clipped linear regression trained by SGD for helpfulness scoring.

    Similarity and familiarity columns are z-scored with training-set
    statistics (stored on the model); category indicators and multiplier
    terms enter raw. The bias starts at the clip midpoint so early raw
    scores sit inside the active region of the loss.

    Parameters
    ----------
    variant : one of "V1".."V4"
    passes : int
        Full shuffled sweeps over the training set.
    learning_rate : float
        Base step size, decayed as 1/sqrt(t) over update steps.
    seed : int
        Shuffle seed; fixing it makes training bit-for-bit reproducible.
    """

    def __init__(
        self,
        variant: str = "V2",
        passes: int = 50,
        learning_rate: float = 0.05,
        seed: int = 0,
    ):
        self.variant = variant
        self.passes = passes
        self.learning_rate = learning_rate
        self.seed = seed

    def _check_X(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        single = X.ndim == 1
        if single:
            X = X[None, :]
        expected = len(feature_names(self.variant))
        if X.shape[1] != expected:
            raise ValueError(
                f"variant {self.variant} expects {expected} features, got {X.shape[1]}"
            )
        return X

    def fit(self, X, y) -> "ClippedLinearRanker":
        if self.passes <= 0:
            raise ValueError("passes must be positive")
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}")
        X = self._check_X(X)
        y = np.asarray(y, dtype=np.float64)
        if X.shape[0] == 0:
            raise ValueError("need at least one training example")
        if X.shape[0] != y.shape[0]:
            raise ValueError(f"X has {X.shape[0]} rows but y has {y.shape[0]}")
        if np.any(y < CLIP_LO) or np.any(y > CLIP_HI):
            raise ValueError(f"labels must lie in [{CLIP_LO}, {CLIP_HI}]")

        # z-score the continuous features (category indicators stay raw);
        # without this the multiplier terms, which can reach hundreds, blow
        # up the early SGD steps.
        names = feature_names(self.variant)
        means = np.zeros(len(names))
        scales = np.ones(len(names))
        for col, name in enumerate(names):
            if not name.startswith("category="):
                means[col] = float(np.mean(X[:, col]))
                std = float(np.std(X[:, col]))
                scales[col] = std if std > 0 else 1.0
        self.feature_means_ = means
        self.feature_scales_ = scales

        Xs = (X - means) / scales
        weights = np.zeros(len(names))
        bias = (CLIP_LO + CLIP_HI) / 2.0
        rng = np.random.default_rng(self.seed)
        t = 0
        for _ in range(self.passes):
            for i in rng.permutation(X.shape[0]):
                t += 1
                grad_w, grad_b = clipped_loss_gradient(weights, bias, Xs[i], y[i])
                eta = self.learning_rate / math.sqrt(t)
                weights -= eta * grad_w
                bias -= eta * grad_b
        self.coef_ = weights
        self.intercept_ = float(bias)
        self.n_features_in_ = len(names)
        return self

    def decision_function(self, X) -> np.ndarray:
        """Unclipped raw scores."""
        if not hasattr(self, "coef_"):
            raise NotFittedError("fit the ranker before predicting")
        X = self._check_X(X)
        Xs = (X - self.feature_means_) / self.feature_scales_
        return Xs @ self.coef_ + self.intercept_

    def predict(self, X) -> np.ndarray:
        return np.clip(self.decision_function(X), CLIP_LO, CLIP_HI)

    def predict_one(self, features: FeatureVector) -> float:
        if features.variant != self.variant:
            raise ValueError(
                f"feature vector is for variant {features.variant}, model is {self.variant}"
            )
        return float(self.predict(features.to_array()[None, :])[0])


def evaluate_r2(model: ClippedLinearRanker, X, y) -> float:
    """1 - SS_res/SS_tot on clipped predictions; rejects constant labels."""
    y = np.asarray(y, dtype=np.float64)
    if y.size == 0:
        raise ValueError("empty test set")
    ss_tot = float(np.sum((y - np.mean(y)) ** 2))
    if ss_tot == 0.0:
        raise ValueError("labels have zero variance; R^2 undefined")
    pred = model.predict(X)
    return 1.0 - float(np.sum((y - pred) ** 2)) / ss_tot


def build_features(
    examples: Sequence[TrainingExample],
    corpus: ReferenceCorpus,
    index: EmbeddingIndex,
    familiarity: dict[str, float],
    provider: EmbeddingProvider,
    variant: str,
) -> tuple[np.ndarray, np.ndarray]:
    """Feature matrix and label vector for a batch of training examples."""
    quote_vectors: dict[str, np.ndarray] = {}
    rows, labels = [], []
    for ex in examples:
        if ex.quote_text not in quote_vectors:
            quote_vectors[ex.quote_text] = provider.embed(ex.quote_text)
        fv = featurize(
            quote_vectors[ex.quote_text],
            corpus.get(ex.reference_id),
            ex.focal_value,
            variant,
            index,
            familiarity,
        )
        rows.append(fv.to_array())
        labels.append(ex.label)
    return np.stack(rows), np.asarray(labels, dtype=np.float64)


def train(
    examples: Sequence[TrainingExample],
    corpus: ReferenceCorpus,
    index: EmbeddingIndex,
    familiarity: dict[str, float],
    provider: EmbeddingProvider,
    variant: str = "V2",
    passes: int = 50,
    learning_rate: float = 0.05,
    seed: int = 0,
) -> ClippedLinearRanker:
    """Featurize labeled examples and fit a ranker, deterministically."""
    if not examples:
        raise ValueError("need at least one training example")
    X, y = build_features(examples, corpus, index, familiarity, provider, variant)
    ranker = ClippedLinearRanker(
        variant=variant, passes=passes, learning_rate=learning_rate, seed=seed
    )
    return ranker.fit(X, y)


@dataclass
class VariantComparison:
    """Held-out R^2 per variant on one shared 80/20 split."""

    r2: dict[str, float]
    train_size: int
    test_size: int
    split_seed: int

    def to_text(self) -> str:
        lines = [f"held-out R^2 ({self.train_size} train / {self.test_size} test, split seed {self.split_seed})"]
        for variant in VARIANTS:
            lines.append(f"  {variant}  {self.r2[variant]:+.4f}")
        return "\n".join(lines)

    def to_dict(self) -> dict:
        return {
            "r2": dict(self.r2),
            "train_size": self.train_size,
            "test_size": self.test_size,
            "split_seed": self.split_seed,
        }


def compare_variants(
    examples: Sequence[TrainingExample],
    corpus: ReferenceCorpus,
    index: EmbeddingIndex,
    familiarity: dict[str, float],
    provider: EmbeddingProvider,
    split_seed: int = 0,
    passes: int = 50,
    learning_rate: float = 0.05,
    seed: int = 0,
) -> VariantComparison:
    """Train all four variants on an identical split and report held-out R^2."""
    if len(examples) < 25:
        raise ValueError(f"need at least 25 examples to compare variants, got {len(examples)}")
    perm = np.random.default_rng(split_seed).permutation(len(examples))
    n_test = max(1, int(round(len(examples) * 0.2)))
    test_idx = set(perm[:n_test].tolist())
    train_set = [ex for i, ex in enumerate(examples) if i not in test_idx]
    test_set = [ex for i, ex in enumerate(examples) if i in test_idx]

    r2: dict[str, float] = {}
    for variant in VARIANTS:
        model = train(
            train_set, corpus, index, familiarity, provider,
            variant=variant, passes=passes, learning_rate=learning_rate, seed=seed,
        )
        X_test, y_test = build_features(test_set, corpus, index, familiarity, provider, variant)
        r2[variant] = evaluate_r2(model, X_test, y_test)
    return VariantComparison(
        r2=r2, train_size=len(train_set), test_size=len(test_set), split_seed=split_seed
    )


def save_ranker(model: ClippedLinearRanker, provider_name: str, path: str | Path) -> None:
    """Flat JSON record; every float stored as its repr string."""
    if not hasattr(model, "coef_"):
        raise NotFittedError("cannot save an unfitted ranker")
    names = feature_names(model.variant)
    record = {
        "format": "helpfulness-model/v1",
        "variant": model.variant,
        "clip": [repr(CLIP_LO), repr(CLIP_HI)],
        "passes": int(model.passes),
        "learning_rate": repr(float(model.learning_rate)),
        "seed": int(model.seed),
        "provider": provider_name,
        "bias": repr(float(model.intercept_)),
        "weights": {name: repr(float(w)) for name, w in zip(names, model.coef_)},
        "standardization": {
            name: {"mean": repr(float(m)), "scale": repr(float(s))}
            for name, m, s in zip(names, model.feature_means_, model.feature_scales_)
        },
    }
    Path(path).write_text(json.dumps(record, indent=2) + "\n", encoding="utf-8")


def load_ranker(path: str | Path) -> tuple[ClippedLinearRanker, str]:
    """Returns (model, provider_name)."""
    record = json.loads(Path(path).read_text(encoding="utf-8"))
    if record.get("format") != "helpfulness-model/v1":
        raise ValueError(f"{path}: not a helpfulness model file")
    variant = record["variant"]
    names = feature_names(variant)
    model = ClippedLinearRanker(
        variant=variant,
        passes=int(record["passes"]),
        learning_rate=float(record["learning_rate"]),
        seed=int(record["seed"]),
    )
    missing = [n for n in names if n not in record["weights"]]
    if missing:
        raise ValueError(f"{path}: missing weights for {missing}")
    model.coef_ = np.asarray([float(record["weights"][n]) for n in names])
    model.intercept_ = float(record["bias"])
    model.feature_means_ = np.asarray(
        [float(record["standardization"][n]["mean"]) for n in names]
    )
    model.feature_scales_ = np.asarray(
        [float(record["standardization"][n]["scale"]) for n in names]
    )
    model.n_features_in_ = len(names)
    return model, str(record["provider"])


def write_training_examples(path: str | Path, examples: Sequence[TrainingExample]) -> None:
    with Path(path).open("w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["quote_id", "quote_text", "focal_value", "reference_id", "label"])
        for ex in examples:
            writer.writerow(
                [ex.quote_id, ex.quote_text, format(ex.focal_value, "f"), ex.reference_id, ex.label]
            )


def read_training_examples(path: str | Path) -> list[TrainingExample]:
    path = Path(path)
    out = []
    with path.open("r", encoding="utf-8", newline="") as f:
        reader = csv.DictReader(f)
        for lineno, row in enumerate(reader, start=2):
            try:
                out.append(
                    TrainingExample(
                        quote_id=row["quote_id"],
                        quote_text=row["quote_text"],
                        focal_value=Decimal(row["focal_value"]),
                        reference_id=row["reference_id"],
                        label=float(row["label"]),
                    )
                )
            except (KeyError, TypeError, ValueError, ArithmeticError) as exc:
                raise ValueError(f"{path}:{lineno}: bad training row: {exc}") from exc
    return out
