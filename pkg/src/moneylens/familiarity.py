"""Familiarity scores for reference objects.

Page-traffic counts exist for only part of the corpus, so a ridge regression
from phrase embeddings to log view counts is fit on the covered subset and
its prediction is used as the familiarity feature for EVERY object, covered
or not, keeping the feature on one consistent scale.
"""
from __future__ import annotations

import csv
import json
import math
import unicodedata
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy.linalg import cho_factor, cho_solve
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.exceptions import NotFittedError

from .embedding import EmbeddingIndex
from .references import ReferenceCorpus

__all__ = [
    "PageviewRecord",
    "read_pageviews",
    "RidgeEmbeddingRegressor",
    "attach_familiarity",
    "apply_familiarity",
    "save_familiarity_model",
    "load_familiarity_model",
]

MIN_TRAINING_ROWS = 10


@dataclass(frozen=True)
class PageviewRecord:
    """One month of page traffic for one wiki title."""

    wiki_title: str
    month: str  # YYYY-MM
    monthly_views: int

    def __post_init__(self) -> None:
        if self.monthly_views < 0:
            raise ValueError("monthly_views must be non-negative")


def read_pageviews(path: str | Path) -> list[PageviewRecord]:
    """Read CSV with header columns wiki_title, month, monthly_views."""
    path = Path(path)
    out = []
    with path.open("r", encoding="utf-8", newline="") as f:
        reader = csv.DictReader(f)
        for lineno, row in enumerate(reader, start=2):
            try:
                out.append(
                    PageviewRecord(
                        wiki_title=row["wiki_title"],
                        month=row["month"],
                        monthly_views=int(row["monthly_views"]),
                    )
                )
            except (KeyError, TypeError, ValueError) as exc:
                raise ValueError(f"{path}:{lineno}: bad pageview row: {exc}") from exc
    return out


class RidgeEmbeddingRegressor(BaseEstimator, RegressorMixin):
    """Ridge regression with an unpenalized intercept.

    Solves (X'X + alpha*I) w = X'(y - mean(y)) and restores the mean as the
    intercept, which keeps the penalty off the bias term. Alongside the fit
    on all rows, an 80/20 split seeded by ``seed`` yields a held-out R^2 for
    reporting.

    Parameters
    ----------
    alpha : float
        Ridge penalty, must be positive (the unregularized system may be
        singular and is rejected).
    seed : int
        Seed for the reporting split only; the fitted weights are
        deterministic regardless.

    Attributes
    ----------
    coef_ : ndarray of shape (dims,)
    intercept_ : float
    train_r2_ : float
    holdout_r2_ : float (nan when the split is degenerate)
    """

    def __init__(self, alpha: float = 1.0, seed: int = 0, holdout_fraction: float = 0.2):
        self.alpha = alpha
        self.seed = seed
        self.holdout_fraction = holdout_fraction

    @staticmethod
    def _solve(X: np.ndarray, y: np.ndarray, alpha: float) -> tuple[np.ndarray, float]:
        y_mean = float(np.mean(y))
        gram = X.T @ X + alpha * np.eye(X.shape[1])
        rhs = X.T @ (y - y_mean)
        weights = cho_solve(cho_factor(gram), rhs)
        return weights, y_mean

    @staticmethod
    def _r2(y_true: np.ndarray, y_pred: np.ndarray) -> float:
        ss_tot = float(np.sum((y_true - np.mean(y_true)) ** 2))
        if ss_tot == 0.0:
            return float("nan")
        ss_res = float(np.sum((y_true - y_pred) ** 2))
        return 1.0 - ss_res / ss_tot

    def fit(self, X, y) -> "RidgeEmbeddingRegressor":
        X = np.asarray(X, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        if self.alpha <= 0:
            raise ValueError("alpha must be positive")
        if X.ndim != 2:
            raise ValueError("X must be a 2-d matrix")
        if X.shape[0] != y.shape[0]:
            raise ValueError(f"X has {X.shape[0]} rows but y has {y.shape[0]}")
        if X.shape[0] < 2:
            raise ValueError("need at least 2 samples")

        self.coef_, self.intercept_ = self._solve(X, y, self.alpha)
        self.n_features_in_ = X.shape[1]
        self.train_r2_ = self._r2(y, X @ self.coef_ + self.intercept_)

        n_test = int(round(X.shape[0] * self.holdout_fraction))
        if 0 < n_test < X.shape[0] - 1:
            perm = np.random.default_rng(self.seed).permutation(X.shape[0])
            test, train = perm[:n_test], perm[n_test:]
            w, b = self._solve(X[train], y[train], self.alpha)
            self.holdout_r2_ = self._r2(y[test], X[test] @ w + b)
        else:
            self.holdout_r2_ = float("nan")
        return self

    def predict(self, X) -> np.ndarray:
        if not hasattr(self, "coef_"):
            raise NotFittedError("fit the regressor before predicting")
        X = np.asarray(X, dtype=np.float64)
        single = X.ndim == 1
        if single:
            X = X[None, :]
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"expected {self.n_features_in_} features, got {X.shape[1]}")
        out = X @ self.coef_ + self.intercept_
        return out[0] if single else out


def _views_by_title(pageviews: Iterable[PageviewRecord]) -> dict[str, int]:
    # Sum across months so files covering several months still join cleanly.
    totals: dict[str, int] = {}
    for rec in pageviews:
        key = unicodedata.normalize("NFC", rec.wiki_title)
        totals[key] = totals.get(key, 0) + rec.monthly_views
    return totals


def attach_familiarity(
    corpus: ReferenceCorpus,
    pageviews: Sequence[PageviewRecord],
    index: EmbeddingIndex,
    alpha: float = 1.0,
    seed: int = 0,
) -> tuple[dict[str, float], RidgeEmbeddingRegressor]:
    """Fit the view-count model on matched objects, score every object.

    Joins on NFC-normalized wiki title, fits on log(1 + views), then assigns
    the model prediction (not the raw count) to all objects so covered and
    uncovered references share one scale.
    """
    totals = _views_by_title(pageviews)
    rows, targets = [], []
    for obj in corpus.objects:
        if obj.wiki_title is None:
            continue
        views = totals.get(unicodedata.normalize("NFC", obj.wiki_title))
        if views is None:
            continue
        rows.append(index.vector(obj.id))
        targets.append(math.log1p(views))
    if len(rows) < MIN_TRAINING_ROWS:
        raise ValueError(
            f"only {len(rows)} corpus objects matched a pageview title; "
            f"need at least {MIN_TRAINING_ROWS} rows of pageview data to fit familiarity"
        )
    model = RidgeEmbeddingRegressor(alpha=alpha, seed=seed).fit(np.stack(rows), np.asarray(targets))
    return apply_familiarity(corpus, index, model), model


def apply_familiarity(
    corpus: ReferenceCorpus, index: EmbeddingIndex, model: RidgeEmbeddingRegressor
) -> dict[str, float]:
    """Predicted familiarity for every corpus object, keyed by id."""
    scores: dict[str, float] = {}
    for obj in corpus.objects:
        scores[obj.id] = float(model.predict(index.vector(obj.id)))
    return scores


def save_familiarity_model(
    model: RidgeEmbeddingRegressor, provider_name: str, path: str | Path
) -> None:
    """Flat JSON record; floats serialized via repr so reloads are bitwise."""
    record = {
        "format": "familiarity-model/v1",
        "lambda": repr(float(model.alpha)),
        "bias": repr(float(model.intercept_)),
        "weights": [repr(float(w)) for w in model.coef_],
        "provider": provider_name,
        "dims": int(model.n_features_in_),
        "train_r2": repr(float(model.train_r2_)),
        "holdout_r2": repr(float(model.holdout_r2_)),
        "seed": int(model.seed),
    }
    Path(path).write_text(json.dumps(record, indent=2) + "\n", encoding="utf-8")


def load_familiarity_model(path: str | Path) -> tuple[RidgeEmbeddingRegressor, str]:
    """Returns (model, provider_name)."""
    record = json.loads(Path(path).read_text(encoding="utf-8"))
    if record.get("format") != "familiarity-model/v1":
        raise ValueError(f"{path}: not a familiarity model file")
    model = RidgeEmbeddingRegressor(alpha=float(record["lambda"]), seed=int(record.get("seed", 0)))
    model.coef_ = np.asarray([float(w) for w in record["weights"]], dtype=np.float64)
    model.intercept_ = float(record["bias"])
    model.n_features_in_ = int(record["dims"])
    model.train_r2_ = float(record["train_r2"])
    model.holdout_r2_ = float(record["holdout_r2"])
    if len(model.coef_) != model.n_features_in_:
        raise ValueError(f"{path}: weight count does not match dims")
    return model, str(record["provider"])
