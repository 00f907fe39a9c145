"""Outcome centering c(x) for the pseudo-outcomes.

The variance-optimal centering minimises the weighted squared loss

    mean_i (W_i / p**2 + (1 - W_i) / (1 - p)**2) * (Y_i - c(X_i))**2,

whose pointwise minimiser is ``(1 - p) E[Y | x, W=1] + p E[Y | x, W=0]``.
Regression kinds fit that loss with weighted CART trees or forests.  This
module never splits data; callers pass an honest fold when they need one.
"""
import enum
from dataclasses import dataclass, field

import numpy as np

from ._random import make_rng
from .trees import fit_forest, fit_tree


class CenteringKind(str, enum.Enum):
    CONSTANT_ZERO = "constant_zero"
    CONSTANT_MEAN = "constant_mean"
    REGRESSION_TREE = "regression_tree"
    REGRESSION_FOREST = "regression_forest"


@dataclass(frozen=True)
class CenteringModel:
    kind: CenteringKind
    n_features: int
    constant: float = 0.0
    predictor: object = None
    treat_probability: float = None
    degenerate: bool = False
    hyperparams: dict = field(default_factory=dict)

    def predict(self, covariates):
        return predict_centering(self, covariates)


def centering_weights(treatment, p):
    w = np.asarray(treatment, dtype=float)
    return w / p**2 + (1.0 - w) / (1.0 - p) ** 2


def fit_centering(
    data,
    kind="regression_forest",
    treat_probability=None,
    *,
    max_depth=5,
    min_leaf=5,
    n_trees=100,
    max_features="sqrt",
    seed=0,
):
    """Fit a centering model on ``data``.

    ``treat_probability=None`` uses the sample treated fraction.  When all
    rows share one covariate vector the regression kinds reduce to the
    weighted mean and the model is flagged ``degenerate``.
    """
    kind = CenteringKind(kind)
    p = float(np.mean(data.treatment)) if treat_probability is None else float(treat_probability)
    if kind is CenteringKind.CONSTANT_ZERO:
        return CenteringModel(kind, data.p, 0.0, treat_probability=p)
    if kind is CenteringKind.CONSTANT_MEAN:
        return CenteringModel(kind, data.p, float(np.mean(data.outcome)), treat_probability=p)

    if not 0.0 < p < 1.0:
        raise ValueError(f"treat probability must lie in (0, 1), got {p}")
    if data.n < 2:
        raise ValueError("regression centering needs at least two rows")
    wts = centering_weights(data.treatment, p)
    hp = {"max_depth": max_depth, "min_leaf": min_leaf}
    X, y = data.covariates, data.outcome
    if np.all(X == X[0]):
        c = float(np.dot(wts, y) / wts.sum())
        return CenteringModel(kind, data.p, c, treat_probability=p, degenerate=True, hyperparams=hp)
    if kind is CenteringKind.REGRESSION_TREE:
        model = fit_tree(X, y, wts, max_depth=max_depth, min_leaf=min_leaf)
    else:
        hp.update(n_trees=n_trees, max_features=max_features)
        model = fit_forest(
            X,
            y,
            wts,
            n_trees=n_trees,
            max_depth=max_depth,
            min_leaf=min_leaf,
            max_features=max_features,
            rng=make_rng(seed, "centering_forest"),
        )
    return CenteringModel(kind, data.p, 0.0, model, treat_probability=p, hyperparams=hp)


def predict_centering(model, covariates):
    """Centering values per row.

    Besides a :class:`CenteringModel`, any callable ``f(X)`` or object with
    ``predict(X)`` is accepted.
    """
    X = np.asarray(covariates, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if not isinstance(model, CenteringModel):
        c = np.asarray(model(X) if callable(model) else model.predict(X), dtype=float)
        if c.shape != (X.shape[0],):
            raise ValueError(f"centering returned shape {c.shape}, expected ({X.shape[0]},)")
        return c
    if X.shape[1] != model.n_features:
        raise ValueError(
            f"centering model was fit on {model.n_features} features, got {X.shape[1]}"
        )
    if model.predictor is None:
        return np.full(X.shape[0], model.constant)
    return model.predictor.predict(X)
