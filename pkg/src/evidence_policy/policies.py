"""Simple policy types and the mask helper shared by every estimator.

A policy is any object with ``apply(covariates) -> weights in [0, 1]``.
Estimators also accept a precomputed weight vector in place of a policy.
"""
from dataclasses import dataclass

import numpy as np


def as_mask(policy, covariates):
    """Per-row assignment weights of ``policy`` on ``covariates``."""
    n = np.asarray(covariates).shape[0]
    if isinstance(policy, np.ndarray) or isinstance(policy, (list, tuple)):
        mask = np.asarray(policy, dtype=float)
    else:
        mask = np.asarray(policy.apply(covariates), dtype=float)
    if mask.shape != (n,):
        raise ValueError(f"policy mask has shape {mask.shape}, expected ({n},)")
    if np.any(mask < 0) or np.any(mask > 1):
        raise ValueError("policy weights must lie in [0, 1]")
    return mask


@dataclass(frozen=True)
class ConstantPolicy:
    value: float = 1.0

    @property
    def is_null(self):
        return self.value == 0

    def apply(self, covariates):
        return np.full(np.asarray(covariates).shape[0], float(self.value))

    def to_dict(self):
        return {"type": "constant", "value": self.value}


@dataclass(frozen=True)
class CellTablePolicy:
    """Weights looked up by the integer value of one covariate column.

    Cells missing from the table get ``default``.
    """

    table: dict
    column: int = 0
    default: float = 0.0

    @property
    def is_null(self):
        return all(v == 0 for v in self.table.values())

    def apply(self, covariates):
        X = np.asarray(covariates, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        keys = X[:, self.column].astype(np.int64)
        return np.array([self.table.get(int(k), self.default) for k in keys], dtype=float)

    def to_dict(self):
        return {
            "type": "cell_table",
            "column": self.column,
            "default": self.default,
            "table": {str(k): v for k, v in self.table.items()},
        }
