"""Feature importance for fitted forests."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import EmptyValidation

METHODS = ("impurity", "permutation")


@dataclass
class ImportanceReport:
    feature_names: tuple
    scores: np.ndarray
    method: str

    def ranking(self) -> list:
        order = sorted(range(len(self.scores)), key=lambda i: (-self.scores[i], i))
        return [self.feature_names[i] for i in order]

    def as_dict(self) -> dict:
        return {"method": self.method,
                "scores": {n: float(s) for n, s in zip(self.feature_names, self.scores)}}


def _normalize(raw: np.ndarray) -> np.ndarray:
    raw = np.clip(np.asarray(raw, dtype=np.float64), 0.0, None)
    total = raw.sum()
    if not total > 0:
        # nothing was learned: report a uniform split by convention
        return np.full(len(raw), 1.0 / len(raw))
    return raw / total


def importance(model, X_val=None, y_val=None, method: str = "impurity",
               seed: int = 0, n_repeats: int = 5) -> ImportanceReport:
    """Normalized importance scores summing to one.

    ``impurity`` attributes each split's variance reduction to its feature.
    ``permutation`` measures the increase of validation MSE when a column is
    shuffled (averaged over ``n_repeats`` seeded shuffles); negative increases
    count as zero.
    """
    if method == "impurity":
        raw = model.impurity_totals()
    elif method == "permutation":
        if X_val is None or y_val is None or len(y_val) == 0:
            raise EmptyValidation("permutation importance needs validation rows")
        X_val = np.asarray(X_val, dtype=np.float64)
        y_val = np.asarray(y_val, dtype=np.float64)
        base = np.mean((model.predict(X_val) - y_val) ** 2)
        rng = np.random.default_rng(seed)
        raw = np.zeros(X_val.shape[1])
        for j in range(X_val.shape[1]):
            for _ in range(n_repeats):
                shuffled = X_val.copy()
                shuffled[:, j] = rng.permutation(shuffled[:, j])
                raw[j] += np.mean((model.predict(shuffled) - y_val) ** 2) - base
        raw /= n_repeats
    else:
        raise ValueError(f"unknown importance method {method!r}; use one of {METHODS}")
    return ImportanceReport(tuple(model.feature_names), _normalize(raw), method)
