"""Sequence-level k-fold evaluation of the bit predictors."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .dataset import FRAME_TYPES, feature_names, kfold_split, stack_corpus
from .metrics import mape, r2
from .models import ForestParams, fit_forest, fit_linear

log = logging.getLogger(__name__)

MODEL_KINDS = ("linear", "forest")


def fit_model(kind: str, X, y, frame_type=None, use_chroma=True, seed=0,
              forest_params: ForestParams | None = None, n_jobs=1,
              log_target=False):
    names = feature_names(frame_type, use_chroma) if frame_type else None
    if kind == "linear":
        return fit_linear(X, y, names, frame_type, log_target)
    if kind == "forest":
        return fit_forest(X, y, forest_params, seed, names, frame_type, n_jobs, log_target)
    raise ValueError(f"unknown model kind {kind!r}; use one of {MODEL_KINDS}")


@dataclass
class FoldResult:
    fold: int
    n_train: int
    n_test: int
    mape: float
    r2: float
    test_sequences: list = field(default_factory=list)


@dataclass
class CvReport:
    frame_type: str
    model: str
    use_chroma: bool
    folds: list

    @property
    def mape(self) -> float:
        return float(np.mean([f.mape for f in self.folds]))

    @property
    def r2(self) -> float:
        return float(np.mean([f.r2 for f in self.folds]))

    @property
    def label(self) -> str:
        name = "Linear regression" if self.model == "linear" else "Random forest"
        return name if self.use_chroma else f"{name} [no chroma]"

    def as_dict(self) -> dict:
        return {
            "frame_type": self.frame_type, "model": self.model,
            "use_chroma": self.use_chroma, "mape": self.mape, "r2": self.r2,
            "folds": [vars(f) for f in self.folds],
        }


def cross_validate(corpus, frame_type: str, kind: str = "forest",
                   use_chroma: bool = True, folds: int = 5, seed: int = 0,
                   forest_params: ForestParams | None = None, n_jobs: int = 1,
                   log_target: bool = False) -> CvReport:
    """Fit on k-1 folds of sequences, score MAPE and R^2 on the held-out fold."""
    X, y, groups = stack_corpus(corpus, frame_type, use_chroma)
    results = []
    splits = kfold_split([s.sequence_id for s in corpus], folds, seed)
    for i, (train_ids, test_ids) in enumerate(splits):
        test_mask = np.isin(groups, test_ids)
        if not test_mask.any() or test_mask.all():
            log.warning("fold %d has no %s-frame rows on one side; skipped", i, frame_type)
            continue
        model = fit_model(kind, X[~test_mask], y[~test_mask], frame_type, use_chroma,
                          seed, forest_params, n_jobs, log_target)
        pred = model.predict(X[test_mask])
        results.append(FoldResult(i, int((~test_mask).sum()), int(test_mask.sum()),
                                  mape(y[test_mask], pred), r2(y[test_mask], pred),
                                  list(test_ids)))
    return CvReport(frame_type, kind, use_chroma, results)


def model_comparison(corpus, folds: int = 5, seed: int = 0,
                     forest_params: ForestParams | None = None, n_jobs: int = 1,
                     frame_types=FRAME_TYPES, kinds=MODEL_KINDS,
                     chroma_options=(False, True)) -> list[CvReport]:
    """Every (model, chroma, frame type) combination, no-chroma rows first."""
    reports = []
    for use_chroma in chroma_options:
        for kind in kinds:
            for ftype in frame_types:
                reports.append(cross_validate(corpus, ftype, kind, use_chroma, folds,
                                              seed, forest_params, n_jobs))
    return reports


def format_table(reports) -> str:
    """Model-comparison table: one row per model variant, MAPE/R^2 per frame type."""
    rows: dict[str, dict[str, CvReport]] = {}
    for r in reports:
        rows.setdefault(r.label, {})[r.frame_type] = r
    header = f"{'Model':<32}" + "".join(f"| {t}: MAPE[%]   R2  " for t in FRAME_TYPES)
    lines = [header, "-" * len(header)]
    for label, by_type in rows.items():
        cells = []
        for t in FRAME_TYPES:
            r = by_type.get(t)
            cells.append(f"| {r.mape:9.2f} {r.r2:6.3f} " if r else "|" + " " * 18)
        lines.append(f"{label:<32}" + "".join(cells))
    return "\n".join(lines)
