from ..errors import FeatureMismatch
from .forest import ForestModel, ForestParams, Tree, fit_forest, validate_tree
from .importance import ImportanceReport, importance
from .io import dumps_model, load_model, save_model
from .linear import LinearModel, fit_linear


def predict(model, X, columns=None):
    """Predicted bits; ``columns`` (if given) must match the model's order."""
    if columns is not None and tuple(columns) != tuple(model.feature_names):
        raise FeatureMismatch(
            f"column order {tuple(columns)} != model order {model.feature_names}"
        )
    return model.predict(X)


__all__ = [
    "ForestModel", "ForestParams", "ImportanceReport", "LinearModel", "Tree",
    "dumps_model", "fit_forest", "fit_linear", "importance", "load_model",
    "predict", "save_model", "validate_tree",
]
