import logging
from typing import Dict

import numpy as np
from sklearn.metrics import roc_auc_score

from src.fedlearn.features import LocalDataset
from src.fedlearn.model import FeedForwardModel

logger = logging.getLogger(__name__)


def evaluate_model(params: np.ndarray, dataset: LocalDataset) -> Dict[str, float]:
    """Loss, accuracy and ROC AUC of ``params`` on a dataset.

    AUC is NaN when the dataset holds a single class.
    """
    model = FeedForwardModel.for_params(params, dataset.dimension)
    scores = model.predict_proba(params, dataset.X)
    metrics = {
        "loss": model.loss(params, dataset.X, dataset.y),
        "accuracy": model.accuracy(params, dataset.X, dataset.y),
        "auc": float("nan"),
    }
    if len(np.unique(dataset.y)) == 2:
        metrics["auc"] = float(roc_auc_score(dataset.y, scores))
    logger.debug(f"Model evaluation on {len(dataset)} rows: {metrics}")
    return metrics
