"""SLI ranking by permutation importance."""
import logging
import zlib
from typing import List, Sequence, Tuple

import numpy as np

from src.config import Config
from src.fedlearn.features import LocalDataset
from src.fedlearn.model import FeedForwardModel

logger = logging.getLogger(__name__)


def metric_columns(feature_names: Sequence[str]) -> List[Tuple[str, List[int]]]:
    """Group ``<metric>:mean`` / ``<metric>:slope`` columns by metric, in first-seen order."""
    groups: dict = {}
    for index, name in enumerate(feature_names):
        metric = name.rsplit(":", 1)[0]
        groups.setdefault(metric, []).append(index)
    return list(groups.items())


def rank_sli(
    params: np.ndarray,
    dataset: LocalDataset,
    permutations: int = Config.PERMUTATIONS,
    seed: int = 0,
) -> List[Tuple[str, float]]:
    """
    Importance of each candidate metric: mean loss increase when its columns are shuffled.

    Each metric's shuffles come from a generator seeded by (seed, crc32(metric)),
    so results do not depend on the column order. Sorted by importance
    descending, then metric name.

    Args:
        params (np.ndarray): Trained parameters
        dataset (LocalDataset): Rows to score on
        permutations (int): Shuffles per metric

    Returns:
        List[Tuple[str, float]]: (metric, importance) pairs
    """
    model = FeedForwardModel.for_params(params, dataset.dimension)
    X, y = dataset.X, dataset.y
    baseline = model.loss(params, X, y)
    ranking = []
    for metric, columns in metric_columns(dataset.feature_names):
        rng = np.random.default_rng([seed, zlib.crc32(metric.encode("utf-8"))])
        increases = []
        for _ in range(permutations):
            order = rng.permutation(len(y))
            shuffled = X.copy()
            shuffled[:, columns] = X[order][:, columns]
            increases.append(model.loss(params, shuffled, y) - baseline)
        importance = float(np.mean(increases)) if increases else 0.0
        ranking.append((metric, importance))
    ranking.sort(key=lambda item: (-item[1], item[0]))
    logger.debug(f"SLI ranking: {ranking}")
    return ranking
