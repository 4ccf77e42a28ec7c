"""Synthetic fault datasets with a known degradation signal."""
from typing import List, Optional, Sequence

import numpy as np

from src.fedlearn.features import LocalDataset


def fault_dataset(
    n_rows: int = 200,
    metrics: Sequence[str] = ("error_ratio", "cpu", "queue_depth"),
    signal: Optional[str] = None,
    seed: int = 0,
    margin: float = 0.2,
    peer_id: str = "",
) -> LocalDataset:
    """
    Rows whose label is the thresholded mean feature of one metric.

    The signal metric's mean lies in ``[0, 0.5 - margin]`` for healthy rows
    and ``[0.5 + margin, 1]`` for degraded ones; every other column is
    uniform noise in [0, 1]. Labels alternate so both classes are present.

    Args:
        n_rows (int): Number of rows
        metrics (Sequence[str]): Candidate metric names
        signal (str, optional): Metric carrying the signal; defaults to the first
        seed (int): Generator seed
        margin (float): Half-width of the empty band around 0.5

    Returns:
        LocalDataset: Two columns (mean, slope) per metric
    """
    signal = signal or metrics[0]
    rng = np.random.default_rng(seed)
    names: List[str] = []
    for metric in metrics:
        names += [f"{metric}:mean", f"{metric}:slope"]

    y = (np.arange(n_rows) % 2).astype(float)
    rng.shuffle(y)
    X = rng.uniform(0.0, 1.0, size=(n_rows, len(names)))
    column = names.index(f"{signal}:mean")
    low = rng.uniform(0.0, 0.5 - margin, size=n_rows)
    high = rng.uniform(0.5 + margin, 1.0, size=n_rows)
    X[:, column] = np.where(y == 1.0, high, low)
    return LocalDataset(X, y, names, peer_id=peer_id, rule_id="synthetic-threshold")
