"""Model updates and sample-weighted federated averaging."""
from dataclasses import dataclass
from typing import Any, Dict, List, Sequence

import numpy as np

from src.errors import DimensionMismatch, PlatformValidationError
from src.utils.canonical import format_float17, hash_fields


def encode_params(params: np.ndarray) -> List[str]:
    return [format_float17(x) for x in np.asarray(params, dtype=float)]


def decode_params(values: Sequence[str]) -> np.ndarray:
    return np.array([float(v) for v in values], dtype=float)


def params_digest(params: np.ndarray) -> str:
    return hash_fields(encode_params(params))


@dataclass(frozen=True)
class ModelUpdate:
    round: int
    peer: str
    params: np.ndarray
    sample_count: int
    train_loss: float

    def to_payload(self) -> Dict[str, Any]:
        return {
            "round": self.round,
            "peer": self.peer,
            "params": encode_params(self.params),
            "sample_count": self.sample_count,
            "loss": format_float17(self.train_loss),
        }

    @classmethod
    def from_payload(cls, payload: Dict[str, Any]) -> "ModelUpdate":
        return cls(
            round=int(payload["round"]),
            peer=payload["peer"],
            params=decode_params(payload["params"]),
            sample_count=int(payload["sample_count"]),
            train_loss=float(payload["loss"]),
        )


def aggregate(updates: Sequence[ModelUpdate]) -> np.ndarray:
    """
    Sample-count weighted mean of the update parameters.

    Updates are folded in peer-id order as ``p0 + sum(w_i * (p_i - p0))``,
    anchored on the first peer, so the result does not depend on the order of
    ``updates`` and identical updates reproduce their parameters bit for bit.

    Args:
        updates (Sequence[ModelUpdate]): Updates of one round

    Returns:
        np.ndarray: Aggregated parameters
    """
    if not updates:
        raise PlatformValidationError("aggregate needs at least one update")
    ordered = sorted(updates, key=lambda u: u.peer)
    peers = [u.peer for u in ordered]
    if len(set(peers)) != len(peers):
        raise PlatformValidationError(f"duplicate peers in updates: {peers}")
    rounds = {u.round for u in ordered}
    if len(rounds) != 1:
        raise PlatformValidationError(f"updates span several rounds: {sorted(rounds)}")
    dimensions = {len(u.params) for u in ordered}
    if len(dimensions) != 1:
        raise DimensionMismatch(f"updates have different dimensions: {sorted(dimensions)}")

    total = float(sum(u.sample_count for u in ordered))
    anchor = np.asarray(ordered[0].params, dtype=float)
    result = anchor.copy()
    for update in ordered[1:]:
        weight = update.sample_count / total
        result = result + weight * (np.asarray(update.params, dtype=float) - anchor)
    return result
