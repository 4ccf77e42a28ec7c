"""Coordinator-less federated rounds on top of the ledger.

Every decision (which updates count, whether a round is closed, what the
aggregate is) is computed by each peer from its own copy of the chain.
Peers attest the aggregate they computed with a ``seal_round`` transaction;
the contract rejects attestations that disagree.
"""
import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Set

import numpy as np
import pandas as pd
from tqdm import tqdm

from src.errors import RoundNotOpen, RoundStalled
from src.fedlearn.aggregation import ModelUpdate, aggregate, decode_params, encode_params, params_digest
from src.fedlearn.features import LocalDataset
from src.fedlearn.model import local_train
from src.ledger.client import LedgerClient
from src.ledger.contracts import ContractState
from src.ledger.network import LedgerNetwork
from src.ledger.peer import Peer
from src.ledger.types import Contract

logger = logging.getLogger(__name__)

HISTORY_COLUMNS = ["round", "peer", "epoch", "loss", "accuracy"]


@dataclass
class RoundState:
    round: int
    expected_peers: Set[str]
    received: Set[str]
    deadline: int
    sealed: bool
    included: List[str] = field(default_factory=list)
    aggregate: Optional[np.ndarray] = None
    digest: Optional[str] = None
    height: int = 0

    def same_as(self, other: "RoundState") -> bool:
        if self.aggregate is None or other.aggregate is None:
            return self.aggregate is None and other.aggregate is None and self.included == other.included
        return self.included == other.included and np.array_equal(self.aggregate, other.aggregate)


@dataclass
class RoundConfig:
    round: int
    epochs: int = 100
    lr: float = 1.0
    deadline_ms: int = 10_000
    seed: int = 0
    batch_size: Optional[int] = None
    silent_peers: Set[str] = field(default_factory=set)


@dataclass
class FLPeer:
    """A federated participant: ledger identity, local data and a client."""
    peer_id: str
    dataset: LocalDataset
    client: LedgerClient

    @property
    def ledger_peer(self) -> Peer:
        return self.client.peer


def _round_record(peer: Peer, number: int) -> Dict:
    record = peer.state.rounds.get(str(number))
    if record is None:
        raise RoundNotOpen(f"round {number} is not open on {peer.peer_id}")
    return record


def round_state(peer: Peer, number: int) -> RoundState:
    """The round as seen from ``peer``'s chain; sealed once closed with at least one update."""
    record = _round_record(peer, number)
    head = peer.head
    head_ts = head.timestamp if head else 0
    closed = ContractState.round_closed(record, head_ts)
    included = sorted(record["updates"])
    state = RoundState(
        round=number,
        expected_peers=set(record["expected_peers"]),
        received=set(record["updates"]),
        deadline=record["deadline_ms"],
        sealed=closed and bool(included),
        height=peer.height,
    )
    if state.sealed:
        updates = [
            ModelUpdate(
                round=number,
                peer=name,
                params=decode_params(record["updates"][name]["params"]),
                sample_count=record["updates"][name]["sample_count"],
                train_loss=float(record["updates"][name]["loss"]),
            )
            for name in included
        ]
        state.included = included
        state.aggregate = aggregate(updates)
        state.digest = params_digest(state.aggregate)
    return state


def starting_params(peer: Peer, number: int) -> np.ndarray:
    """Round 0 starts from the published init; later rounds from the previous aggregate."""
    if number == 0:
        return decode_params(_round_record(peer, 0)["init_params"])
    previous = round_state(peer, number - 1)
    if previous.aggregate is None:
        raise RoundNotOpen(f"round {number - 1} is not sealed on {peer.peer_id}")
    return previous.aggregate


def open_round(
    client: LedgerClient,
    number: int,
    expected_peers: Sequence[str],
    deadline_ms: int,
    init_params: Optional[np.ndarray] = None,
    normalization: Optional[Sequence] = None,
    feature_names: Optional[Sequence[str]] = None,
    hidden_units: Optional[int] = None,
) -> None:
    payload = {
        "round": number,
        "expected_peers": sorted(expected_peers),
        "deadline_ms": int(deadline_ms),
    }
    if init_params is not None:
        payload["init_params"] = encode_params(init_params)
    if normalization is not None:
        payload["normalization"] = [[repr(float(lo)), repr(float(hi))] for lo, hi in normalization]
    if feature_names is not None:
        payload["feature_names"] = list(feature_names)
    if hidden_units is not None:
        payload["hidden_units"] = hidden_units
    receipt = client.commit(Contract.FEDERATED_LEARNING, "open_round", payload)
    if not receipt.ok:
        raise RoundNotOpen(f"open_round {number} rejected: {receipt.error}")
    logger.info(f"Opened FL round {number} for {len(expected_peers)} peers, deadline {deadline_ms}")


def run_round(network: LedgerNetwork, peers: Sequence[FLPeer], cfg: RoundConfig, history: Optional[List[dict]] = None) -> Dict[str, RoundState]:
    """
    Train, publish and seal one round.

    Args:
        network (LedgerNetwork): Network carrying the peers' ledgers
        peers (Sequence[FLPeer]): Participants; ``cfg.silent_peers`` never publish
        cfg (RoundConfig): Round number, training settings and deadline
        history (List[dict], optional): Per-epoch loss/accuracy rows are appended here

    Returns:
        Dict[str, RoundState]: The sealed round as computed by every peer
    """
    for fl_peer in peers:
        _round_record(fl_peer.ledger_peer, cfg.round)

    published = []
    for fl_peer in peers:
        if fl_peer.peer_id in cfg.silent_peers:
            logger.info(f"Peer {fl_peer.peer_id} stays silent in round {cfg.round}")
            continue
        start = starting_params(fl_peer.ledger_peer, cfg.round)
        result = local_train(start, fl_peer.dataset, cfg.epochs, cfg.lr, seed=cfg.seed, batch_size=cfg.batch_size)
        if history is not None:
            for epoch, (loss, acc) in enumerate(zip(result.losses, result.accuracies), start=1):
                history.append({"round": cfg.round, "peer": fl_peer.peer_id, "epoch": epoch, "loss": loss, "accuracy": acc})
        update = ModelUpdate(cfg.round, fl_peer.peer_id, result.params, len(fl_peer.dataset), result.loss)
        published.append(fl_peer.client.submit(Contract.FEDERATED_LEARNING, "publish_update", update.to_payload()))

    ledger_peers = [p.ledger_peer for p in peers]
    for tx in published:
        peers[0].client.wait_for(tx)

    def closed_everywhere() -> bool:
        return all(
            ContractState.round_closed(_round_record(p, cfg.round), p.head.timestamp if p.head else 0)
            for p in ledger_peers
        )

    if not closed_everywhere():
        deadline = _round_record(ledger_peers[0], cfg.round)["deadline_ms"]
        network.set_heartbeat(True)
        try:
            network.run_until(deadline)
            network.run_until_true(closed_everywhere)
        finally:
            network.set_heartbeat(False)

    states = {p.peer_id: round_state(p.ledger_peer, cfg.round) for p in peers}
    reference = states[peers[0].peer_id]
    if not reference.sealed:
        raise RoundStalled(f"round {cfg.round} received no updates before its deadline")

    attestations = []
    for fl_peer in peers:
        state = states[fl_peer.peer_id]
        payload = {"round": cfg.round, "included": state.included, "aggregate_digest": state.digest}
        attestations.append(fl_peer.client.submit(Contract.FEDERATED_LEARNING, "seal_round", payload))
    for tx in attestations:
        peers[0].client.wait_for(tx)
        receipt = peers[0].ledger_peer.receipt(tx.tx_id)
        if not receipt.ok:
            logger.warning(f"Seal attestation {tx.tx_id[:12]} rejected: {receipt.error}")

    logger.info(f"Round {cfg.round} sealed over {reference.included} with digest {reference.digest[:12]}")
    return {p.peer_id: round_state(p.ledger_peer, cfg.round) for p in peers}


@dataclass
class FederatedResult:
    params: np.ndarray
    rounds: List[Dict[str, RoundState]]
    history: pd.DataFrame


def run_federated(
    network: LedgerNetwork,
    peers: Sequence[FLPeer],
    opener: LedgerClient,
    init: np.ndarray,
    rounds: int,
    epochs: int,
    lr: float,
    seed: int = 0,
    round_timeout_ms: int = 10_000,
    normalization: Optional[Sequence] = None,
    feature_names: Optional[Sequence[str]] = None,
    hidden_units: Optional[int] = None,
    show_progress: bool = False,
) -> FederatedResult:
    """Open and run ``rounds`` consecutive rounds; returns the final aggregate."""
    history: List[dict] = []
    sealed: List[Dict[str, RoundState]] = []
    expected = [p.peer_id for p in peers]
    for number in tqdm(range(rounds), desc="FL rounds", disable=not show_progress):
        deadline = network.clock.now_ms() + round_timeout_ms
        if number == 0:
            open_round(opener, 0, expected, deadline, init, normalization, feature_names, hidden_units)
        else:
            open_round(opener, number, expected, deadline)
        cfg = RoundConfig(number, epochs=epochs, lr=lr, deadline_ms=deadline, seed=seed + number)
        sealed.append(run_round(network, peers, cfg, history))
    final = sealed[-1][peers[0].peer_id].aggregate if sealed else np.asarray(init, dtype=float)
    return FederatedResult(final, sealed, pd.DataFrame(history, columns=HISTORY_COLUMNS))
