"""Discrete-event simulation of a peer network and the block-time benchmark."""
import heapq
import itertools
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np
import pandas as pd
from tqdm import tqdm

from src.config import Config
from src.ledger.peer import Message, Peer, SubmitResult
from src.ledger.types import Block, Contract, Transaction
from src.utils.clock import SimulatedClock

logger = logging.getLogger(__name__)

REPORT_COLUMNS = ["height", "proposer", "tx_count", "accept_latency_ms"]


@dataclass
class BlockStats:
    height: int
    proposer: str
    tx_count: int
    started_ms: int
    accepted_by: set = field(default_factory=set)
    accepted_ms: Optional[int] = None


class LedgerNetwork:
    """
    Peers connected by reliable channels with a constant one-way latency.

    Leaders propose on ticks every ``block_interval_ms``; a message sent at
    ``t`` is delivered at ``t + latency_ms``. Events at equal times are
    processed in send order.
    """

    def __init__(
        self,
        peer_count: int,
        latency_ms: int = Config.NETWORK_LATENCY_MS,
        block_interval_ms: int = Config.BLOCK_INTERVAL_MS,
        max_block_txs: int = Config.MAX_BLOCK_TXS,
        heartbeat: bool = False,
        clock: Optional[SimulatedClock] = None,
        peer_prefix: str = "peer",
    ):
        if peer_count < 1:
            raise ValueError("peer_count must be >= 1")
        self.clock = clock or SimulatedClock()
        self.latency_ms = latency_ms
        self.block_interval_ms = block_interval_ms
        self.peer_ids = [f"{peer_prefix}-{i}" for i in range(peer_count)]
        self.peers: Dict[str, Peer] = {}
        for peer_id in self.peer_ids:
            self.peers[peer_id] = Peer(
                peer_id,
                self.peer_ids,
                clock=self.clock,
                max_block_txs=max_block_txs,
                heartbeat=heartbeat,
                broadcast=self._make_broadcast(peer_id),
            )
        self._events: List[Tuple[int, int, str, Message]] = []
        self._seq = itertools.count()
        self._next_tick = self._tick_after(self.clock.now_ms())
        self._first_seen: Dict[str, int] = {}
        self.block_stats: Dict[str, BlockStats] = {}

    def _tick_after(self, t: int) -> int:
        return (t // self.block_interval_ms + 1) * self.block_interval_ms

    def _make_broadcast(self, sender: str) -> Callable[[Message], None]:
        def broadcast(message: Message) -> None:
            deliver_at = self.clock.now_ms() + self.latency_ms
            if message.kind == "block":
                self._record_proposal(message.body)
            for peer_id in self.peer_ids:
                if peer_id != sender:
                    heapq.heappush(self._events, (deliver_at, next(self._seq), peer_id, message))
        return broadcast

    def _record_proposal(self, block: Block) -> None:
        now = self.clock.now_ms()
        started = min((self._first_seen.get(tx.tx_id, now) for tx in block.txs), default=now)
        stats = BlockStats(block.height, block.proposer, len(block.txs), started)
        self.block_stats[block.block_hash] = stats
        self._mark_accepted(block, block.proposer)

    def _mark_accepted(self, block: Block, peer_id: str) -> None:
        stats = self.block_stats.get(block.block_hash)
        if stats is None:
            return
        stats.accepted_by.add(peer_id)
        if len(stats.accepted_by) == len(self.peer_ids) and stats.accepted_ms is None:
            stats.accepted_ms = self.clock.now_ms()

    # driving

    @property
    def primary(self) -> Peer:
        return self.peers[self.peer_ids[0]]

    def set_heartbeat(self, enabled: bool) -> None:
        """Empty blocks on every tick make the passage of time visible on chain."""
        for peer in self.peers.values():
            peer.heartbeat = enabled

    def submit(self, tx: Transaction, peer_id: Optional[str] = None) -> SubmitResult:
        peer = self.peers[peer_id or self.peer_ids[0]]
        result = peer.submit_tx(tx)
        if result.accepted:
            self._first_seen.setdefault(tx.tx_id, self.clock.now_ms())
        return result

    def _deliver(self, peer_id: str, message: Message) -> None:
        peer = self.peers[peer_id]
        before = peer.height
        peer.receive(message)
        for block in peer.chain[before:]:
            self._mark_accepted(block, peer_id)

    def _tick(self) -> None:
        for peer_id in self.peer_ids:
            peer = self.peers[peer_id]
            if peer.is_leader():
                peer.propose_block()

    def _has_work(self) -> bool:
        return bool(self._events) or any(peer.mempool for peer in self.peers.values())

    def step(self) -> None:
        """Process the next message delivery or leader tick, whichever comes first."""
        next_event = self._events[0][0] if self._events else None
        if next_event is not None and next_event <= self._next_tick:
            deliver_at, _, peer_id, message = heapq.heappop(self._events)
            self.clock.advance_to(deliver_at)
            self._deliver(peer_id, message)
            return
        self.clock.advance_to(self._next_tick)
        self._next_tick += self.block_interval_ms
        self._tick()

    def run_until(self, end_ms: int) -> None:
        """Advance simulated time to ``end_ms``, processing everything due before it."""
        while True:
            next_event = self._events[0][0] if self._events else None
            upcoming = self._next_tick if next_event is None else min(next_event, self._next_tick)
            if upcoming > end_ms:
                break
            self.step()
        self.clock.advance_to(end_ms)
        if self._next_tick <= end_ms:
            self._next_tick = self._tick_after(end_ms)

    def run_until_idle(self, max_ms: int = 3_600_000) -> None:
        """Run until no message is in flight and every mempool is empty."""
        limit = self.clock.now_ms() + max_ms
        while self._has_work():
            if self.clock.now_ms() > limit:
                logger.warning("Ledger network did not settle before the time limit")
                break
            self.step()
        self._next_tick = max(self._next_tick, self._tick_after(self.clock.now_ms()))

    def run_until_true(self, predicate: Callable[[], bool], max_ms: int = 3_600_000) -> bool:
        limit = self.clock.now_ms() + max_ms
        while not predicate():
            if self.clock.now_ms() > limit:
                return False
            self.step()
        return True

    def chains_identical(self) -> bool:
        hashes = {tuple(b.block_hash for b in peer.chain) for peer in self.peers.values()}
        states = {peer.state.state_hash() for peer in self.peers.values()}
        return len(hashes) == 1 and len(states) == 1

    def block_report(self) -> pd.DataFrame:
        rows = [
            {
                "height": s.height,
                "proposer": s.proposer,
                "tx_count": s.tx_count,
                "accept_latency_ms": s.accepted_ms - s.started_ms,
            }
            for s in self.block_stats.values()
            if s.accepted_ms is not None
        ]
        return pd.DataFrame(rows, columns=REPORT_COLUMNS).sort_values("height").reset_index(drop=True)


@dataclass
class BlockTimeReport:
    peer_count: int
    latency_ms: int
    blocks: pd.DataFrame
    chains_identical: bool
    state_hash: str
    tx_on_chain: int

    @property
    def mean_ms(self) -> float:
        return float(self.blocks["accept_latency_ms"].mean()) if len(self.blocks) else float("nan")

    @property
    def p95_ms(self) -> float:
        if not len(self.blocks):
            return float("nan")
        return float(np.percentile(self.blocks["accept_latency_ms"].to_numpy(dtype=float), 95))

    def to_csv(self, path: Path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        self.blocks.to_csv(path, index=False, columns=REPORT_COLUMNS)
        return path


def bench_transaction(i: int) -> Transaction:
    identity = f"bench-{i:06d}"
    return Transaction.create(Contract.IDENTITY, "register", {"id": identity, "role": "bench"}, identity, 0)


def run_network(
    peer_count: int,
    tx_rate: float = 20.0,
    duration_s: float = 5.0,
    latency_ms: int = Config.NETWORK_LATENCY_MS,
    block_interval_ms: int = Config.BLOCK_INTERVAL_MS,
    max_block_txs: int = Config.MAX_BLOCK_TXS,
) -> BlockTimeReport:
    """
    Run the block-time benchmark on a simulated network.

    Transactions are submitted at a fixed rate, round-robin across peers. The
    latency of a block runs from the first submission of any of its
    transactions to the moment the last peer applied it.

    Args:
        peer_count (int): Number of peers (>= 1)
        tx_rate (float): Transactions per simulated second
        duration_s (float): Submission period in simulated seconds
        latency_ms (int): One-way network latency

    Returns:
        BlockTimeReport: Per-block latencies plus chain agreement
    """
    network = LedgerNetwork(
        peer_count,
        latency_ms=latency_ms,
        block_interval_ms=block_interval_ms,
        max_block_txs=max_block_txs,
    )
    tx_count = int(round(tx_rate * duration_s))
    gap_ms = 1000.0 / tx_rate if tx_rate > 0 else 0.0
    for i in range(tx_count):
        network.run_until(int(round(i * gap_ms)))
        network.submit(bench_transaction(i), network.peer_ids[i % peer_count])
    network.run_until_idle()

    reference = network.primary
    report = BlockTimeReport(
        peer_count=peer_count,
        latency_ms=latency_ms,
        blocks=network.block_report(),
        chains_identical=network.chains_identical(),
        state_hash=reference.state.state_hash(),
        tx_on_chain=sum(len(b.txs) for b in reference.chain),
    )
    logger.info(
        f"Ledger bench peers={peer_count} latency={latency_ms}ms blocks={len(report.blocks)} "
        f"mean={report.mean_ms:.1f}ms p95={report.p95_ms:.1f}ms"
    )
    return report


def sweep_peers(max_peers: int, show_progress: bool = True, **kwargs) -> List[BlockTimeReport]:
    """Benchmark every peer count from 1 to ``max_peers``."""
    reports = []
    for count in tqdm(range(1, max_peers + 1), desc="Ledger bench", disable=not show_progress):
        reports.append(run_network(count, **kwargs))
    return reports


SUMMARY_COLUMNS = ["peer_count", "latency_ms", "blocks", "tx_on_chain", "mean_ms", "p95_ms", "chains_identical", "state_hash"]


def bench_summary(reports: List[BlockTimeReport]) -> pd.DataFrame:
    """One row per benchmarked peer count."""
    rows = [
        {
            "peer_count": r.peer_count,
            "latency_ms": r.latency_ms,
            "blocks": len(r.blocks),
            "tx_on_chain": r.tx_on_chain,
            "mean_ms": r.mean_ms,
            "p95_ms": r.p95_ms,
            "chains_identical": r.chains_identical,
            "state_hash": r.state_hash,
        }
        for r in reports
    ]
    return pd.DataFrame(rows, columns=SUMMARY_COLUMNS)
