"""A ledger peer: chain, mempool and contract state as a sequential state machine.

Peers only talk through the ``broadcast`` callback; the network decides when
messages arrive.
"""
import logging
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Dict, List, Optional, Set, Tuple

from src.config import Config
from src.errors import InvalidBlock, NotLeader
from src.ledger.contracts import ContractState
from src.ledger.types import CONTRACTS, GENESIS_PREV_HASH, Block, Receipt, Transaction
from src.utils.clock import SimulatedClock

logger = logging.getLogger(__name__)


class RejectReason(str, Enum):
    BAD_HASH = "BadHash"
    DUPLICATE = "Duplicate"
    DUPLICATE_NONCE = "DuplicateNonce"
    UNKNOWN_CONTRACT = "UnknownContract"


@dataclass(frozen=True)
class SubmitResult:
    accepted: bool
    reason: Optional[RejectReason] = None
    tx_id: str = ""


@dataclass(frozen=True)
class Message:
    kind: str  # "tx" or "block"
    sender: str
    body: object


class Peer:
    def __init__(
        self,
        peer_id: str,
        peer_ids: List[str],
        clock=None,
        max_block_txs: int = Config.MAX_BLOCK_TXS,
        heartbeat: bool = False,
        broadcast: Optional[Callable[[Message], None]] = None,
    ):
        if peer_id not in peer_ids:
            raise ValueError(f"{peer_id} is not in the peer list")
        self.peer_id = peer_id
        self.peer_ids = list(peer_ids)
        self.clock = clock or SimulatedClock()
        self.max_block_txs = max_block_txs
        self.heartbeat = heartbeat
        self.broadcast = broadcast
        self.chain: List[Block] = []
        self.mempool: List[Transaction] = []
        self.state = ContractState()
        self._chain_tx_ids: Set[str] = set()
        self._chain_nonces: Set[Tuple[str, int]] = set()
        self._mempool_ids: Set[str] = set()
        self._pending_blocks: Dict[int, Block] = {}

    # scheduling

    @property
    def height(self) -> int:
        """Height of the next block."""
        return len(self.chain)

    @property
    def head(self) -> Optional[Block]:
        return self.chain[-1] if self.chain else None

    def leader_for(self, height: int) -> str:
        return self.peer_ids[height % len(self.peer_ids)]

    def is_leader(self) -> bool:
        return self.leader_for(self.height) == self.peer_id

    def next_nonce(self, submitter: str) -> int:
        used = [n for s, n in self._chain_nonces if s == submitter]
        used += [tx.nonce for tx in self.mempool if tx.submitter == submitter]
        return max(used) + 1 if used else 0

    # transactions

    def _check_tx(self, tx: Transaction) -> Optional[RejectReason]:
        if tx.contract not in CONTRACTS:
            return RejectReason.UNKNOWN_CONTRACT
        if tx.expected_id() != tx.tx_id:
            return RejectReason.BAD_HASH
        if tx.tx_id in self._chain_tx_ids or tx.tx_id in self._mempool_ids:
            return RejectReason.DUPLICATE
        key = (tx.submitter, tx.nonce)
        if key in self._chain_nonces or any((m.submitter, m.nonce) == key for m in self.mempool):
            return RejectReason.DUPLICATE_NONCE
        return None

    def submit_tx(self, tx: Transaction, gossip: bool = True) -> SubmitResult:
        """
        Admit a transaction into the mempool and gossip it.

        Args:
            tx (Transaction): Transaction to admit
            gossip (bool): Broadcast to the other peers when accepted

        Returns:
            SubmitResult: Accepted, or rejected with a reason
        """
        reason = self._check_tx(tx)
        if reason is not None:
            logger.debug(f"{self.peer_id} rejected tx {tx.tx_id[:12]}: {reason.value}")
            return SubmitResult(False, reason, tx.tx_id)
        self.mempool.append(tx)
        self._mempool_ids.add(tx.tx_id)
        if gossip and self.broadcast is not None:
            self.broadcast(Message("tx", self.peer_id, tx))
        return SubmitResult(True, None, tx.tx_id)

    # blocks

    def propose_block(self) -> Optional[Block]:
        """Drain the mempool into a block; None when there is nothing to propose."""
        if not self.is_leader():
            raise NotLeader(f"{self.peer_id} is not the leader for height {self.height}")
        if not self.mempool and not self.heartbeat:
            return None
        txs = self.mempool[: self.max_block_txs]
        head = self.head
        prev_hash = head.block_hash if head else GENESIS_PREV_HASH
        timestamp = max(self.clock.now_ms(), head.timestamp if head else 0)
        block = Block.create(self.height, prev_hash, timestamp, self.peer_id, txs)
        self.apply_block(block)
        if self.broadcast is not None:
            self.broadcast(Message("block", self.peer_id, block))
        logger.debug(f"{self.peer_id} proposed block {block.height} with {len(txs)} txs")
        return block

    def validate_block(self, block: Block) -> List[str]:
        """Itemized reasons why ``block`` cannot extend this chain; empty when valid."""
        reasons = []
        if block.height != self.height:
            reasons.append(f"height discontinuity: expected {self.height}, got {block.height}")
        head = self.head
        expected_prev = head.block_hash if head else GENESIS_PREV_HASH
        if block.prev_hash != expected_prev:
            reasons.append("prev_hash does not link to the current head")
        if head is not None and block.timestamp < head.timestamp:
            reasons.append("timestamp precedes the parent block")
        if block.expected_hash() != block.block_hash:
            reasons.append("block hash mismatch")
        leader = self.leader_for(block.height)
        if block.proposer != leader:
            reasons.append(f"proposer {block.proposer} is not the scheduled leader {leader}")
        if len(block.txs) > self.max_block_txs:
            reasons.append(f"block carries {len(block.txs)} txs, limit is {self.max_block_txs}")

        seen_ids: Set[str] = set()
        seen_nonces: Set[Tuple[str, int]] = set()
        for tx in block.txs:
            short = tx.tx_id[:12]
            if tx.contract not in CONTRACTS:
                reasons.append(f"tx {short}: unknown contract {tx.contract}")
            if tx.expected_id() != tx.tx_id:
                reasons.append(f"tx {short}: hash mismatch")
            if tx.tx_id in self._chain_tx_ids or tx.tx_id in seen_ids:
                reasons.append(f"tx {short}: duplicate transaction")
            key = (tx.submitter, tx.nonce)
            if key in self._chain_nonces or key in seen_nonces:
                reasons.append(f"tx {short}: duplicate nonce {tx.nonce} for {tx.submitter}")
            seen_ids.add(tx.tx_id)
            seen_nonces.add(key)
        return reasons

    def apply_block(self, block: Block) -> ContractState:
        """Validate, apply and append; raises InvalidBlock if validation fails."""
        reasons = self.validate_block(block)
        if reasons:
            raise InvalidBlock(reasons)
        self.state.apply_block(block)
        self.chain.append(block)
        for tx in block.txs:
            self._chain_tx_ids.add(tx.tx_id)
            self._chain_nonces.add((tx.submitter, tx.nonce))
        included = {tx.tx_id for tx in block.txs}
        if included:
            self.mempool = [tx for tx in self.mempool if tx.tx_id not in included]
            self._mempool_ids -= included
        # mempool entries whose nonce was consumed by another tx can never be included
        stale = [tx for tx in self.mempool if (tx.submitter, tx.nonce) in self._chain_nonces]
        for tx in stale:
            self.mempool.remove(tx)
            self._mempool_ids.discard(tx.tx_id)
        return self.state

    def receive(self, message: Message) -> None:
        """Handle a gossiped transaction or block."""
        if message.kind == "tx":
            self.submit_tx(message.body, gossip=False)
            return
        block: Block = message.body
        if block.height < self.height:
            return
        self._pending_blocks[block.height] = block
        while self.height in self._pending_blocks:
            nxt = self._pending_blocks.pop(self.height)
            try:
                self.apply_block(nxt)
            except InvalidBlock as e:
                logger.warning(f"{self.peer_id} dropped block {nxt.height} from {message.sender}: {str(e)}")
                break

    def receipt(self, tx_id: str) -> Optional[Receipt]:
        return self.state.receipts.get(tx_id)
