"""Chain dump files (one canonical block per line) and full-chain verification."""
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Sequence

from src.errors import InvalidBlock
from src.ledger.contracts import ContractState
from src.ledger.peer import Peer
from src.ledger.types import Block

logger = logging.getLogger(__name__)


@dataclass
class ChainVerification:
    ok: bool
    height: int
    failed_height: Optional[int] = None
    reasons: List[str] = field(default_factory=list)
    state: Optional[ContractState] = None


def dump_chain(blocks: Sequence[Block], path: Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        for block in blocks:
            f.write(block.to_line() + "\n")
    logger.info(f"Wrote {len(blocks)} blocks to {path}")
    return path


def load_chain(path: Path) -> List[Block]:
    blocks = []
    with open(path, "r", encoding="utf-8") as f:
        for number, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                blocks.append(Block.from_dict(json.loads(line)))
            except (ValueError, KeyError) as e:
                logger.error(f"Error reading block on line {number} of {path}: {str(e)}")
                raise
    return blocks


def proposer_schedule(blocks: Sequence[Block]) -> List[str]:
    """Recover the round-robin peer order from the proposers of the first blocks."""
    order: List[str] = []
    for block in blocks:
        if block.proposer in order:
            break
        order.append(block.proposer)
    return order


def verify_chain(blocks: Sequence[Block], peer_ids: Optional[List[str]] = None, max_block_txs: int = 10_000) -> ChainVerification:
    """
    Replay ``blocks`` on a fresh peer, validating every block on the way.

    Args:
        blocks (Sequence[Block]): Chain from genesis
        peer_ids (List[str], optional): Proposer schedule; recovered from the chain when omitted

    Returns:
        ChainVerification: First failing height and its reasons, if any
    """
    schedule = peer_ids or proposer_schedule(blocks) or ["verifier"]
    verifier = Peer(schedule[0], schedule, max_block_txs=max_block_txs)
    for block in blocks:
        try:
            verifier.apply_block(block)
        except InvalidBlock as e:
            return ChainVerification(False, verifier.height, block.height, e.reasons, verifier.state)
    return ChainVerification(True, verifier.height, state=verifier.state)
