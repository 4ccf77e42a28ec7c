"""Ledger records: transactions and blocks.

Hashes are SHA-256 hex digests over the record fields joined by 0x1F::

    tx_id      = H(contract, action, payload, submitter, nonce)
    block_hash = H(height, prev_hash, timestamp, proposer, tx_id_0 + tx_id_1 + ...)
"""
import json
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, Tuple

from src.utils.canonical import canonical_bytes, canonical_json, hash_fields

GENESIS_PREV_HASH = "00" * 32


class Contract(str, Enum):
    IDENTITY = "identity"
    SERVICE_REGISTRY = "service_registry"
    FEDERATED_LEARNING = "federated_learning"
    LLM = "llm"
    NFT = "nft"


CONTRACTS = frozenset(c.value for c in Contract)


def compute_tx_id(contract: str, action: str, payload: bytes, submitter: str, nonce: int) -> str:
    return hash_fields([contract, action, payload, submitter, nonce])


@dataclass(frozen=True)
class Transaction:
    tx_id: str
    contract: str
    action: str
    payload: bytes
    submitter: str
    nonce: int

    @classmethod
    def create(cls, contract: str, action: str, payload: Any, submitter: str, nonce: int) -> "Transaction":
        contract = Contract(contract).value
        body = canonical_bytes(payload)
        return cls(compute_tx_id(contract, action, body, submitter, nonce), contract, action, body, submitter, nonce)

    def expected_id(self) -> str:
        return compute_tx_id(self.contract, self.action, self.payload, self.submitter, self.nonce)

    def body(self) -> Dict[str, Any]:
        return json.loads(self.payload.decode("utf-8"))

    def to_dict(self) -> Dict[str, Any]:
        return {
            "tx_id": self.tx_id,
            "contract": self.contract,
            "action": self.action,
            "payload": self.payload.decode("utf-8"),
            "submitter": self.submitter,
            "nonce": self.nonce,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "Transaction":
        return cls(
            tx_id=data["tx_id"],
            contract=data["contract"],
            action=data["action"],
            payload=data["payload"].encode("utf-8"),
            submitter=data["submitter"],
            nonce=int(data["nonce"]),
        )


def compute_block_hash(height: int, prev_hash: str, timestamp: int, proposer: str, tx_ids: Tuple[str, ...]) -> str:
    return hash_fields([height, prev_hash, timestamp, proposer, "".join(tx_ids)])


@dataclass(frozen=True)
class Block:
    height: int
    prev_hash: str
    timestamp: int
    proposer: str
    txs: Tuple[Transaction, ...] = field(default_factory=tuple)
    block_hash: str = ""

    @classmethod
    def create(cls, height: int, prev_hash: str, timestamp: int, proposer: str, txs) -> "Block":
        txs = tuple(txs)
        digest = compute_block_hash(height, prev_hash, timestamp, proposer, tuple(tx.tx_id for tx in txs))
        return cls(height, prev_hash, timestamp, proposer, txs, digest)

    def expected_hash(self) -> str:
        return compute_block_hash(
            self.height, self.prev_hash, self.timestamp, self.proposer, tuple(tx.tx_id for tx in self.txs)
        )

    def to_dict(self) -> Dict[str, Any]:
        return {
            "height": self.height,
            "prev_hash": self.prev_hash,
            "timestamp": self.timestamp,
            "proposer": self.proposer,
            "txs": [tx.to_dict() for tx in self.txs],
            "block_hash": self.block_hash,
        }

    def to_line(self) -> str:
        return canonical_json(self.to_dict())

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "Block":
        return cls(
            height=int(data["height"]),
            prev_hash=data["prev_hash"],
            timestamp=int(data["timestamp"]),
            proposer=data["proposer"],
            txs=tuple(Transaction.from_dict(tx) for tx in data["txs"]),
            block_hash=data["block_hash"],
        )


@dataclass(frozen=True)
class Receipt:
    """Outcome of applying one transaction."""
    tx_id: str
    height: int
    ok: bool
    error: str = ""
