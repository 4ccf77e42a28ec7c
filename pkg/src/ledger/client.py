"""Identity-bound client that builds and submits contract transactions."""
import logging
from typing import Any, Dict, Optional

from src.errors import PlatformRuntimeError
from src.ledger.network import LedgerNetwork
from src.ledger.peer import SubmitResult
from src.ledger.types import Contract, Receipt, Transaction

logger = logging.getLogger(__name__)


class LedgerClient:
    """Submits transactions for one identity through one peer, tracking nonces."""

    def __init__(self, network: LedgerNetwork, identity: str, peer_id: Optional[str] = None):
        self.network = network
        self.identity = identity
        self.peer_id = peer_id or network.peer_ids[0]
        self._nonce: Optional[int] = None

    @property
    def peer(self):
        return self.network.peers[self.peer_id]

    def _next_nonce(self) -> int:
        if self._nonce is None:
            self._nonce = self.peer.next_nonce(self.identity)
        nonce = self._nonce
        self._nonce += 1
        return nonce

    def submit(self, contract: Contract, action: str, payload: Dict[str, Any]) -> Transaction:
        tx = Transaction.create(contract, action, payload, self.identity, self._next_nonce())
        result: SubmitResult = self.network.submit(tx, self.peer_id)
        if not result.accepted:
            raise PlatformRuntimeError(f"{contract.value}.{action} rejected by {self.peer_id}: {result.reason.value}")
        logger.debug(f"{self.identity} submitted {contract.value}.{action} as {tx.tx_id[:12]}")
        return tx

    def commit(self, contract: Contract, action: str, payload: Dict[str, Any]) -> Receipt:
        """Submit and run the network until every peer has applied the transaction."""
        tx = self.submit(contract, action, payload)
        self.wait_for(tx)
        return self.peer.receipt(tx.tx_id)

    def wait_for(self, tx: Transaction) -> None:
        def applied_everywhere() -> bool:
            return all(peer.receipt(tx.tx_id) is not None for peer in self.network.peers.values())

        if not self.network.run_until_true(applied_everywhere):
            raise PlatformRuntimeError(f"transaction {tx.tx_id[:12]} was not applied in time")

    # typed helpers

    def register_identity(self, identity: Optional[str] = None, role: str = "member") -> Receipt:
        return self.commit(Contract.IDENTITY, "register", {"id": identity or self.identity, "role": role})

    def register_service(self, name: str, metrics_endpoint: str, **extra: str) -> Receipt:
        payload = {"name": name, "metrics_endpoint": metrics_endpoint}
        payload.update(extra)
        return self.commit(Contract.SERVICE_REGISTRY, "register", payload)
