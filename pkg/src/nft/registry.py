"""Minting, verification and audit of s-528 tokens on the ledger."""
import json
import logging
from dataclasses import dataclass
from enum import Enum
from typing import Dict, Iterator, List, Optional, Sequence, Tuple

from src.errors import DuplicateToken, PlatformRuntimeError, TokenVerificationError, UnknownIssuer
from src.ledger.client import LedgerClient
from src.ledger.contracts import ContractState, replay
from src.ledger.types import GENESIS_PREV_HASH, Block, Contract, Transaction
from src.nft.token import S528Token, TokenKind

logger = logging.getLogger(__name__)


class VerifyReason(str, Enum):
    NOT_FOUND = "NotFound"
    HASH_MISMATCH = "HashMismatch"
    CHAIN_BROKEN = "ChainBroken"


@dataclass
class Verification:
    valid: bool
    token: Optional[S528Token] = None
    block_height: Optional[int] = None
    reason: Optional[VerifyReason] = None
    detail: str = ""

    def raise_for_reason(self) -> None:
        if not self.valid:
            raise TokenVerificationError(self.reason.value, self.detail)


@dataclass(frozen=True)
class AuditRecord:
    token_id: str
    block_height: int
    tx_id: str
    current_owner: str
    kind: str
    name: str
    version: int


def _mint_txs(blocks: Sequence[Block]) -> Iterator[Tuple[Block, Transaction]]:
    for block in blocks:
        for tx in block.txs:
            if tx.contract == Contract.NFT.value and tx.action == "mint":
                yield block, tx


def next_version(state: ContractState, kind: TokenKind, service: str, name: str) -> int:
    key = "\x1f".join([kind.value, service, name])
    return state.token_versions.get(key, 0) + 1


def mint(token: S528Token, client: LedgerClient) -> str:
    """
    Submit an nft mint through ``client`` and wait for every peer to apply it.

    Args:
        token (S528Token): Encoded token whose provenance issuer is the client identity
        client (LedgerClient): Issuer-bound client

    Returns:
        str: The mint transaction id

    Raises:
        UnknownIssuer: Issuer is not an active identity
        DuplicateToken: token_id is already on chain
    """
    state = client.peer.state
    issuer = token.provenance.issuer
    if issuer != client.identity or not state.is_active(issuer):
        raise UnknownIssuer(f"issuer {issuer} is not a registered identity")
    if token.token_id in state.tokens:
        raise DuplicateToken(f"token {token.token_id} is already minted")

    tx = client.submit(Contract.NFT, "mint", token.to_dict())
    client.wait_for(tx)
    receipt = client.peer.receipt(tx.tx_id)
    if not receipt.ok:
        if receipt.error.startswith("duplicate token"):
            raise DuplicateToken(receipt.error)
        if "not a registered identity" in receipt.error:
            raise UnknownIssuer(receipt.error)
        raise PlatformRuntimeError(f"mint of {token.token_id[:12]} rejected: {receipt.error}")
    logger.info(f"Minted {token.kind.value} token {token.token_id[:12]} v{token.version} for {token.service} at height {receipt.height}")
    return tx.tx_id


def transfer(token_id: str, recipient: str, client: LedgerClient) -> str:
    tx = client.submit(Contract.NFT, "transfer", {"token_id": token_id, "to": recipient})
    client.wait_for(tx)
    receipt = client.peer.receipt(tx.tx_id)
    if not receipt.ok:
        raise PlatformRuntimeError(f"transfer of {token_id[:12]} rejected: {receipt.error}")
    return tx.tx_id


def _check_linkage(blocks: Sequence[Block]) -> Optional[str]:
    prev_hash = GENESIS_PREV_HASH
    for expected_height, block in enumerate(blocks):
        if block.height != expected_height:
            return f"block at position {expected_height} has height {block.height}"
        if block.prev_hash != prev_hash:
            return f"block {block.height} does not link to its predecessor"
        if block.block_hash != block.expected_hash():
            return f"block {block.height} hash does not match its contents"
        prev_hash = block.block_hash
    return None


def verify(token_id: str, blocks: Sequence[Block]) -> Verification:
    """
    Locate the mint of ``token_id``, recompute its hashes and check the chain links up to head.

    Checks run in the order NotFound, HashMismatch, ChainBroken.
    """
    located: Optional[Tuple[Block, Transaction, Optional[dict]]] = None
    for block, tx in _mint_txs(blocks):
        try:
            body = json.loads(tx.payload.decode("utf-8"))
        except ValueError:
            if token_id.encode("utf-8") in tx.payload:
                located = (block, tx, None)
                break
            continue
        if isinstance(body, dict) and body.get("token_id") == token_id:
            located = (block, tx, body)
            break

    if located is None:
        return Verification(False, reason=VerifyReason.NOT_FOUND, detail=f"no mint of {token_id} on chain")

    block, tx, body = located
    if body is None:
        return Verification(False, block_height=block.height, reason=VerifyReason.HASH_MISMATCH,
                            detail=f"mint transaction {tx.tx_id[:12]} payload is corrupt")
    try:
        token = S528Token.from_dict(body)
    except (KeyError, ValueError, TypeError) as e:
        return Verification(False, block_height=block.height, reason=VerifyReason.HASH_MISMATCH,
                            detail=f"mint payload is not an s-528 token: {e}")
    if tx.expected_id() != tx.tx_id:
        return Verification(False, token, block.height, VerifyReason.HASH_MISMATCH,
                            f"transaction {tx.tx_id[:12]} does not match its contents")
    if token.expected_id() != token.token_id:
        return Verification(False, token, block.height, VerifyReason.HASH_MISMATCH,
                            "token_id does not match the stored fields")

    broken = _check_linkage(blocks)
    if broken:
        return Verification(False, token, block.height, VerifyReason.CHAIN_BROKEN, broken)
    return Verification(True, token, block.height)


def audit_query(blocks: Sequence[Block], service: str) -> List[AuditRecord]:
    """Successful mints for ``service`` by chain replay, ascending block height."""
    state = replay(list(blocks))
    records = []
    for block, tx in _mint_txs(blocks):
        receipt = state.receipts.get(tx.tx_id)
        if receipt is None or not receipt.ok:
            continue
        body = tx.body()
        if body.get("service") != service:
            continue
        current: Dict = state.tokens[body["token_id"]]
        records.append(AuditRecord(
            token_id=body["token_id"],
            block_height=block.height,
            tx_id=tx.tx_id,
            current_owner=current["owner"],
            kind=body["kind"],
            name=body["name"],
            version=int(body["version"]),
        ))
    return records


def audited_services(blocks: Sequence[Block]) -> List[str]:
    """Every service with at least one successful mint, sorted."""
    state = replay(list(blocks))
    return sorted({record["token"]["service"] for record in state.tokens.values()})


def find_token(state: ContractState, token_id: str) -> Optional[S528Token]:
    record = state.tokens.get(token_id)
    return S528Token.from_dict(record["token"]) if record else None
