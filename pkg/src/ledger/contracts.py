"""The five contract handlers and the state they derive from the chain.

State is a plain nested dict so it can be canonically encoded and hashed.
Handlers check everything before mutating; a handler that raises
ContractRejected leaves the state untouched and the transaction is recorded
as applied-with-error.
"""
import copy
import logging
from dataclasses import dataclass
from typing import Any, Callable, Dict, List, Optional

from src.errors import ContractRejected
from src.ledger.types import Block, Contract, Receipt, Transaction
from src.utils.canonical import canonical_bytes, sha256_hex

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class TxContext:
    height: int
    timestamp: int


def _require(condition: bool, message: str) -> None:
    if not condition:
        raise ContractRejected(message)


def _empty_state() -> Dict[str, Any]:
    return {
        Contract.IDENTITY.value: {},
        Contract.SERVICE_REGISTRY.value: {},
        Contract.FEDERATED_LEARNING.value: {},
        Contract.LLM.value: {},
        Contract.NFT.value: {"tokens": {}, "versions": {}},
    }


class ContractState:
    """Per-contract key/value state derived purely by replaying blocks."""

    def __init__(self, data: Optional[Dict[str, Any]] = None):
        self.data = data if data is not None else _empty_state()
        self.receipts: Dict[str, Receipt] = {}
        self._handlers: Dict[str, Dict[str, Callable[[Dict[str, Any], Transaction, TxContext], None]]] = {
            Contract.IDENTITY.value: {
                "register": self._identity_register,
                "revoke": self._identity_revoke,
            },
            Contract.SERVICE_REGISTRY.value: {
                "register": self._service_register,
                "update": self._service_update,
            },
            Contract.FEDERATED_LEARNING.value: {
                "open_round": self._fl_open_round,
                "publish_update": self._fl_publish_update,
                "seal_round": self._fl_seal_round,
            },
            Contract.LLM.value: {
                "record_slo": self._llm_record_slo,
            },
            Contract.NFT.value: {
                "mint": self._nft_mint,
                "transfer": self._nft_transfer,
            },
        }

    def copy(self) -> "ContractState":
        clone = ContractState(copy.deepcopy(self.data))
        clone.receipts = dict(self.receipts)
        return clone

    def state_hash(self) -> str:
        return sha256_hex(canonical_bytes(self.data))

    # views

    @property
    def identities(self) -> Dict[str, Any]:
        return self.data[Contract.IDENTITY.value]

    @property
    def services(self) -> Dict[str, Any]:
        return self.data[Contract.SERVICE_REGISTRY.value]

    @property
    def rounds(self) -> Dict[str, Any]:
        return self.data[Contract.FEDERATED_LEARNING.value]

    @property
    def slos(self) -> Dict[str, Any]:
        return self.data[Contract.LLM.value]

    @property
    def tokens(self) -> Dict[str, Any]:
        return self.data[Contract.NFT.value]["tokens"]

    @property
    def token_versions(self) -> Dict[str, int]:
        return self.data[Contract.NFT.value]["versions"]

    def is_active(self, identity: str) -> bool:
        record = self.identities.get(identity)
        return bool(record and record["active"])

    # apply

    def apply_block(self, block: Block) -> List[Receipt]:
        context = TxContext(block.height, block.timestamp)
        receipts = []
        for tx in block.txs:
            receipt = self.apply_tx(tx, context)
            receipts.append(receipt)
        return receipts

    def apply_tx(self, tx: Transaction, context: TxContext) -> Receipt:
        try:
            handler = self._handlers.get(tx.contract, {}).get(tx.action)
            _require(handler is not None, f"unknown action {tx.contract}.{tx.action}")
            try:
                body = tx.body()
            except ValueError:
                raise ContractRejected("payload is not a canonical object")
            _require(isinstance(body, dict), "payload must be an object")
            handler(body, tx, context)
            receipt = Receipt(tx.tx_id, context.height, True)
        except ContractRejected as e:
            logger.debug(f"Transaction {tx.tx_id[:12]} applied with error: {str(e)}")
            receipt = Receipt(tx.tx_id, context.height, False, str(e))
        self.receipts[tx.tx_id] = receipt
        return receipt

    def _require_active(self, tx: Transaction) -> None:
        _require(self.is_active(tx.submitter), f"submitter {tx.submitter} is not a registered identity")

    # identity

    def _identity_register(self, body: Dict[str, Any], tx: Transaction, ctx: TxContext) -> None:
        identity = body.get("id")
        _require(isinstance(identity, str) and identity, "identity id is required")
        _require(identity not in self.identities, f"identity {identity} already registered")
        _require(
            tx.submitter == identity or self.is_active(tx.submitter),
            "identities register themselves or are registered by an active identity",
        )
        self.identities[identity] = {
            "active": True,
            "registered_by": tx.submitter,
            "role": body.get("role", "member"),
            "height": ctx.height,
        }

    def _identity_revoke(self, body: Dict[str, Any], tx: Transaction, ctx: TxContext) -> None:
        identity = body.get("id")
        self._require_active(tx)
        _require(self.is_active(identity), f"identity {identity} is not active")
        self.identities[identity]["active"] = False
        self.identities[identity]["revoked_at"] = ctx.height

    # service registry

    def _service_register(self, body: Dict[str, Any], tx: Transaction, ctx: TxContext) -> None:
        self._require_active(tx)
        name = body.get("name")
        _require(isinstance(name, str) and name, "service name is required")
        _require(name not in self.services, f"service {name} already registered")
        _require(isinstance(body.get("metrics_endpoint"), str), "metrics_endpoint is required")
        self.services[name] = {
            "name": name,
            "metrics_endpoint": body["metrics_endpoint"],
            "container": body.get("container", ""),
            "deployment": body.get("deployment", ""),
            "owner": tx.submitter,
            "version": 1,
            "height": ctx.height,
        }

    def _service_update(self, body: Dict[str, Any], tx: Transaction, ctx: TxContext) -> None:
        self._require_active(tx)
        name = body.get("name")
        record = self.services.get(name)
        _require(record is not None, f"service {name} is not registered")
        _require(record["owner"] == tx.submitter, f"only {record['owner']} may update service {name}")
        for key in ("metrics_endpoint", "container", "deployment"):
            if key in body:
                _require(isinstance(body[key], str), f"{key} must be a string")
        for key in ("metrics_endpoint", "container", "deployment"):
            if key in body:
                record[key] = body[key]
        record["version"] += 1
        record["height"] = ctx.height

    # federated learning

    def _fl_open_round(self, body: Dict[str, Any], tx: Transaction, ctx: TxContext) -> None:
        self._require_active(tx)
        number = body.get("round")
        _require(isinstance(number, int) and number >= 0, "round must be a non-negative integer")
        _require(str(number) not in self.rounds, f"round {number} already opened")
        if number > 0:
            previous = self.rounds.get(str(number - 1))
            _require(previous is not None and previous["sealed"], f"round {number - 1} is not sealed")
        peers = body.get("expected_peers")
        _require(isinstance(peers, list) and peers, "expected_peers must be a non-empty list")
        _require(len(set(peers)) == len(peers), "expected_peers contains duplicates")
        deadline = body.get("deadline_ms")
        _require(isinstance(deadline, int) and deadline > ctx.timestamp, "deadline_ms must lie after the block time")
        init_params = body.get("init_params")
        if number == 0:
            _require(isinstance(init_params, list) and init_params, "round 0 requires init_params")
            dimension = len(init_params)
        else:
            dimension = self.rounds[str(number - 1)]["dimension"]
            _require(init_params is None, "only round 0 publishes init_params")
        self.rounds[str(number)] = {
            "round": number,
            "opener": tx.submitter,
            "expected_peers": sorted(peers),
            "deadline_ms": deadline,
            "dimension": dimension,
            "init_params": init_params,
            "normalization": body.get("normalization"),
            "feature_names": body.get("feature_names"),
            "hidden_units": body.get("hidden_units"),
            "updates": {},
            "sealed": False,
            "included": [],
            "aggregate_digest": None,
            "attesters": [],
            "opened_at": ctx.height,
        }

    def _fl_publish_update(self, body: Dict[str, Any], tx: Transaction, ctx: TxContext) -> None:
        self._require_active(tx)
        state = self.rounds.get(str(body.get("round")))
        _require(state is not None, f"round {body.get('round')} is not open")
        _require(not state["sealed"], f"round {state['round']} is sealed")
        peer = body.get("peer")
        _require(peer == tx.submitter, "updates must be published by the training peer")
        _require(peer in state["expected_peers"], f"peer {peer} is not expected in round {state['round']}")
        _require(peer not in state["updates"], f"peer {peer} already published for round {state['round']}")
        _require(ctx.timestamp <= state["deadline_ms"], f"update for round {state['round']} arrived after the deadline")
        params = body.get("params")
        _require(isinstance(params, list) and len(params) == state["dimension"], "params dimension mismatch")
        count = body.get("sample_count")
        _require(isinstance(count, int) and count >= 1, "sample_count must be >= 1")
        state["updates"][peer] = {
            "params": params,
            "sample_count": count,
            "loss": body.get("loss"),
            "height": ctx.height,
            "tx_id": tx.tx_id,
        }

    @staticmethod
    def round_closed(state: Dict[str, Any], head_timestamp: int) -> bool:
        """True once every expected update is on chain or the chain has passed the deadline."""
        if len(state["updates"]) == len(state["expected_peers"]):
            return True
        return head_timestamp > state["deadline_ms"]

    def _fl_seal_round(self, body: Dict[str, Any], tx: Transaction, ctx: TxContext) -> None:
        self._require_active(tx)
        state = self.rounds.get(str(body.get("round")))
        _require(state is not None, f"round {body.get('round')} is not open")
        _require(self.round_closed(state, ctx.timestamp), f"round {state['round']} is still collecting updates")
        _require(state["updates"], f"round {state['round']} received no updates")
        included = sorted(state["updates"])
        _require(body.get("included") == included, "attested peer set differs from the on-chain updates")
        digest = body.get("aggregate_digest")
        _require(isinstance(digest, str) and len(digest) == 64, "aggregate_digest must be a hex sha256")
        _require(tx.submitter not in state["attesters"], f"{tx.submitter} already attested round {state['round']}")
        if state["sealed"]:
            _require(state["aggregate_digest"] == digest, "aggregate digest conflicts with the sealed round")
        else:
            state["sealed"] = True
            state["included"] = included
            state["aggregate_digest"] = digest
            state["sealed_at"] = ctx.height
        state["attesters"].append(tx.submitter)

    # llm

    def _llm_record_slo(self, body: Dict[str, Any], tx: Transaction, ctx: TxContext) -> None:
        self._require_active(tx)
        slo_id = body.get("slo_id")
        _require(isinstance(slo_id, str) and slo_id, "slo_id is required")
        _require(slo_id not in self.slos, f"slo {slo_id} already recorded")
        _require(isinstance(body.get("slo"), dict), "slo object is required")
        self.slos[slo_id] = {
            "slo": body["slo"],
            "provenance": body.get("provenance", {}),
            "recorded_by": tx.submitter,
            "height": ctx.height,
            "tx_id": tx.tx_id,
        }

    # nft

    def _nft_mint(self, body: Dict[str, Any], tx: Transaction, ctx: TxContext) -> None:
        _require(self.is_active(tx.submitter), f"issuer {tx.submitter} is not a registered identity")
        token_id = body.get("token_id")
        _require(isinstance(token_id, str) and token_id, "token_id is required")
        _require(token_id not in self.tokens, f"duplicate token {token_id}")
        provenance = body.get("provenance") or {}
        _require(provenance.get("issuer") == tx.submitter, "provenance issuer must be the submitter")
        key = "\x1f".join(str(body.get(part, "")) for part in ("kind", "service", "name"))
        version = body.get("version")
        _require(isinstance(version, int) and version >= 1, "version must be a positive integer")
        _require(version > self.token_versions.get(key, 0), f"version {version} is not newer than the latest")
        self.tokens[token_id] = {
            "token": body,
            "owner": tx.submitter,
            "height": ctx.height,
            "tx_id": tx.tx_id,
        }
        self.token_versions[key] = version

    def _nft_transfer(self, body: Dict[str, Any], tx: Transaction, ctx: TxContext) -> None:
        record = self.tokens.get(body.get("token_id"))
        _require(record is not None, f"unknown token {body.get('token_id')}")
        _require(record["owner"] == tx.submitter, "only the current owner may transfer a token")
        recipient = body.get("to")
        _require(self.is_active(recipient), f"recipient {recipient} is not a registered identity")
        record["owner"] = recipient


def replay(blocks: List[Block]) -> ContractState:
    """State after applying ``blocks`` in order, without any validation."""
    state = ContractState()
    for block in blocks:
        state.apply_block(block)
    return state
