import dataclasses
import random

import pytest

from src.errors import DuplicateToken, TokenVerificationError, UnknownIssuer
from src.ledger import Block, LedgerClient, LedgerNetwork
from src.ledger.types import Contract
from src.nft import Provenance, S528Token, TokenKind, VerifyReason, audit_query, encode_s528, mint, next_version, transfer, verify
from src.nft.registry import audited_services, find_token
from src.slogen.types import SliKind, SliSpec, SloSpec

# canonical payload of vault_slo(); see docs/s528.md
GOLDEN_TOKEN_ID = "8702576ec6c4a89c2b866c9e9679feb21e8e0972988b77906d74da6d3474238d"
GOLDEN_TOKEN_ID_V2 = "0cb77b9ffd0c04a87fab19c2fa85b3ba6f25aaf69b1bb5ea2d72c496144f35db"


def vault_slo(target=0.99, service="vault"):
    sli = SliSpec(
        service=service,
        name="availability",
        kind=SliKind.AVAILABILITY,
        good_query=f'sum(rate({service}_requests_total{{code!~"5.."}}[30d]))',
        total_query=f"sum(rate({service}_requests_total[30d]))",
    )
    return SloSpec(sli, target, "30d")


def provenance(issuer="operator", fl_round=0):
    return Provenance(fl_round=fl_round, backend="template", created_at=0, issuer=issuer)


@pytest.fixture
def network():
    return LedgerNetwork(3)


@pytest.fixture
def operator(network):
    client = LedgerClient(network, "operator")
    client.register_identity(role="operator")
    return client


def test_encoding_is_deterministic():
    first = encode_s528(vault_slo(), provenance())
    second = encode_s528(vault_slo(), provenance(fl_round=4))
    assert first.token_id == second.token_id
    assert first.payload == second.payload


def test_target_change_changes_token_id():
    assert encode_s528(vault_slo(0.99), provenance()).token_id != encode_s528(vault_slo(0.999), provenance()).token_id


def test_golden_token_id():
    token = encode_s528(vault_slo(), provenance())
    assert token.payload.startswith('{"description":"","sli":{"good_query":')
    assert token.token_id == GOLDEN_TOKEN_ID
    assert encode_s528(vault_slo(), provenance(), version=2).token_id == GOLDEN_TOKEN_ID_V2


def test_no_collisions_across_generated_records():
    rng = random.Random(1)
    ids = set()
    payloads = set()
    for _ in range(300):
        target = round(rng.uniform(0.5, 0.9999), rng.randint(2, 4))
        service = rng.choice(["vault", "amf", "smf", "udm", "nrf"])
        token = encode_s528(vault_slo(target, service), provenance(), version=rng.randint(1, 3))
        key = (token.payload, token.version)
        if key not in payloads:
            payloads.add(key)
            assert token.token_id not in ids
            ids.add(token.token_id)


def test_sli_token_and_record_round_trip():
    sli = vault_slo().sli
    token = encode_s528(sli, provenance())
    assert token.kind == TokenKind.SLI
    assert token.record() == sli
    assert S528Token.from_dict(token.to_dict()) == token


def test_mint_then_audit(network, operator):
    token = encode_s528(vault_slo(), provenance())

    tx_id = mint(token, operator)

    (record,) = audit_query(network.primary.chain, "vault")
    assert record.token_id == token.token_id
    assert record.tx_id == tx_id
    assert record.current_owner == "operator"
    assert find_token(network.primary.state, token.token_id) == token


def test_mint_twice_is_duplicate(network, operator):
    token = encode_s528(vault_slo(), provenance())
    mint(token, operator)
    with pytest.raises(DuplicateToken):
        mint(token, operator)


def test_unregistered_issuer(network):
    stranger = LedgerClient(network, "stranger")
    with pytest.raises(UnknownIssuer):
        mint(encode_s528(vault_slo(), provenance("stranger")), stranger)


def test_mint_on_one_peer_audit_on_another(network):
    issuer = LedgerClient(network, "operator", peer_id="peer-0")
    issuer.register_identity(role="operator")
    token = encode_s528(vault_slo(), provenance())

    mint(token, issuer)

    records = audit_query(network.peers["peer-2"].chain, "vault")
    assert [r.token_id for r in records] == [token.token_id]


def test_versions_are_audited_in_order(network, operator):
    first = encode_s528(vault_slo(0.99), provenance())
    mint(first, operator)
    version = next_version(network.primary.state, TokenKind.SLO, "vault", "availability")
    second = encode_s528(vault_slo(0.995), provenance(fl_round=1), version=version)
    mint(second, operator)

    records = audit_query(network.primary.chain, "vault")

    assert version == 2
    assert [r.version for r in records] == [1, 2]
    assert records[0].block_height <= records[1].block_height
    assert audit_query(network.primary.chain, "unknown") == []


def test_audit_matches_full_scan(network, operator):
    for service in ("vault", "amf", "vault"):
        version = next_version(network.primary.state, TokenKind.SLO, service, "availability")
        mint(encode_s528(vault_slo(0.99, service), provenance(), version=version), operator)
    blocks = network.primary.chain

    scanned = {}
    for block in blocks:
        for tx in block.txs:
            if tx.contract == Contract.NFT.value and tx.action == "mint":
                body = tx.body()
                scanned.setdefault(body["service"], []).append((body["token_id"], block.height, tx.tx_id))

    assert audited_services(blocks) == ["amf", "vault"]
    for service in audited_services(blocks):
        records = audit_query(blocks, service)
        assert [(r.token_id, r.block_height, r.tx_id) for r in records] == scanned[service]
    every = [r.tx_id for s in audited_services(blocks) for r in audit_query(blocks, s)]
    assert len(every) == len(set(every)) == 3


def test_transfer_updates_current_owner(network, operator):
    LedgerClient(network, "auditor").register_identity()
    token = encode_s528(vault_slo(), provenance())
    mint(token, operator)

    transfer(token.token_id, "auditor", operator)

    (record,) = audit_query(network.primary.chain, "vault")
    assert record.current_owner == "auditor"


def test_verify_honest_token(network, operator):
    token = encode_s528(vault_slo(), provenance())
    mint(token, operator)

    result = verify(token.token_id, network.primary.chain)

    assert result.valid
    assert result.token == token
    assert result.block_height == network.primary.state.tokens[token.token_id]["height"]


def test_verify_unknown_token(network, operator):
    result = verify("ab" * 32, network.primary.chain)
    assert not result.valid
    assert result.reason == VerifyReason.NOT_FOUND
    with pytest.raises(TokenVerificationError):
        result.raise_for_reason()


def test_verify_detects_tampered_payload(network, operator):
    token = encode_s528(vault_slo(), provenance())
    mint(token, operator)
    chain = list(network.primary.chain)

    for i, block in enumerate(chain):
        txs = tuple(
            dataclasses.replace(tx, payload=tx.payload.replace(b"0.99", b"0.98")) if tx.contract == "nft" else tx
            for tx in block.txs
        )
        chain[i] = dataclasses.replace(block, txs=txs)

    result = verify(token.token_id, chain)
    assert result.reason == VerifyReason.HASH_MISMATCH
    assert verify(token.token_id, network.primary.chain).valid


def test_verify_detects_broken_linkage(network, operator):
    token = encode_s528(vault_slo(), provenance())
    mint(token, operator)
    LedgerClient(network, "late-member").register_identity()
    chain = list(network.primary.chain)
    head = chain[-1]

    chain[-1] = Block.create(head.height, "00" * 32, head.timestamp, head.proposer, head.txs)

    result = verify(token.token_id, chain)
    assert result.reason == VerifyReason.CHAIN_BROKEN


def flip_byte(data: bytes, index: int) -> bytes:
    return data[:index] + bytes([data[index] ^ 0x01]) + data[index + 1:]


def test_random_tokens_verify_audit_and_detect_single_byte_tamper(network, operator):
    rng = random.Random(7)
    services = ["vault", "amf", "smf", "udm"]
    minted = {}
    while len(minted) < 100:
        service = rng.choice(services)
        target = round(rng.uniform(0.9, 0.9999), 4)
        slo = vault_slo(target, service)
        version = next_version(network.primary.state, TokenKind.SLO, service, "availability")
        token = encode_s528(slo, provenance(), version=version)
        if token.token_id in minted:
            continue
        mint(token, operator)
        minted[token.token_id] = service

    chain = network.primary.chain
    audited = {service: {r.token_id for r in audit_query(chain, service)} for service in services}
    for token_id, service in minted.items():
        assert verify(token_id, chain).valid
        assert token_id in audited[service]

    for token_id in rng.sample(sorted(minted), 10):
        height = verify(token_id, chain).block_height
        tampered = list(chain)
        block = tampered[height]
        txs = list(block.txs)
        (pos,) = [i for i, tx in enumerate(txs) if tx.contract == Contract.NFT.value and token_id.encode() in tx.payload]
        txs[pos] = dataclasses.replace(txs[pos], payload=flip_byte(txs[pos].payload, rng.randrange(len(txs[pos].payload))))
        tampered[height] = dataclasses.replace(block, txs=tuple(txs))

        result = verify(token_id, tampered)
        assert not result.valid
        assert result.reason in (VerifyReason.HASH_MISMATCH, VerifyReason.NOT_FOUND)


def test_single_byte_change_to_block_header_breaks_chain(network, operator):
    token = encode_s528(vault_slo(), provenance())
    mint(token, operator)
    chain = list(network.primary.chain)
    height = verify(token.token_id, chain).block_height
    block = chain[height]
    flipped = "1" if block.prev_hash[0] != "1" else "2"

    chain[height] = dataclasses.replace(block, prev_hash=flipped + block.prev_hash[1:])

    assert verify(token.token_id, chain).reason == VerifyReason.CHAIN_BROKEN
