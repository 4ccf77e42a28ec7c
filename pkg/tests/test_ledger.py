import dataclasses

import pandas as pd
import pytest

from src.errors import NotLeader
from src.ledger import (
    Block,
    Contract,
    LedgerClient,
    LedgerNetwork,
    Peer,
    RejectReason,
    Transaction,
    bench_summary,
    dump_chain,
    load_chain,
    replay,
    run_network,
    verify_chain,
)
from src.ledger.network import REPORT_COLUMNS
from src.ledger.types import GENESIS_PREV_HASH, compute_tx_id
from src.utils.canonical import hash_fields
from src.utils.clock import SimulatedClock


def register(identity, nonce=0, submitter=None):
    return Transaction.create(Contract.IDENTITY, "register", {"id": identity}, submitter or identity, nonce)


def solo_peer(max_block_txs=50, heartbeat=False):
    return Peer("solo", ["solo"], clock=SimulatedClock(), max_block_txs=max_block_txs, heartbeat=heartbeat)


def build_chain(length):
    """A single-peer chain with one identity registration per block."""
    peer = solo_peer()
    for i in range(length):
        peer.clock.advance(200)
        peer.submit_tx(register(f"member-{i}"))
        peer.propose_block()
    return peer


def test_tx_id_is_hash_of_fields():
    tx = register("operator")
    assert tx.tx_id == hash_fields(["identity", "register", b'{"id":"operator"}', "operator", 0])
    assert tx.tx_id == compute_tx_id(tx.contract, tx.action, tx.payload, tx.submitter, tx.nonce)


def test_submitted_tx_reaches_every_mempool():
    network = LedgerNetwork(3, latency_ms=20)
    tx = register("operator")

    assert network.submit(tx).accepted
    network.run_until(20)

    assert all(tx in peer.mempool for peer in network.peers.values())


def test_duplicate_tx_rejected():
    peer = solo_peer()
    tx = register("operator")
    assert peer.submit_tx(tx).accepted
    result = peer.submit_tx(tx)
    assert not result.accepted
    assert result.reason == RejectReason.DUPLICATE


def test_forged_tx_id_rejected():
    tx = register("operator")
    forged = dataclasses.replace(tx, tx_id="ab" * 32)

    result = solo_peer().submit_tx(forged)

    assert result.reason == RejectReason.BAD_HASH
    assert forged.expected_id() == tx.tx_id != forged.tx_id


def test_duplicate_nonce_and_unknown_contract():
    peer = solo_peer()
    peer.submit_tx(register("a", nonce=0, submitter="op"))
    assert peer.submit_tx(register("b", nonce=0, submitter="op")).reason == RejectReason.DUPLICATE_NONCE

    bogus_id = compute_tx_id("bogus", "x", b"{}", "op", 1)
    bogus = Transaction(bogus_id, "bogus", "x", b"{}", "op", 1)
    assert peer.submit_tx(bogus).reason == RejectReason.UNKNOWN_CONTRACT


def test_propose_respects_max_block_txs():
    peer = solo_peer(max_block_txs=2)
    txs = [register(f"m{i}") for i in range(3)]
    for tx in txs:
        peer.submit_tx(tx)

    block = peer.propose_block()

    assert [tx.tx_id for tx in block.txs] == [tx.tx_id for tx in txs[:2]]
    assert [tx.tx_id for tx in peer.mempool] == [txs[2].tx_id]


def test_non_leader_cannot_propose():
    ids = ["peer-0", "peer-1"]
    follower = Peer("peer-1", ids)
    follower.submit_tx(register("operator"))
    with pytest.raises(NotLeader):
        follower.propose_block()


def test_round_robin_leaders_with_seven_peers():
    ids = [f"peer-{i}" for i in range(7)]
    peer = Peer("peer-3", ids)
    assert [peer.leader_for(h) for h in range(7)] == ids
    assert peer.leader_for(7) == "peer-0"


def test_empty_mempool_proposes_only_with_heartbeat():
    assert solo_peer().propose_block() is None
    block = solo_peer(heartbeat=True).propose_block()
    assert block.height == 0 and block.txs == ()
    assert block.prev_hash == GENESIS_PREV_HASH


def test_validate_honest_and_tampered_blocks():
    source = build_chain(1)
    block = source.chain[0]

    assert Peer("solo", ["solo"]).validate_block(block) == []

    tx = block.txs[0]
    flipped = bytearray(tx.payload)
    flipped[2] ^= 0x01
    tampered = dataclasses.replace(block, txs=(dataclasses.replace(tx, payload=bytes(flipped)),))
    reasons = Peer("solo", ["solo"]).validate_block(tampered)
    assert any("hash mismatch" in reason for reason in reasons)


def test_validate_rejects_skipped_height():
    block = Block.create(1, GENESIS_PREV_HASH, 0, "solo", [])
    reasons = Peer("solo", ["solo"]).validate_block(block)
    assert any("height discontinuity" in reason for reason in reasons)


def test_register_service_then_query_registry():
    peer = solo_peer()
    peer.submit_tx(register("operator"))
    peer.submit_tx(Transaction.create(
        Contract.SERVICE_REGISTRY, "register",
        {"name": "vault", "metrics_endpoint": "http://vault:9101/metrics", "container": "vault:1.15"},
        "operator", 1,
    ))
    peer.propose_block()

    record = peer.state.services["vault"]
    assert record["metrics_endpoint"] == "http://vault:9101/metrics"
    assert record["owner"] == "operator"


def test_mint_twice_in_one_block_applies_with_error():
    peer = solo_peer()
    peer.submit_tx(register("operator"))
    body = {"token_id": "t" * 64, "kind": "slo", "service": "vault", "name": "availability",
            "version": 1, "provenance": {"issuer": "operator"}}
    first = Transaction.create(Contract.NFT, "mint", body, "operator", 1)
    second = Transaction.create(Contract.NFT, "mint", body, "operator", 2)
    peer.submit_tx(first)
    peer.submit_tx(second)
    peer.propose_block()

    assert peer.receipt(first.tx_id).ok
    duplicate = peer.receipt(second.tx_id)
    assert not duplicate.ok
    assert "duplicate token" in duplicate.error
    assert list(peer.state.tokens) == ["t" * 64]


def test_replay_is_deterministic_across_peers():
    blocks = build_chain(50).chain
    first, second = Peer("solo", ["solo"]), Peer("solo", ["solo"])
    for block in blocks:
        first.apply_block(block)
        second.apply_block(block)

    assert first.state.state_hash() == second.state.state_hash()
    assert replay(blocks).state_hash() == first.state.state_hash()
    assert len(first.state.identities) == 50


def test_chain_links_and_dump_round_trip(tmp_path):
    blocks = build_chain(5).chain
    for previous, block in zip(blocks, blocks[1:]):
        assert block.prev_hash == previous.block_hash

    path = dump_chain(blocks, tmp_path / "chain.jsonl")
    assert load_chain(path) == blocks
    assert verify_chain(load_chain(path)).ok


def test_verify_chain_detects_payload_tamper(tmp_path):
    path = dump_chain(build_chain(4).chain, tmp_path / "chain.jsonl")
    lines = path.read_text().splitlines()
    lines[2] = lines[2].replace("member-2", "member-X")
    path.write_text("\n".join(lines) + "\n")

    result = verify_chain(load_chain(path))

    assert not result.ok
    assert result.failed_height == 2


def test_client_commit_reaches_all_peers():
    network = LedgerNetwork(3)
    client = LedgerClient(network, "operator", peer_id="peer-2")

    receipt = client.register_identity(role="operator")
    client.register_service("vault", "http://vault:9101/metrics")

    assert receipt.ok
    assert all("vault" in peer.state.services for peer in network.peers.values())
    assert network.chains_identical()


def test_run_network_single_peer():
    report = run_network(1, tx_rate=10, duration_s=1)
    assert report.tx_on_chain == 10
    assert len(report.blocks) > 0
    assert list(report.blocks.columns) == REPORT_COLUMNS


def test_run_network_seven_peers_agree(tmp_path):
    report = run_network(7, tx_rate=20, duration_s=2)
    assert report.chains_identical
    assert report.tx_on_chain == 40

    path = report.to_csv(tmp_path / "blocks.csv")
    assert list(pd.read_csv(path).columns) == REPORT_COLUMNS


def test_doubling_latency_increases_block_latency():
    fast = run_network(3, tx_rate=20, duration_s=2, latency_ms=20)
    slow = run_network(3, tx_rate=20, duration_s=2, latency_ms=40)
    assert slow.mean_ms > fast.mean_ms


def test_bench_summary_has_one_row_per_report():
    reports = [run_network(n, tx_rate=10, duration_s=1) for n in (1, 2)]
    summary = bench_summary(reports)
    assert list(summary["peer_count"]) == [1, 2]
    assert summary["chains_identical"].all()
