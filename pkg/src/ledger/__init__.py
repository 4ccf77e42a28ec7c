from src.ledger.chain import dump_chain, load_chain, verify_chain
from src.ledger.client import LedgerClient
from src.ledger.contracts import ContractState, replay
from src.ledger.network import BlockTimeReport, LedgerNetwork, bench_summary, run_network, sweep_peers
from src.ledger.peer import Peer, RejectReason, SubmitResult
from src.ledger.types import Block, Contract, Receipt, Transaction
