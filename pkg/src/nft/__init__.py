from src.nft.registry import AuditRecord, Verification, VerifyReason, audit_query, mint, next_version, transfer, verify
from src.nft.token import SCHEMA, Provenance, S528Token, TokenKind, encode_s528
