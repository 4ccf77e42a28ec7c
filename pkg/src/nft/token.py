"""s-528 tokens: canonical encodings of SLI/SLO records with provenance.

    token_id = SHA-256(schema 0x1F kind 0x1F service 0x1F payload 0x1F version)

``payload`` is the canonical JSON of the SLI/SLO record. Provenance is carried
next to the payload but is not part of the hash, so re-issuing the same record
from a different round is a new version rather than a new identity.
"""
import json
from dataclasses import dataclass
from enum import Enum
from typing import Any, Dict, Union

from src.slogen.types import SliSpec, SloSpec
from src.utils.canonical import canonical_json, hash_fields

SCHEMA = "s-528"


class TokenKind(str, Enum):
    SLI = "sli"
    SLO = "slo"


@dataclass(frozen=True)
class Provenance:
    fl_round: int
    backend: str
    created_at: int
    issuer: str

    def to_dict(self) -> Dict[str, Any]:
        return {
            "fl_round": self.fl_round,
            "backend": self.backend,
            "created_at": self.created_at,
            "issuer": self.issuer,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "Provenance":
        return cls(int(data["fl_round"]), str(data["backend"]), int(data["created_at"]), str(data["issuer"]))


def compute_token_id(kind: str, service: str, payload: str, version: int) -> str:
    return hash_fields([SCHEMA, kind, service, payload, version])


@dataclass(frozen=True)
class S528Token:
    token_id: str
    kind: TokenKind
    service: str
    name: str
    payload: str
    provenance: Provenance
    version: int = 1
    schema: str = SCHEMA

    def expected_id(self) -> str:
        return compute_token_id(self.kind.value, self.service, self.payload, self.version)

    def record(self) -> Union[SliSpec, SloSpec]:
        data = json.loads(self.payload)
        if self.kind == TokenKind.SLO:
            return SloSpec.from_dict(data)
        return SliSpec.from_dict(data)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "schema": self.schema,
            "token_id": self.token_id,
            "kind": self.kind.value,
            "service": self.service,
            "name": self.name,
            "payload": self.payload,
            "provenance": self.provenance.to_dict(),
            "version": self.version,
        }

    def to_line(self) -> str:
        return canonical_json(self.to_dict())

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "S528Token":
        return cls(
            token_id=data["token_id"],
            kind=TokenKind(data["kind"]),
            service=data["service"],
            name=data["name"],
            payload=data["payload"],
            provenance=Provenance.from_dict(data["provenance"]),
            version=int(data["version"]),
            schema=data.get("schema", SCHEMA),
        )


def encode_s528(obj: Union[SliSpec, SloSpec], provenance: Provenance, version: int = 1) -> S528Token:
    """
    Tokenize an SLI or SLO record.

    Args:
        obj (SliSpec | SloSpec): Validated record
        provenance (Provenance): FL round, backend, creation time and issuer
        version (int): Version for this (kind, service, SLI name)

    Returns:
        S528Token: Token with its id computed over the canonical payload
    """
    if isinstance(obj, SloSpec):
        kind, sli = TokenKind.SLO, obj.sli
    elif isinstance(obj, SliSpec):
        kind, sli = TokenKind.SLI, obj
    else:
        raise TypeError(f"Cannot tokenize {type(obj).__name__}")
    if version < 1:
        raise ValueError(f"version must be >= 1, got {version}")
    payload = canonical_json(obj.to_dict())
    token_id = compute_token_id(kind.value, sli.service, payload, version)
    return S528Token(token_id, kind, sli.service, sli.name, payload, provenance, version)
