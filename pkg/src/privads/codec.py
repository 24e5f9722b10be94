"""Canonical wire encoding for contract calls, state dumps and hashing.

Values are reduced to JSON with type-tagged leaves for bytes and the
crypto domain objects, serialized with sorted keys and no whitespace, so
every hash over encoded state is reproducible across runs and platforms.
"""

from __future__ import annotations

import hashlib
import json

from .group import Ciphertext, GroupElement, HybridCiphertext, Signature
from .payments import Commitment, TransferNote
from .proofs import DecryptionProof, VrfOutput
from .threshold import PartialDecryption

__all__ = ["to_wire", "from_wire", "encode_args", "decode_args", "canonical_json", "digest"]


def to_wire(obj):
    if obj is None or isinstance(obj, (bool, int, str)):
        return obj
    if isinstance(obj, bytes):
        return {"!b": obj.hex()}
    if isinstance(obj, GroupElement):
        return {"!pt": obj.encode().hex()}
    if isinstance(obj, Ciphertext):
        return {"!ct": obj.encode().hex()}
    if isinstance(obj, Signature):
        return {"!sig": [obj.challenge, obj.response]}
    if isinstance(obj, DecryptionProof):
        return {
            "!proof": [
                obj.commit_a.encode().hex(),
                obj.commit_b.encode().hex(),
                obj.challenge,
                obj.response,
            ]
        }
    if isinstance(obj, VrfOutput):
        return {"!vrf": [obj.rand, to_wire(obj.gamma), to_wire(obj.proof)]}
    if isinstance(obj, HybridCiphertext):
        return {"!hc": obj.encode().hex()}
    if isinstance(obj, Commitment):
        return {"!com": obj.encode().hex()}
    if isinstance(obj, TransferNote):
        return {"!note": [obj.tx_ref.hex(), obj.recipient.hex(), obj.commitment.encode().hex()]}
    if isinstance(obj, PartialDecryption):
        return {"!part": [obj.index, to_wire(obj.share_point), to_wire(obj.proof)]}
    if isinstance(obj, (list, tuple)):
        return [to_wire(v) for v in obj]
    if isinstance(obj, dict):
        return {_wire_key(k): to_wire(v) for k, v in obj.items()}
    raise TypeError(f"cannot wire-encode {type(obj).__name__}")


def _wire_key(key) -> str:
    if isinstance(key, str):
        return key
    if isinstance(key, bytes):
        return "0x" + key.hex()
    if isinstance(key, int):
        return str(key)
    raise TypeError(f"cannot use {type(key).__name__} as wire key")


def from_wire(obj):
    if obj is None or isinstance(obj, (bool, int, str)):
        return obj
    if isinstance(obj, list):
        return [from_wire(v) for v in obj]
    if isinstance(obj, dict):
        if len(obj) == 1:
            (key, value), = obj.items()
            if key == "!b":
                return bytes.fromhex(value)
            if key == "!pt":
                return GroupElement.decode(bytes.fromhex(value))
            if key == "!ct":
                return Ciphertext.decode(bytes.fromhex(value))
            if key == "!sig":
                return Signature(value[0], value[1])
            if key == "!proof":
                return DecryptionProof(
                    GroupElement.decode(bytes.fromhex(value[0])),
                    GroupElement.decode(bytes.fromhex(value[1])),
                    value[2],
                    value[3],
                )
            if key == "!vrf":
                return VrfOutput(value[0], from_wire(value[1]), from_wire(value[2]))
            if key == "!hc":
                return HybridCiphertext.decode(bytes.fromhex(value))
            if key == "!com":
                return Commitment(GroupElement.decode(bytes.fromhex(value)))
            if key == "!note":
                return TransferNote(
                    bytes.fromhex(value[0]),
                    bytes.fromhex(value[1]),
                    Commitment(GroupElement.decode(bytes.fromhex(value[2]))),
                )
            if key == "!part":
                return PartialDecryption(value[0], from_wire(value[1]), from_wire(value[2]))
        out = {}
        for key, value in obj.items():
            out[bytes.fromhex(key[2:]) if key.startswith("0x") else key] = from_wire(value)
        return out
    raise TypeError(f"cannot wire-decode {type(obj).__name__}")


def canonical_json(obj) -> str:
    return json.dumps(to_wire(obj), sort_keys=True, separators=(",", ":"))


def encode_args(obj) -> bytes:
    return canonical_json(obj).encode()


def decode_args(data: bytes):
    return from_wire(json.loads(data.decode()))


def digest(obj) -> str:
    return hashlib.sha256(canonical_json(obj).encode()).hexdigest()
