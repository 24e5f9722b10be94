"""Zero-knowledge proofs: correct-decryption (DLEQ) and a verifiable
random function for the consensus-pool lottery.

Both are sigma protocols made non-interactive by Fiat-Shamir.  Every
transcript starts with a protocol-version tag and contains the full
statement plus all commitments, so a proof cannot be replayed against a
different statement or in a different context.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

from .group import (
    G,
    ORDER,
    Ciphertext,
    GroupElement,
    KeyPair,
    Scalar,
    hash_to_point,
    hash_to_scalar,
    random_scalar,
    scalar_bytes,
    decrypt,
)

__all__ = [
    "DecryptionProof",
    "VrfOutput",
    "MismatchedPlain",
    "dleq_prove",
    "dleq_verify",
    "prove_decryption",
    "verify_decryption",
    "vrf_rand",
    "vrf_eval",
    "vrf_verify",
]


class MismatchedPlain(Exception):
    """Claimed plaintext point does not match the actual decryption."""


@dataclass(frozen=True)
class DecryptionProof:
    """DLEQ proof: the same secret links both (base, public) pairs."""

    commit_a: GroupElement
    commit_b: GroupElement
    challenge: Scalar
    response: Scalar

    def encode(self) -> bytes:
        return (
            self.commit_a.encode()
            + self.commit_b.encode()
            + scalar_bytes(self.challenge)
            + scalar_bytes(self.response)
        )


def _dleq_challenge(tag, base_a, pub_a, base_b, pub_b, commit_a, commit_b) -> Scalar:
    return hash_to_scalar(
        b"dleq/" + tag,
        base_a.encode(),
        pub_a.encode(),
        base_b.encode(),
        pub_b.encode(),
        commit_a.encode(),
        commit_b.encode(),
    )


def dleq_prove(tag: bytes, base_a, pub_a, base_b, pub_b, secret: Scalar, rng) -> DecryptionProof:
    """Prove log_{base_a}(pub_a) == log_{base_b}(pub_b) == secret."""
    w = random_scalar(rng)
    commit_a = base_a.mul(w)
    commit_b = base_b.mul(w)
    c = _dleq_challenge(tag, base_a, pub_a, base_b, pub_b, commit_a, commit_b)
    s = (w - c * secret) % ORDER
    return DecryptionProof(commit_a, commit_b, c, s)


def dleq_verify(tag: bytes, base_a, pub_a, base_b, pub_b, proof: DecryptionProof) -> bool:
    try:
        if not (0 <= proof.challenge < ORDER and 0 <= proof.response < ORDER):
            return False
        if base_a.mul(proof.response) + pub_a.mul(proof.challenge) != proof.commit_a:
            return False
        if base_b.mul(proof.response) + pub_b.mul(proof.challenge) != proof.commit_b:
            return False
        c = _dleq_challenge(tag, base_a, pub_a, base_b, pub_b, proof.commit_a, proof.commit_b)
        return c == proof.challenge
    except Exception:
        return False


_DEC_TAG = b"decryption"


def prove_decryption(keypair: KeyPair, ct: Ciphertext, plain_point: GroupElement, rng) -> DecryptionProof:
    """Prove plain_point is the decryption of ct under keypair's secret.

    Statement: pk = sk*G  and  ct.c2 - plain_point = sk*ct.c1.
    """
    if decrypt(keypair.sk, ct) != plain_point:
        raise MismatchedPlain("plain point is not the decryption of the ciphertext")
    masked = ct.c2 - plain_point
    return dleq_prove(_DEC_TAG, G, keypair.pk, ct.c1, masked, keypair.sk, rng)


def verify_decryption(pk: GroupElement, ct: Ciphertext, plain_point: GroupElement, proof: DecryptionProof) -> bool:
    try:
        masked = ct.c2 - plain_point
        return dleq_verify(_DEC_TAG, G, pk, ct.c1, masked, proof)
    except Exception:
        return False


# ---------------------------------------------------------------------------
# VRF: hash the seed to a curve point, expose sk*H(seed) plus a DLEQ proof,
# and derive the random number from the exposed point.
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class VrfOutput:
    rand: int
    gamma: GroupElement
    proof: DecryptionProof

    def encode(self) -> bytes:
        return self.rand.to_bytes(32, "little") + self.gamma.encode() + self.proof.encode()


def _vrf_point(vrf_pk: GroupElement, seed: bytes) -> GroupElement:
    return hash_to_point(b"vrf/h2c", vrf_pk.encode(), seed)


def _vrf_rand(gamma: GroupElement, p: int) -> int:
    digest = hashlib.sha256(b"privads/v1/vrf/out" + gamma.encode()).digest()
    return int.from_bytes(digest, "big") % p


def vrf_rand(vrf_sk: Scalar, seed: bytes, p: int) -> int:
    """Just the random number, no proof.

    Matches vrf_eval(...).rand exactly.  Lottery registrants evaluate this
    to learn whether they won; only winners go on to publish the full
    proved output.
    """
    if p < 2:
        raise ValueError("modulus must be >= 2")
    if not seed:
        raise ValueError("seed must be non-empty")
    vrf_pk = G.mul(vrf_sk)
    gamma = _vrf_point(vrf_pk, seed).mul(vrf_sk)
    return _vrf_rand(gamma, p)


def vrf_eval(vrf_sk: Scalar, seed: bytes, p: int) -> VrfOutput:
    """Deterministic random number in [0, p) plus proof of correctness."""
    if p < 2:
        raise ValueError("modulus must be >= 2")
    if not seed:
        raise ValueError("seed must be non-empty")
    vrf_pk = G.mul(vrf_sk)
    h = _vrf_point(vrf_pk, seed)
    gamma = h.mul(vrf_sk)
    # The proof nonce is derived, not sampled: evaluation stays a pure
    # function of (sk, seed).
    nonce_rng = _DerivedRng(vrf_sk, seed)
    proof = dleq_prove(b"vrf", G, vrf_pk, h, gamma, vrf_sk, nonce_rng)
    return VrfOutput(_vrf_rand(gamma, p), gamma, proof)


def vrf_verify(vrf_pk: GroupElement, seed: bytes, out: VrfOutput, p: int) -> bool:
    try:
        if p < 2 or not seed:
            return False
        h = _vrf_point(vrf_pk, seed)
        if not dleq_verify(b"vrf", G, vrf_pk, h, out.gamma, out.proof):
            return False
        return out.rand == _vrf_rand(out.gamma, p)
    except Exception:
        return False


class _DerivedRng:
    """Minimal RNG handle yielding the deterministic DLEQ nonce."""

    def __init__(self, sk: Scalar, seed: bytes):
        self._state = hashlib.sha256(b"privads/v1/vrf/nonce" + scalar_bytes(sk) + seed).digest()

    def getrandbits(self, n: int) -> int:
        out = b""
        counter = 0
        while len(out) * 8 < n:
            out += hashlib.sha256(self._state + counter.to_bytes(4, "big")).digest()
            counter += 1
        return int.from_bytes(out, "big") >> (len(out) * 8 - n)
