"""Public-key authenticated sealing of the released label.

Sealed-box construction: ephemeral X25519 key agreement with the client's
public key, HKDF-SHA256 key derivation, ChaCha20-Poly1305 with a fresh random
nonce.  Only the client's secret key opens the box; any bit flip fails the
authentication tag.
"""

from __future__ import annotations

import os
import struct
from dataclasses import dataclass

from cryptography.hazmat.primitives import hashes, serialization
from cryptography.hazmat.primitives.asymmetric.x25519 import X25519PrivateKey, X25519PublicKey
from cryptography.hazmat.primitives.ciphers.aead import ChaCha20Poly1305
from cryptography.hazmat.primitives.kdf.hkdf import HKDF
from cryptography.exceptions import InvalidTag

_INFO = b"pricure-sealed-label/1"


class TamperError(Exception):
    """Sealed result failed authentication (wrong key or modified bytes)."""


@dataclass(frozen=True)
class SealedResult:
    ephemeral_pk: bytes  # 32 bytes
    nonce: bytes         # 12 bytes
    ciphertext: bytes


def generate_keypair() -> tuple[bytes, bytes]:
    """Returns (secret, public) raw 32-byte keys."""
    sk = X25519PrivateKey.generate()
    raw_sk = sk.private_bytes(serialization.Encoding.Raw,
                              serialization.PrivateFormat.Raw,
                              serialization.NoEncryption())
    raw_pk = sk.public_key().public_bytes(serialization.Encoding.Raw,
                                          serialization.PublicFormat.Raw)
    return raw_sk, raw_pk


def _derive(shared: bytes, eph_pk: bytes, client_pk: bytes) -> bytes:
    return HKDF(algorithm=hashes.SHA256(), length=32, salt=eph_pk + client_pk,
                info=_INFO).derive(shared)


def seal(label: int, client_pk: bytes) -> SealedResult:
    eph = X25519PrivateKey.generate()
    eph_pk = eph.public_key().public_bytes(serialization.Encoding.Raw,
                                           serialization.PublicFormat.Raw)
    shared = eph.exchange(X25519PublicKey.from_public_bytes(client_pk))
    key = _derive(shared, eph_pk, client_pk)
    nonce = os.urandom(12)
    ct = ChaCha20Poly1305(key).encrypt(nonce, struct.pack("<I", label), eph_pk)
    return SealedResult(eph_pk, nonce, ct)


def unseal(sealed: SealedResult, client_sk: bytes) -> int:
    sk = X25519PrivateKey.from_private_bytes(client_sk)
    pk = sk.public_key().public_bytes(serialization.Encoding.Raw,
                                      serialization.PublicFormat.Raw)
    shared = sk.exchange(X25519PublicKey.from_public_bytes(sealed.ephemeral_pk))
    key = _derive(shared, sealed.ephemeral_pk, pk)
    try:
        plain = ChaCha20Poly1305(key).decrypt(sealed.nonce, sealed.ciphertext, sealed.ephemeral_pk)
    except InvalidTag:
        raise TamperError("sealed result failed authentication") from None
    return struct.unpack("<I", plain)[0]
