"""Encrypted client<->proxy channel.

Key agreement is an ephemeral X25519 exchange; both sides HKDF the
shared secret (bound to both public keys) into one ChaCha20-Poly1305
key. Every message carries an explicit 8-byte counter; the nonce is a
4-byte direction tag plus that counter, so nonces never repeat and a
replayed ciphertext is rejected by the strictly-increasing counter
check before anything is decrypted. The frame type (and the k-override
byte on requests) ride in the AEAD associated data, so header tampering
also fails authentication.
"""

from __future__ import annotations

import hashlib

from cryptography.exceptions import InvalidTag
from cryptography.hazmat.primitives import hashes
from cryptography.hazmat.primitives.asymmetric.x25519 import (
    X25519PrivateKey,
    X25519PublicKey,
)
from cryptography.hazmat.primitives.ciphers.aead import ChaCha20Poly1305
from cryptography.hazmat.primitives.kdf.hkdf import HKDF

_KEY_INFO = b"chaffsearch channel v1"
_DIR_CLIENT = b"C2P\x00"
_DIR_PROXY = b"P2C\x00"

COUNTER_LEN = 8


class ChannelError(Exception):
    pass


class ReplayError(ChannelError):
    """Message counter did not advance: replayed or reordered ciphertext."""


class AuthenticationError(ChannelError):
    """Ciphertext failed AEAD authentication."""


def generate_keypair() -> tuple[X25519PrivateKey, bytes]:
    priv = X25519PrivateKey.generate()
    pub = priv.public_key().public_bytes_raw()
    return priv, pub


def derive_key(priv: X25519PrivateKey, peer_pub: bytes, client_pub: bytes, server_pub: bytes) -> bytes:
    shared = priv.exchange(X25519PublicKey.from_public_bytes(peer_pub))
    return HKDF(
        algorithm=hashes.SHA256(),
        length=32,
        salt=None,
        info=_KEY_INFO + client_pub + server_pub,
    ).derive(shared)


class SecureChannel:
    """One side of an established session."""

    def __init__(self, key: bytes, is_client: bool, client_pub: bytes, server_pub: bytes):
        self._aead = ChaCha20Poly1305(key)
        self._send_dir = _DIR_CLIENT if is_client else _DIR_PROXY
        self._recv_dir = _DIR_PROXY if is_client else _DIR_CLIENT
        self._send_counter = 0
        self._recv_counter = 0
        self.session_id = hashlib.sha256(client_pub + server_pub).hexdigest()[:16]

    def encrypt(self, plaintext: bytes, aad: bytes = b"") -> bytes:
        """Seal ``plaintext``; returns counter || ciphertext."""
        self._send_counter += 1
        counter = self._send_counter.to_bytes(COUNTER_LEN, "big")
        return counter + self._aead.encrypt(self._send_dir + counter, plaintext, aad)

    def decrypt(self, message: bytes, aad: bytes = b"") -> bytes:
        """Open counter || ciphertext, enforcing counter monotonicity."""
        if len(message) <= COUNTER_LEN:
            raise AuthenticationError("message too short")
        counter = int.from_bytes(message[:COUNTER_LEN], "big")
        if counter <= self._recv_counter:
            raise ReplayError(
                f"counter {counter} does not advance past {self._recv_counter}"
            )
        try:
            plaintext = self._aead.decrypt(
                self._recv_dir + message[:COUNTER_LEN], message[COUNTER_LEN:], aad
            )
        except InvalidTag as exc:
            raise AuthenticationError("ciphertext failed authentication") from exc
        self._recv_counter = counter
        return plaintext


def client_channel(priv: X25519PrivateKey, client_pub: bytes, server_pub: bytes) -> SecureChannel:
    key = derive_key(priv, server_pub, client_pub, server_pub)
    return SecureChannel(key, is_client=True, client_pub=client_pub, server_pub=server_pub)


def server_channel(priv: X25519PrivateKey, client_pub: bytes, server_pub: bytes) -> SecureChannel:
    key = derive_key(priv, client_pub, client_pub, server_pub)
    return SecureChannel(key, is_client=False, client_pub=client_pub, server_pub=server_pub)
