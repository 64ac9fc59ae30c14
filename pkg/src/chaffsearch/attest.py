"""Code measurement and attestation evidence for the simulated enclave.

The trusted side of the proxy is an ordinary set of modules here; its
"measurement" is a SHA-256 digest over their source files, computed
from the installed artifact at runtime. During the handshake the
trusted side signs (measurement, server ephemeral key, client ephemeral
key) with a per-instance Ed25519 identity key and ships the bundle to
the broker, which checks the signature and compares the measurement
against the value it was configured to expect. Changing a single bit of
either side's measurement aborts the handshake.

Without attestation hardware there is no root of trust for the identity
key itself; the signature proves evidence integrity and channel
binding, while measurement trust is exactly as strong as the channel to
whoever told the broker the expected value.
"""

from __future__ import annotations

import hashlib
import importlib
import json

from cryptography.exceptions import InvalidSignature
from cryptography.hazmat.primitives.asymmetric.ed25519 import (
    Ed25519PrivateKey,
    Ed25519PublicKey,
)

# The modules that make up the trusted-side artifact, in measurement order.
TRUSTED_MODULES = (
    "chaffsearch.attest",
    "chaffsearch.channel",
    "chaffsearch.enclave",
    "chaffsearch.filtering",
    "chaffsearch.history",
    "chaffsearch.obfuscate",
    "chaffsearch.sanitize",
    "chaffsearch.wire",
)

_SIG_CONTEXT = b"chaffsearch attest v1"


class AttestationError(Exception):
    pass


class MeasurementMismatch(AttestationError):
    pass


class InvalidEvidence(AttestationError):
    pass


def compute_measurement(module_names: tuple[str, ...] = TRUSTED_MODULES) -> bytes:
    """SHA-256 over the trusted modules' source bytes, name-delimited."""
    h = hashlib.sha256()
    for name in module_names:
        mod = importlib.import_module(name)
        path = mod.__file__
        if path is None:
            raise AttestationError(f"module {name} has no source file")
        with open(path, "rb") as fh:
            source = fh.read()
        h.update(name.encode("utf-8"))
        h.update(len(source).to_bytes(8, "big"))
        h.update(source)
    return h.digest()


class EnclaveIdentity:
    """Per-instance signing key standing in for the hardware quote key."""

    def __init__(self):
        self._key = Ed25519PrivateKey.generate()
        self.public_bytes = self._key.public_key().public_bytes_raw()

    def sign(self, message: bytes) -> bytes:
        return self._key.sign(message)


def _evidence_message(measurement: bytes, server_pub: bytes, client_pub: bytes) -> bytes:
    return _SIG_CONTEXT + measurement + server_pub + client_pub


def make_evidence(
    identity: EnclaveIdentity,
    measurement: bytes,
    server_pub: bytes,
    client_pub: bytes,
) -> bytes:
    """Signed statement binding the code measurement to the channel keys."""
    sig = identity.sign(_evidence_message(measurement, server_pub, client_pub))
    doc = {
        "measurement": measurement.hex(),
        "server_pub": server_pub.hex(),
        "client_pub": client_pub.hex(),
        "identity_pub": identity.public_bytes.hex(),
        "sig": sig.hex(),
    }
    return json.dumps(doc, sort_keys=True).encode("utf-8")


def verify_evidence(
    evidence: bytes,
    expected_measurement: bytes,
    server_pub: bytes,
    client_pub: bytes,
) -> None:
    """Raise unless the evidence is authentic, bound to this channel, and
    carries the expected measurement."""
    try:
        doc = json.loads(evidence.decode("utf-8"))
        measurement = bytes.fromhex(doc["measurement"])
        ev_server_pub = bytes.fromhex(doc["server_pub"])
        ev_client_pub = bytes.fromhex(doc["client_pub"])
        identity_pub = bytes.fromhex(doc["identity_pub"])
        sig = bytes.fromhex(doc["sig"])
    except (ValueError, KeyError, UnicodeDecodeError) as exc:
        raise InvalidEvidence(f"malformed evidence: {exc}") from exc

    try:
        Ed25519PublicKey.from_public_bytes(identity_pub).verify(
            sig, _evidence_message(measurement, ev_server_pub, ev_client_pub)
        )
    except (InvalidSignature, ValueError) as exc:
        raise InvalidEvidence("evidence signature does not verify") from exc

    if ev_server_pub != server_pub or ev_client_pub != client_pub:
        raise InvalidEvidence("evidence is bound to a different channel")
    if measurement != expected_measurement:
        raise MeasurementMismatch(
            f"measurement {measurement.hex()} != expected {expected_measurement.hex()}"
        )
