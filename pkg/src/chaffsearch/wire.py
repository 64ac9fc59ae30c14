"""Client-facing wire protocol: length-prefixed binary frames.

Frame layout: 1-byte type, 8-byte big-endian payload length, payload.

Types:
  HANDSHAKE  client->proxy: 32-byte ephemeral public key
             proxy->client: 32-byte ephemeral public key + evidence JSON
  REQUEST    1-byte k override (255 = proxy default) + 8-byte counter +
             AEAD ciphertext of the UTF-8 query
  RESPONSE   8-byte counter + AEAD ciphertext of the result JSON
  ERROR      1-byte encrypted flag; 0 -> plaintext JSON body,
             1 -> 8-byte counter + AEAD ciphertext of a JSON body
"""

from __future__ import annotations

HANDSHAKE = 1
REQUEST = 2
RESPONSE = 3
ERROR = 4

_KNOWN_TYPES = frozenset((HANDSHAKE, REQUEST, RESPONSE, ERROR))

HEADER_LEN = 9
MAX_PAYLOAD = 16 * 1024 * 1024

K_USE_DEFAULT = 255


class FrameError(ValueError):
    pass


def encode_frame(ftype: int, payload: bytes) -> bytes:
    if ftype not in _KNOWN_TYPES:
        raise FrameError(f"unknown frame type {ftype}")
    if len(payload) > MAX_PAYLOAD:
        raise FrameError(f"payload of {len(payload)} bytes exceeds limit")
    return bytes([ftype]) + len(payload).to_bytes(8, "big") + payload


class FrameReader:
    """Incremental frame splitter for a raw byte stream."""

    def __init__(self, max_payload: int = MAX_PAYLOAD):
        self._buf = bytearray()
        self._max = max_payload

    def feed(self, data: bytes) -> list[tuple[int, bytes]]:
        """Absorb bytes; return every frame completed by them."""
        self._buf.extend(data)
        frames = []
        while len(self._buf) >= HEADER_LEN:
            ftype = self._buf[0]
            if ftype not in _KNOWN_TYPES:
                raise FrameError(f"unknown frame type {ftype}")
            length = int.from_bytes(self._buf[1:HEADER_LEN], "big")
            if length > self._max:
                raise FrameError(f"frame payload of {length} bytes exceeds limit")
            if len(self._buf) < HEADER_LEN + length:
                break
            payload = bytes(self._buf[HEADER_LEN : HEADER_LEN + length])
            del self._buf[: HEADER_LEN + length]
            frames.append((ftype, payload))
        return frames

    def pending(self) -> int:
        return len(self._buf)
