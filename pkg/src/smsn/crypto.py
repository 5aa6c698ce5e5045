"""Deterministic cryptographic primitives and key derivations.

All derived keys are 256-bit values. Hashing and authenticated encryption
are pluggable backends; everything layered on top (chains, interval keys,
session keys, temp keys) is fixed-formula and deterministic so that two
nodes given the same inputs always derive byte-identical material.

Every multi-field value that gets hashed or encrypted is serialized with
the canonical field encoding (2-byte big-endian length prefix per field,
u32 integers as 4-byte big-endian) so there is never ambiguity between
H(a, b) and H(a || b).
"""

from __future__ import annotations

import contextvars
import hashlib
import hmac
import struct
from contextlib import contextmanager
from dataclasses import dataclass
from enum import IntEnum
from typing import Iterator

from cryptography.exceptions import InvalidTag
from cryptography.hazmat.primitives.ciphers.aead import ChaCha20Poly1305

from .errors import DecryptionError, InvalidArgument, ParseError

KEY_LEN = 32
INDEX_LEN = 4
U32_MASK = 0xFFFFFFFF

# KeyMaterial is an opaque 32-byte value; plain bytes keeps call sites light.
KeyMaterial = bytes


class NodeKind(IntEnum):
    BASE_STATION = 1
    SINK = 2
    SENSOR = 3
    USER = 4


@dataclass(frozen=True, order=True)
class NodeId:
    kind: NodeKind
    id: int

    def encode(self) -> bytes:
        return struct.pack(">BI", self.kind, self.id)

    @classmethod
    def decode(cls, raw: bytes) -> "NodeId":
        if len(raw) != 5:
            raise ParseError("node id must be 5 bytes")
        kind, ident = struct.unpack(">BI", raw)
        try:
            return cls(NodeKind(kind), ident)
        except ValueError as exc:
            raise ParseError(f"unknown node kind {kind}") from exc

    def __str__(self) -> str:
        return f"{self.kind.name.lower()}:{self.id}"


# ---------------------------------------------------------------------------
# Instrumentation: protocol-level invocations of hash/encrypt/decrypt are
# tallied into whichever counters are active. Backend internals never tick.


@dataclass
class OpCounter:
    e: int = 0
    h: int = 0
    x: int = 0


_active_counters: contextvars.ContextVar[tuple[OpCounter, ...]] = contextvars.ContextVar(
    "smsn_op_counters", default=()
)


@contextmanager
def count_ops(counter: OpCounter) -> Iterator[OpCounter]:
    token = _active_counters.set(_active_counters.get() + (counter,))
    try:
        yield counter
    finally:
        _active_counters.reset(token)


def _tick(op: str) -> None:
    for counter in _active_counters.get():
        setattr(counter, op, getattr(counter, op) + 1)


# ---------------------------------------------------------------------------
# Canonical field encoding


def encode_u32(value: int) -> bytes:
    if not 0 <= value <= U32_MASK:
        raise InvalidArgument(f"value {value} out of u32 range")
    return struct.pack(">I", value)


def encode_fields(*parts: bytes | int | NodeId) -> bytes:
    """Length-prefix each field (big-endian) in declaration order."""
    out = bytearray()
    for part in parts:
        if isinstance(part, NodeId):
            raw = part.encode()
        elif isinstance(part, int):
            raw = encode_u32(part)
        else:
            raw = bytes(part)
        if len(raw) > 0xFFFF:
            raise InvalidArgument("field longer than 65535 bytes")
        out += struct.pack(">H", len(raw))
        out += raw
    return bytes(out)


def split_fields(data: bytes) -> list[bytes]:
    """Inverse of encode_fields; raises ParseError on malformed bytes."""
    fields: list[bytes] = []
    view = memoryview(data)
    pos = 0
    while pos < len(view):
        if pos + 2 > len(view):
            raise ParseError("truncated field length")
        (length,) = struct.unpack_from(">H", view, pos)
        pos += 2
        if pos + length > len(view):
            raise ParseError("truncated field body")
        fields.append(bytes(view[pos : pos + length]))
        pos += length
    return fields


def wrapping_inc(nonce: int) -> int:
    return (nonce + 1) & U32_MASK


# ---------------------------------------------------------------------------
# Primitive operations (pluggable backends)


def _sha256(data: bytes) -> bytes:
    return hashlib.sha256(data).digest()


class DeterministicAead:
    """ChaCha20-Poly1305 with a nonce synthesized from (key, plaintext).

    Deterministic so that simulation traces are reproducible byte-for-byte;
    the authenticated tag rejects wrong keys and tampered ciphertexts, which
    the protocols rely on for implicit key confirmation.
    """

    def encrypt(self, key: bytes, plaintext: bytes) -> bytes:
        nonce = hmac.new(key, b"smsn.nonce" + plaintext, hashlib.sha256).digest()[:12]
        return nonce + ChaCha20Poly1305(key).encrypt(nonce, plaintext, b"")

    def decrypt(self, key: bytes, ciphertext: bytes) -> bytes:
        if len(ciphertext) < 12 + 16:
            raise DecryptionError("ciphertext too short")
        nonce, body = ciphertext[:12], ciphertext[12:]
        try:
            return ChaCha20Poly1305(key).decrypt(nonce, body, b"")
        except InvalidTag as exc:
            raise DecryptionError("authentication failed") from exc


_hash_backend = _sha256
_cipher_backend = DeterministicAead()


@contextmanager
def use_backends(hash_backend=None, cipher_backend=None) -> Iterator[None]:
    """Temporarily swap the hash and/or cipher backend (tests, experiments)."""
    global _hash_backend, _cipher_backend
    old = (_hash_backend, _cipher_backend)
    if hash_backend is not None:
        _hash_backend = hash_backend
    if cipher_backend is not None:
        _cipher_backend = cipher_backend
    try:
        yield
    finally:
        _hash_backend, _cipher_backend = old


def hash_bytes(data: bytes) -> KeyMaterial:
    """One hash invocation over raw bytes; 32-byte digest."""
    _tick("h")
    digest = _hash_backend(data)
    if len(digest) != KEY_LEN:
        raise InvalidArgument("hash backend must produce 32 bytes")
    return digest


def hash_fields(*parts: bytes | int | NodeId) -> KeyMaterial:
    """One hash invocation over the canonical encoding of several fields."""
    return hash_bytes(encode_fields(*parts))


def encrypt(key: KeyMaterial, plaintext: bytes) -> bytes:
    if len(key) != KEY_LEN:
        raise InvalidArgument("encryption key must be 32 bytes")
    _tick("e")
    return _cipher_backend.encrypt(key, plaintext)


def decrypt(key: KeyMaterial, ciphertext: bytes) -> bytes:
    if len(key) != KEY_LEN:
        raise InvalidArgument("decryption key must be 32 bytes")
    _tick("e")
    return _cipher_backend.decrypt(key, ciphertext)


# ---------------------------------------------------------------------------
# Key derivations


def derive_commitment_generator(td: int, n0_group: int) -> KeyMaterial:
    """Epoch seed for a chain of key generators."""
    if td <= 0:
        raise InvalidArgument("td must be positive")
    return hash_fields(td, n0_group)


def extend_chain(zeta0: KeyMaterial, length: int) -> list[KeyMaterial]:
    """Forward hash chain: element k+1 is the hash of element k."""
    if length < 1:
        raise InvalidArgument("chain length must be >= 1")
    chain = [zeta0]
    for _ in range(length - 1):
        chain.append(hash_bytes(chain[-1]))
    return chain


def index_value(k: int) -> bytes:
    """Scrambled 4-byte index value for interval k (depends only on k)."""
    return hash_fields(k)[:INDEX_LEN]


def interval_key(zeta_k: KeyMaterial, nonce_hash: KeyMaterial) -> KeyMaterial:
    """Ticket-encryption key for one interval and one requester."""
    return hash_fields(zeta_k, nonce_hash)


def derive_interval_pair(zeta_k: KeyMaterial, k: int, n0: int) -> tuple[KeyMaterial, bytes]:
    """Interval key and index value for interval k and join nonce n0."""
    return interval_key(zeta_k, hash_fields(n0)), index_value(k)


def derive_session_key(k_interval: KeyMaterial, n_s: int) -> KeyMaterial:
    """Session key issued alongside a ticket."""
    return hash_fields(k_interval, n_s)


def derive_temp_key(bs: NodeId, n_s: int) -> KeyMaterial:
    """Temporary key shared by a node and a base station.

    The 4-byte station id and 4-byte node secret are XORed, then hashed.
    """
    if bs.kind != NodeKind.BASE_STATION:
        raise InvalidArgument("temp key requires a base-station id")
    xored = bytes(a ^ b for a, b in zip(encode_u32(bs.id), encode_u32(n_s)))
    return hash_fields(xored)


def derive_private_session_key(
    k_s: KeyMaterial, n0: int, n1: int | None = None
) -> KeyMaterial:
    """Per-connection key from a session key and one or two exchanged nonces."""
    if n1 is None:
        return hash_fields(k_s, n0)
    return hash_fields(k_s, n0, n1)
