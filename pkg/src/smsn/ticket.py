"""Construction, serialization, and verification of authentication tickets.

A ticket has two encrypted halves. The inner half carries the holder's
identity, session key, secret nonce, and profile, sealed under an interval
key that only group-key holders can reconstruct. The outer half, sealed
under the group key, carries the identity again, the hash of the holder's
join nonce (the ingredient a verifier needs to reconstruct the interval
key), and mode-specific retrieval info locating the right interval:

  mode 1 - the scrambled 4-byte index value, found by linear search
  mode 2 - the interval number itself, no search needed
  mode 3 - the index value plus a hash vector steering a binary-tree search

Verification tries the current chain first, then the retained previous
chain, so tickets from the last epoch stay valid through the moving-window
grace period.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

from . import crypto, keychain
from .crypto import KeyMaterial, NodeId
from .errors import (
    ConfigError,
    DecryptionError,
    InvalidArgument,
    InvalidTicket,
    ParseError,
    TreeSearchMiss,
    WrongGroup,
)

MODE_INDEX = 1
MODE_INTERVAL = 2
MODE_TREE = 3

_FLAG_GROUP_HASH = 0x01
_FLAG_ROOT = 0x02


@dataclass(frozen=True)
class Profile:
    """Registered identity of a sensor or user node.

    The long-term secret n_s never leaves the base-station store; the
    serialized form embedded in tickets omits it.
    """

    node: NodeId
    n_s: int
    permissions: int
    registered_at: int

    def public_blob(self) -> bytes:
        return crypto.encode_fields(self.node, self.permissions, self.registered_at)


@dataclass(frozen=True)
class ProfileInfo:
    """Profile fields as carried inside a ticket (no long-term secret)."""

    node: NodeId
    permissions: int
    registered_at: int

    @classmethod
    def from_blob(cls, blob: bytes) -> "ProfileInfo":
        fields = crypto.split_fields(blob)
        if len(fields) != 3 or len(fields[1]) != 4 or len(fields[2]) != 4:
            raise ParseError("malformed profile blob")
        return cls(
            NodeId.decode(fields[0]),
            struct.unpack(">I", fields[1])[0],
            struct.unpack(">I", fields[2])[0],
        )


@dataclass(frozen=True)
class TicketInner:
    node: NodeId
    session_key: KeyMaterial
    secret: int
    profile: ProfileInfo


@dataclass(frozen=True)
class RetrievalInfo:
    """Mode-specific hint letting a verifier locate the interval key."""

    mode: int
    index: bytes | None = None
    interval: int | None = None
    hash_vector: tuple[bytes, ...] = ()
    root: bytes | None = None


@dataclass(frozen=True)
class Ticket:
    mode: int
    inner_ct: bytes
    outer_ct: bytes
    has_group_hash: bool = False
    has_root: bool = False
    hv_len: int = 0

    def accounted_fields(self) -> tuple[int, int]:
        """(int-class, key-class) field counts for the cost model.

        Inner: identity + session key + secret nonce (profile is opaque
        deployment metadata, accounted at zero). Outer: identity, nonce
        hash, one locator integer, plus optional group hash and, for
        mode 3, the tree digests.
        """
        ints = 4
        cks = 2
        if self.has_group_hash:
            cks += 1
        if self.mode == MODE_TREE:
            cks += self.hv_len + (1 if self.has_root else 0)
        return ints, cks


@dataclass(frozen=True)
class VerifiedTicket:
    """Everything a verifier learns from a successful ticket verification."""

    inner: TicketInner
    hint: KeyMaterial
    interval: int
    epoch: int
    group_hash: bytes | None


def issue_ticket(
    state: keychain.SinkKeyState,
    profile: Profile,
    n0: int,
    mode: int,
    k: int,
    secret: int | None = None,
) -> tuple[Ticket, KeyMaterial]:
    """Build a ticket for interval k of the current chain.

    n0 is the secret join nonce; its hash keys the interval derivation and
    rides in the outer half so any group-key holder can reconstruct the
    interval key. `secret` overrides the inner nonce (user tickets carry a
    station-generated nonce instead of the join nonce).

    Returns the ticket and the session key sealed inside it.
    """
    chain = state.current
    if chain is None:
        raise ConfigError("no active key chain")
    if mode not in (MODE_INDEX, MODE_INTERVAL, MODE_TREE):
        raise InvalidArgument(f"unknown ticket mode {mode}")
    if not 0 <= k < chain.length:
        raise InvalidArgument(f"interval {k} out of range")
    if mode == MODE_TREE and state.trees.get(chain.epoch) is None:
        raise ConfigError("mode 3 requires a power-of-two chain with a hash tree")

    hint = crypto.hash_fields(n0)
    k_l = crypto.interval_key(chain.generators[k], hint)
    k_s = crypto.derive_session_key(k_l, profile.n_s)
    inner_secret = n0 if secret is None else secret
    inner_pt = crypto.encode_fields(profile.node, k_s, inner_secret, profile.public_blob())
    inner_ct = crypto.encrypt(k_l, inner_pt)

    vector = state.vectors[chain.epoch]
    ghash = state.group_hash if state.group_hash is not None else b""
    outer_parts: list[bytes | int | NodeId] = [profile.node, hint, ghash]
    hv: tuple[bytes, ...] = ()
    root = b""
    if mode == MODE_INDEX:
        outer_parts.append(vector.values[k])
    elif mode == MODE_INTERVAL:
        outer_parts.append(k)
    else:
        tree = state.trees[chain.epoch]
        hv = keychain.select_hash_vector(tree, k)
        root = tree.root if state.include_root else b""
        outer_parts += [vector.values[k], root, *hv]
    outer_ct = crypto.encrypt(state.group_key, crypto.encode_fields(*outer_parts))

    ticket = Ticket(
        mode=mode,
        inner_ct=inner_ct,
        outer_ct=outer_ct,
        has_group_hash=bool(ghash),
        has_root=bool(root),
        hv_len=len(hv),
    )
    return ticket, k_s


def _parse_outer(ticket: Ticket, plaintext: bytes) -> tuple[NodeId, KeyMaterial, bytes, RetrievalInfo]:
    fields = crypto.split_fields(plaintext)
    if len(fields) < 4:
        raise InvalidTicket("outer half too short")
    node = NodeId.decode(fields[0])
    hint = fields[1]
    ghash = fields[2]
    if ticket.mode == MODE_INDEX:
        info = RetrievalInfo(MODE_INDEX, index=fields[3])
    elif ticket.mode == MODE_INTERVAL:
        if len(fields[3]) != 4:
            raise InvalidTicket("malformed interval field")
        info = RetrievalInfo(MODE_INTERVAL, interval=struct.unpack(">I", fields[3])[0])
    else:
        if len(fields) < 5:
            raise InvalidTicket("outer half too short for mode 3")
        root = fields[4] or None
        info = RetrievalInfo(
            MODE_TREE, index=fields[3], hash_vector=tuple(fields[5:]), root=root
        )
    return node, hint, ghash, info


def _locate_interval(
    state: keychain.SinkKeyState,
    chain: keychain.KeyChain,
    info: RetrievalInfo,
    check_root: bool,
) -> int | None:
    if info.mode == MODE_INTERVAL:
        return info.interval if 0 <= info.interval < chain.length else None
    if info.mode == MODE_INDEX:
        return state.vectors[chain.epoch].find(info.index)
    tree = state.trees.get(chain.epoch)
    if tree is None:
        return None
    if check_root and info.root is not None and info.root != tree.root:
        return None
    try:
        return keychain.search_tree(tree, info.hash_vector, info.index)
    except TreeSearchMiss:
        return None


def verify_ticket(
    state: keychain.SinkKeyState,
    ticket: Ticket,
    check_root: bool = True,
) -> VerifiedTicket:
    """Resolve the interval, derive its key, and open the ticket.

    Tries the current chain first, then the retained previous chain (the
    moving-window grace). Raises WrongGroup when the ticket names a group
    hash other than the verifier's, InvalidTicket for everything else.
    """
    try:
        outer_pt = crypto.decrypt(state.group_key, ticket.outer_ct)
    except DecryptionError as exc:
        raise InvalidTicket("outer half does not decrypt under group key") from exc
    node, hint, ghash, info = _parse_outer(ticket, outer_pt)
    if ghash and state.group_hash is not None and ghash != state.group_hash:
        raise WrongGroup("ticket was issued for a different group")

    for chain in state.chains():
        k = _locate_interval(state, chain, info, check_root)
        if k is None:
            continue
        k_l = crypto.interval_key(chain.generators[k], hint)
        try:
            inner_pt = crypto.decrypt(k_l, ticket.inner_ct)
        except DecryptionError:
            continue
        fields = crypto.split_fields(inner_pt)
        if len(fields) != 4 or len(fields[2]) != 4:
            raise InvalidTicket("malformed inner half")
        inner = TicketInner(
            node=NodeId.decode(fields[0]),
            session_key=fields[1],
            secret=struct.unpack(">I", fields[2])[0],
            profile=ProfileInfo.from_blob(fields[3]),
        )
        if inner.node != node:
            raise InvalidTicket("identity mismatch between ticket halves")
        return VerifiedTicket(
            inner=inner,
            hint=hint,
            interval=k,
            epoch=chain.epoch,
            group_hash=ghash or None,
        )
    raise InvalidTicket("no chain resolves this ticket")


# ---------------------------------------------------------------------------
# Wire framing: mode byte, flags byte, hash-vector length byte, then the two
# length-prefixed ciphertext halves (big-endian u16 lengths).


def serialize_ticket(t: Ticket) -> bytes:
    flags = (_FLAG_GROUP_HASH if t.has_group_hash else 0) | (_FLAG_ROOT if t.has_root else 0)
    return b"".join(
        [
            struct.pack(">BBB", t.mode, flags, t.hv_len),
            struct.pack(">H", len(t.inner_ct)),
            t.inner_ct,
            struct.pack(">H", len(t.outer_ct)),
            t.outer_ct,
        ]
    )


def parse_ticket(raw: bytes) -> Ticket:
    if len(raw) < 7:
        raise ParseError("ticket too short")
    mode, flags, hv_len = struct.unpack_from(">BBB", raw, 0)
    if mode not in (MODE_INDEX, MODE_INTERVAL, MODE_TREE):
        raise ParseError(f"unknown ticket mode {mode}")
    pos = 3
    (inner_len,) = struct.unpack_from(">H", raw, pos)
    pos += 2
    if pos + inner_len + 2 > len(raw):
        raise ParseError("truncated inner ciphertext")
    inner_ct = raw[pos : pos + inner_len]
    pos += inner_len
    (outer_len,) = struct.unpack_from(">H", raw, pos)
    pos += 2
    if pos + outer_len != len(raw):
        raise ParseError("ticket length mismatch")
    outer_ct = raw[pos:]
    return Ticket(
        mode=mode,
        inner_ct=inner_ct,
        outer_ct=outer_ct,
        has_group_hash=bool(flags & _FLAG_GROUP_HASH),
        has_root=bool(flags & _FLAG_ROOT),
        hv_len=hv_len,
    )
