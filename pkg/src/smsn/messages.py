"""Wire messages for the six authentication protocols.

Every message is a tagged variant with a fixed envelope (variant, family,
sender, receiver, instance token, flags). The envelope and routing hints
are framing; the semantic payload lives in one or two authenticated
ciphertexts plus, for some variants, a ticket riding in the clear (it is
already ciphertext).

Cost accounting classes: nonces, identities, intervals, and timestamps are
int-class (4 bytes); keys and digests are key-class (32 bytes); profiles
and piggybacked data are opaque (deployment-defined, accounted at zero);
envelope and routing hints are framing and never accounted. A message's
accounted size is fixed by its builder from the fields it actually sealed,
so it is invariant under framing changes.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from enum import IntEnum

from .crypto import NodeId, encode_fields, split_fields
from .errors import ParseError
from .ticket import Ticket, parse_ticket, serialize_ticket


class Family(IntEnum):
    HELLO = 0
    KEYING = 1
    SAAP = 2
    SRP1 = 3
    SRP2 = 4
    UAAP = 5
    USIAP = 6
    USEAP = 7
    DATA = 8
    REISSUE = 9


class Variant(IntEnum):
    HELLO = 1
    JOIN = 2
    FORWARD_JOIN = 3
    GRANT = 4
    GRANT_FORWARD = 5
    CONFIRM_TO_BS = 6
    ACCEPT = 7
    SWITCH_REQ = 8
    SWITCH_RESP = 9
    SWITCH_CONFIRM = 10
    USER_JOIN = 11
    USER_GRANT = 12
    USER_CONFIRM = 13
    SENSOR_ACCESS_REQ = 14
    SENSOR_FORWARD = 15
    SINK_KEY_RELEASE = 16
    PRIVATE_CONFIRM = 17
    KEY_MSG = 18
    TICKET_REISSUE = 19
    DATA = 20
    DATA_ACK = 21
    DATA_FORWARD = 22


_F_RESEND = 0x01
_F_BROADCAST = 0x02
_F_BS_HINT = 0x04
_F_TICKET = 0x08
_F_CT = 0x10
_F_CT2 = 0x20
_F_HELLO = 0x40
_F_PAYLOAD = 0x80


@dataclass
class Message:
    variant: Variant
    family: Family
    sender: NodeId
    receiver: NodeId
    instance: int
    resend: bool = False
    broadcast: bool = False
    bs_hint: NodeId | None = None
    ticket: Ticket | None = None
    ct: bytes = b""
    ct2: bytes = b""
    payload: bytes = b""
    hello_bs: NodeId | None = None
    hello_sink: NodeId | None = None
    # accounted semantic field totals, set by the builder (send-side concern)
    acct_ints: int = 0
    acct_cks: int = 0
    acct_f: int = 0

    def accounted_bytes(self) -> int:
        return 4 * self.acct_ints + 32 * self.acct_cks + 8 * self.acct_f


def serialize_message(msg: Message) -> bytes:
    flags = 0
    if msg.resend:
        flags |= _F_RESEND
    if msg.broadcast:
        flags |= _F_BROADCAST
    if msg.bs_hint is not None:
        flags |= _F_BS_HINT
    if msg.ticket is not None:
        flags |= _F_TICKET
    if msg.ct:
        flags |= _F_CT
    if msg.ct2:
        flags |= _F_CT2
    if msg.hello_bs is not None:
        flags |= _F_HELLO
    if msg.payload:
        flags |= _F_PAYLOAD
    out = bytearray()
    out += struct.pack(">BBB", msg.variant, msg.family, flags)
    out += msg.sender.encode()
    out += msg.receiver.encode()
    out += struct.pack(">I", msg.instance)
    if msg.bs_hint is not None:
        out += msg.bs_hint.encode()
    if msg.hello_bs is not None:
        out += msg.hello_bs.encode()
        out += msg.hello_sink.encode()
    for blob, present in (
        (serialize_ticket(msg.ticket) if msg.ticket else b"", msg.ticket is not None),
        (msg.ct, bool(msg.ct)),
        (msg.ct2, bool(msg.ct2)),
        (msg.payload, bool(msg.payload)),
    ):
        if present:
            out += struct.pack(">H", len(blob))
            out += blob
    return bytes(out)


def parse_message(raw: bytes) -> Message:
    if len(raw) < 17:
        raise ParseError("message too short")
    variant_b, family_b, flags = struct.unpack_from(">BBB", raw, 0)
    try:
        variant = Variant(variant_b)
        family = Family(family_b)
    except ValueError as exc:
        raise ParseError(f"unknown variant/family {variant_b}/{family_b}") from exc
    sender = NodeId.decode(raw[3:8])
    receiver = NodeId.decode(raw[8:13])
    (instance,) = struct.unpack_from(">I", raw, 13)
    pos = 17
    msg = Message(
        variant=variant,
        family=family,
        sender=sender,
        receiver=receiver,
        instance=instance,
        resend=bool(flags & _F_RESEND),
        broadcast=bool(flags & _F_BROADCAST),
    )
    if flags & _F_BS_HINT:
        msg.bs_hint = NodeId.decode(raw[pos : pos + 5])
        pos += 5
    if flags & _F_HELLO:
        msg.hello_bs = NodeId.decode(raw[pos : pos + 5])
        msg.hello_sink = NodeId.decode(raw[pos + 5 : pos + 10])
        pos += 10

    def take() -> bytes:
        nonlocal pos
        if pos + 2 > len(raw):
            raise ParseError("truncated section length")
        (length,) = struct.unpack_from(">H", raw, pos)
        if pos + 2 + length > len(raw):
            raise ParseError("truncated section body")
        blob = raw[pos + 2 : pos + 2 + length]
        pos += 2 + length
        return blob

    if flags & _F_TICKET:
        msg.ticket = parse_ticket(take())
    if flags & _F_CT:
        msg.ct = take()
    if flags & _F_CT2:
        msg.ct2 = take()
    if flags & _F_PAYLOAD:
        msg.payload = take()
    if pos != len(raw):
        raise ParseError("trailing bytes after message")
    return msg


# ---------------------------------------------------------------------------
# Ciphertext payload codecs. Each returns the canonical plaintext for one
# sealed section; parsers raise ParseError on malformed content. When
# per-message timestamps are enabled a stamp field is appended inside the
# sealed section so intermediaries cannot rewrite it.


def _u32(raw: bytes, what: str) -> int:
    if len(raw) != 4:
        raise ParseError(f"malformed {what}")
    return struct.unpack(">I", raw)[0]


def _with_stamp(parts: list, stamp: int | None) -> bytes:
    if stamp is not None:
        parts.append(stamp)
    return encode_fields(*parts)


def _pop_stamp(fields: list[bytes], expected: int) -> tuple[list[bytes], int | None]:
    if len(fields) == expected + 1:
        return fields[:-1], _u32(fields[-1], "stamp")
    if len(fields) == expected:
        return fields, None
    raise ParseError("unexpected field count")


def join_pt(node: NodeId, n0: int, stamp: int | None = None) -> bytes:
    return _with_stamp([node, n0], stamp)


def parse_join(pt: bytes) -> tuple[NodeId, int, int | None]:
    fields, stamp = _pop_stamp(split_fields(pt), 2)
    return NodeId.decode(fields[0]), _u32(fields[1], "n0"), stamp


def forward_pt(sink: NodeId, n2: int, inner: bytes, stamp: int | None = None) -> bytes:
    return _with_stamp([sink, n2, inner], stamp)


def parse_forward(pt: bytes) -> tuple[NodeId, int, bytes, int | None]:
    fields, stamp = _pop_stamp(split_fields(pt), 3)
    return NodeId.decode(fields[0]), _u32(fields[1], "n2"), fields[2], stamp


def switch_forward_pt(
    sink: NodeId, n2: int, ticket_blob: bytes, switch_ct: bytes, stamp: int | None = None
) -> bytes:
    return _with_stamp([sink, n2, ticket_blob, switch_ct], stamp)


def parse_switch_forward(pt: bytes) -> tuple[NodeId, int, bytes, bytes, int | None]:
    fields, stamp = _pop_stamp(split_fields(pt), 4)
    return NodeId.decode(fields[0]), _u32(fields[1], "n2"), fields[2], fields[3], stamp


def grant_pt(
    n1: int, n2_resp: int, alert: bool, ticket_blob: bytes, stamp: int | None = None
) -> bytes:
    return _with_stamp([n1, n2_resp, b"\x01" if alert else b"\x00", ticket_blob], stamp)


def parse_grant(pt: bytes) -> tuple[int, int, bool, bytes, int | None]:
    fields, stamp = _pop_stamp(split_fields(pt), 4)
    return (
        _u32(fields[0], "n1"),
        _u32(fields[1], "n2_resp"),
        fields[2] == b"\x01",
        fields[3],
        stamp,
    )


def u0_pt(
    challenge_resp: int | bytes,
    n1: int,
    t_r: int,
    k_s: bytes,
    ticket_blob: bytes,
    stamp: int | None = None,
) -> bytes:
    """Grant payload for the initiator: response, challenge, registration
    time, session key, and the ticket itself. The response is the join
    nonce + 1 on activation, or the echoed nonce hash on a cross-group
    switch (length distinguishes them)."""
    return _with_stamp([challenge_resp, n1, t_r, k_s, ticket_blob], stamp)


def parse_u0(pt: bytes) -> tuple[int | bytes, int, int, bytes, bytes, int | None]:
    fields, stamp = _pop_stamp(split_fields(pt), 5)
    resp: int | bytes = fields[0] if len(fields[0]) != 4 else _u32(fields[0], "resp")
    return resp, _u32(fields[1], "n1"), _u32(fields[2], "t_r"), fields[3], fields[4], stamp


def nonce_pt(value: int, stamp: int | None = None) -> bytes:
    return _with_stamp([value], stamp)


def parse_nonce(pt: bytes) -> tuple[int, int | None]:
    fields, stamp = _pop_stamp(split_fields(pt), 1)
    return _u32(fields[0], "nonce"), stamp


def switch_req_pt(node: NodeId, proof: bytes, stamp: int | None = None) -> bytes:
    return _with_stamp([node, proof], stamp)


def parse_switch_req(pt: bytes) -> tuple[NodeId, bytes, int | None]:
    fields, stamp = _pop_stamp(split_fields(pt), 2)
    return NodeId.decode(fields[0]), fields[1], stamp


def switch_resp_pt(
    secret_resp: int, n1: int, piggyback: bytes = b"", stamp: int | None = None
) -> bytes:
    return _with_stamp([secret_resp, n1, piggyback], stamp)


def parse_switch_resp(pt: bytes) -> tuple[int, int, bytes, int | None]:
    fields, stamp = _pop_stamp(split_fields(pt), 3)
    return _u32(fields[0], "secret_resp"), _u32(fields[1], "n1"), fields[2], stamp


def switch_confirm_pt(n1: int, piggyback: bytes = b"", stamp: int | None = None) -> bytes:
    return _with_stamp([n1, piggyback], stamp)


def parse_switch_confirm(pt: bytes) -> tuple[int, bytes, int | None]:
    fields, stamp = _pop_stamp(split_fields(pt), 2)
    return _u32(fields[0], "n1"), fields[1], stamp


def key_release_pt(k_s: bytes, n1_resp: int, stamp: int | None = None) -> bytes:
    return _with_stamp([k_s, n1_resp], stamp)


def parse_key_release(pt: bytes) -> tuple[bytes, int, int | None]:
    fields, stamp = _pop_stamp(split_fields(pt), 2)
    return fields[0], _u32(fields[1], "n1_resp"), stamp


def key_msg_pt(td: int, n0_group: int, epoch: int) -> bytes:
    return encode_fields(td, n0_group, epoch)


def parse_key_msg(pt: bytes) -> tuple[int, int, int]:
    fields = split_fields(pt)
    if len(fields) != 3:
        raise ParseError("malformed key message")
    return _u32(fields[0], "td"), _u32(fields[1], "n0"), _u32(fields[2], "epoch")


def reissue_pt(ticket_blob: bytes, interval: int, epoch: int) -> bytes:
    return encode_fields(ticket_blob, interval, epoch)


def parse_reissue(pt: bytes) -> tuple[bytes, int, int]:
    fields = split_fields(pt)
    if len(fields) != 3:
        raise ParseError("malformed reissue payload")
    return fields[0], _u32(fields[1], "interval"), _u32(fields[2], "epoch")


def data_pt(n: int, payload: bytes, stamp: int | None = None) -> bytes:
    return _with_stamp([n, payload], stamp)


def parse_data(pt: bytes) -> tuple[int, bytes, int | None]:
    fields, stamp = _pop_stamp(split_fields(pt), 2)
    return _u32(fields[0], "n"), fields[1], stamp


def data_forward_pt(origin: NodeId, payload: bytes) -> bytes:
    return encode_fields(origin, payload)


def parse_data_forward(pt: bytes) -> tuple[NodeId, bytes]:
    fields = split_fields(pt)
    if len(fields) != 2:
        raise ParseError("malformed data forward")
    return NodeId.decode(fields[0]), fields[1]
