"""Round message envelope, length-prefixed framing, and payload codecs.

Frame layout: 4-byte big-endian body length, then the body:

    kind:u8 | round_id:u32 | sender_id:u32 | payload_len:u32 | payload | crc32:u32

The CRC covers everything before it. Payload bodies reuse the binary wire
formats of the ring and scheme objects they carry.
"""

import struct
import zlib
from dataclasses import dataclass
from enum import IntEnum

import numpy as np

from .. import mkhe, ring
from ..errors import ConfigurationError, FrameError
from ..fedavg import ModelWeights
from ..params import EncodingParams, RingParams

SERVER_ID = 0
BROADCAST = -1

DEFAULT_MAX_FRAME = 64 * 1024 * 1024


class MessageKind(IntEnum):
    JOIN_REQUEST = 1
    PARAMS_ANNOUNCE = 2
    PUBKEY_SHARE = 3
    AGG_PK_BROADCAST = 4
    GLOBAL_MODEL = 5
    ENCRYPTED_UPDATE = 6
    CSUM1_BROADCAST = 7
    DEC_SHARE = 8
    ROUND_RESULT = 9
    ABORT = 10


@dataclass(frozen=True)
class RoundMessage:
    kind: MessageKind
    round_id: int
    sender_id: int
    payload: bytes = b""


_ENVELOPE = struct.Struct("<BIII")


def encode_message(msg: RoundMessage) -> bytes:
    head = _ENVELOPE.pack(int(msg.kind), msg.round_id, msg.sender_id, len(msg.payload))
    body = head + msg.payload
    return body + zlib.crc32(body).to_bytes(4, "little")


def decode_message(body: bytes) -> RoundMessage:
    if len(body) < _ENVELOPE.size + 4:
        raise FrameError("message body too short")
    crc = int.from_bytes(body[-4:], "little")
    if zlib.crc32(body[:-4]) != crc:
        raise FrameError("checksum mismatch")
    kind, round_id, sender_id, payload_len = _ENVELOPE.unpack_from(body)
    payload = body[_ENVELOPE.size : -4]
    if len(payload) != payload_len:
        raise FrameError("payload length disagrees with header")
    try:
        kind = MessageKind(kind)
    except ValueError:
        raise FrameError(f"unknown message kind {kind}") from None
    return RoundMessage(kind, round_id, sender_id, payload)


def encode_frame(msg: RoundMessage, max_frame: int = DEFAULT_MAX_FRAME) -> bytes:
    body = encode_message(msg)
    if len(body) > max_frame:
        raise FrameError(f"frame of {len(body)} bytes exceeds limit {max_frame}")
    return len(body).to_bytes(4, "big") + body


def decode_frame(buf: bytes, max_frame: int = DEFAULT_MAX_FRAME) -> tuple[RoundMessage, int]:
    """Parse one frame from the head of buf; returns (message, bytes consumed)."""
    if len(buf) < 4:
        raise FrameError("truncated frame header")
    length = int.from_bytes(buf[:4], "big")
    if length > max_frame:
        raise FrameError(f"frame of {length} bytes exceeds limit {max_frame}")
    if len(buf) < 4 + length:
        raise FrameError("truncated frame")
    return decode_message(buf[4 : 4 + length]), 4 + length


# --- payload codecs ----------------------------------------------------------

_PARAMS = struct.Struct("<IQdd32sdIIIIdB")
_OPTIMIZERS = ("sgd", "adam")


def params_payload(rp: RingParams, ep: EncodingParams, plan) -> bytes:
    return _PARAMS.pack(
        rp.n,
        rp.q,
        rp.sigma_err,
        rp.sigma_flood,
        rp.seed,
        ep.scale,
        plan.devices,
        plan.rounds,
        plan.local_epochs,
        plan.batch_size,
        plan.learning_rate,
        _OPTIMIZERS.index(plan.optimizer),
    )


def parse_params_payload(payload: bytes):
    from .config import RoundPlan

    try:
        n, q, s_err, s_flood, seed, scale, devices, rounds, epochs, batch, lr, opt = _PARAMS.unpack(
            payload
        )
        rp = RingParams(n, q, s_err, s_flood, seed)
        ep = EncodingParams(scale, n // 2)
        plan = RoundPlan(devices, rounds, epochs, batch, lr, _OPTIMIZERS[opt])
    except (struct.error, IndexError, ConfigurationError) as exc:
        raise FrameError(f"bad params payload: {exc}") from exc
    return rp, ep, plan


def weights_payload(w: ModelWeights) -> bytes:
    out = [len(w.layout).to_bytes(1, "little")]
    for shape in w.layout:
        out.append(len(shape).to_bytes(1, "little"))
        out.extend(d.to_bytes(4, "little") for d in shape)
    out.append(len(w.values).to_bytes(8, "little"))
    out.append(np.asarray(w.values, dtype="<f8").tobytes())
    return b"".join(out)


def parse_weights_payload(payload: bytes) -> ModelWeights:
    try:
        offset = 0
        n_layers = payload[offset]
        offset += 1
        layout = []
        for _ in range(n_layers):
            ndim = payload[offset]
            offset += 1
            dims = tuple(
                int.from_bytes(payload[offset + 4 * i : offset + 4 * i + 4], "little")
                for i in range(ndim)
            )
            offset += 4 * ndim
            layout.append(dims)
        count = int.from_bytes(payload[offset : offset + 8], "little")
        offset += 8
        values = np.frombuffer(payload, dtype="<f8", count=count, offset=offset)
        return ModelWeights(values, tuple(layout))
    except (IndexError, ValueError, ConfigurationError) as exc:
        raise FrameError(f"bad weights payload: {exc}") from exc


def update_payload(weight_count: int, chunks) -> bytes:
    out = [weight_count.to_bytes(4, "little"), len(chunks).to_bytes(4, "little")]
    out.extend(mkhe.serialize_ciphertext(ct) for ct in chunks)
    return b"".join(out)


def parse_update_payload(payload: bytes, rp: RingParams):
    try:
        weight_count = int.from_bytes(payload[:4], "little")
        n_chunks = int.from_bytes(payload[4:8], "little")
        offset = 8
        chunks = []
        for _ in range(n_chunks):
            ct, offset = mkhe.parse_ciphertext(payload, rp, offset)
            chunks.append(ct)
        return weight_count, chunks
    except ConfigurationError as exc:
        raise FrameError(f"bad encrypted update: {exc}") from exc


def csum1_payload(count: int, contributors, c1_chunks) -> bytes:
    out = [
        count.to_bytes(4, "little"),
        len(contributors).to_bytes(4, "little"),
        b"".join(i.to_bytes(4, "little") for i in contributors),
        len(c1_chunks).to_bytes(4, "little"),
    ]
    out.extend(ring.to_bytes(c1) for c1 in c1_chunks)
    return b"".join(out)


def parse_csum1_payload(payload: bytes, rp: RingParams):
    try:
        count = int.from_bytes(payload[:4], "little")
        n_ids = int.from_bytes(payload[4:8], "little")
        offset = 8
        contributors = tuple(
            int.from_bytes(payload[offset + 4 * i : offset + 4 * i + 4], "little")
            for i in range(n_ids)
        )
        offset += 4 * n_ids
        n_chunks = int.from_bytes(payload[offset : offset + 4], "little")
        offset += 4
        chunks = []
        for _ in range(n_chunks):
            c1, offset = ring.from_bytes(payload, rp, offset)
            chunks.append(c1)
        return count, contributors, chunks
    except ConfigurationError as exc:
        raise FrameError(f"bad ciphertext-sum broadcast: {exc}") from exc


def decshare_payload(shares) -> bytes:
    out = [len(shares).to_bytes(4, "little")]
    out.extend(mkhe.serialize_decryption_share(sh) for sh in shares)
    return b"".join(out)


def parse_decshare_payload(payload: bytes, rp: RingParams):
    try:
        n_chunks = int.from_bytes(payload[:4], "little")
        offset = 4
        shares = []
        for _ in range(n_chunks):
            sh, offset = mkhe.parse_decryption_share(payload, rp, offset)
            shares.append(sh)
        return shares
    except ConfigurationError as exc:
        raise FrameError(f"bad decryption share: {exc}") from exc


def abort_payload(reason: str) -> bytes:
    return reason.encode()


def parse_abort_payload(payload: bytes) -> str:
    return payload.decode(errors="replace")
