"""Pydantic request/response models for the federation HTTP API.

Binary protocol payloads (key shares, ciphertext chunks, decryption shares)
travel base64-encoded; their bytes are exactly the wire formats the TCP
transport carries, so sizes and fingerprints agree across transports.
"""

import base64
import binascii

from pydantic import BaseModel, Field, field_validator

from ..errors import FrameError


def b64(data: bytes) -> str:
    return base64.b64encode(data).decode()


def unb64(text: str) -> bytes:
    try:
        return base64.b64decode(text.encode(), validate=True)
    except (binascii.Error, ValueError) as exc:
        raise FrameError(f"bad base64 payload: {exc}") from exc


class JoinRequest(BaseModel):
    device_id: int = Field(ge=1)


class ParamsResponse(BaseModel):
    n: int
    q: int
    sigma_err: float
    sigma_flood: float
    seed_hex: str
    scale: float
    devices: int
    rounds: int
    local_epochs: int
    batch_size: int
    learning_rate: float
    optimizer: str


class PubKeyShareRequest(BaseModel):
    device_id: int = Field(ge=1)
    share_b64: str


class AckResponse(BaseModel):
    accepted: bool = True
    phase: str
    round_id: int


class BlobResponse(BaseModel):
    kind: str
    round_id: int
    payload_b64: str

    @field_validator("payload_b64")
    @classmethod
    def _decodable(cls, v):
        unb64(v)
        return v


class EncryptedUpdateRequest(BaseModel):
    device_id: int = Field(ge=1)
    round_id: int = Field(ge=1)
    payload_b64: str


class DecShareRequest(BaseModel):
    device_id: int = Field(ge=1)
    round_id: int = Field(ge=1)
    payload_b64: str


class StatusResponse(BaseModel):
    phase: str
    round_id: int
    devices_expected: int
    devices_registered: int
    rounds: int
    failed: bool
    abort_reason: str | None = None


class MessageSizeModel(BaseModel):
    elements_per_chunk: int
    ring_payload_bytes: int
    total_bytes_computed: int
    total_bytes_measured: int


class SizeReportResponse(BaseModel):
    preset: str
    devices: int
    weight_count: int
    chunks: int
    ring_element_bytes: int
    xmk_update: MessageSizeModel
    csum1_broadcast: MessageSizeModel
    dec_share: MessageSizeModel
    mk_sum: MessageSizeModel


class SimulateRequest(BaseModel):
    preset: str = "small"
    devices: int = Field(default=3, ge=2)
    rounds: int = Field(default=2, ge=1)
    local_epochs: int = Field(default=1, ge=1)
    seed: int = 0
    samples_per_device: int = Field(default=128, ge=8)
    skew: float = Field(default=0.5, ge=0.0, le=1.0)


class SimulateResponse(BaseModel):
    phase: str
    failed: bool
    abort_reason: str | None
    accuracies: list[float]
    final_accuracy: float | None
