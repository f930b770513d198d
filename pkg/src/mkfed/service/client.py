"""HTTP device client: drives a FederationDevice against the service API."""

import time

import httpx

from ..errors import ProtocolError
from ..params import EncodingParams, RingParams
from ..protocol import messages as mp
from ..protocol.config import RoundPlan
from ..protocol.device import FederationDevice
from ..protocol.messages import SERVER_ID, MessageKind, RoundMessage
from . import schemas


def announce_from_params(params: schemas.ParamsResponse) -> RoundMessage:
    """Rebuild the binary PARAMS_ANNOUNCE message from the JSON response."""
    rp = RingParams(
        params.n, params.q, params.sigma_err, params.sigma_flood, bytes.fromhex(params.seed_hex)
    )
    ep = EncodingParams(params.scale, params.n // 2)
    plan = RoundPlan(
        params.devices, params.rounds, params.local_epochs,
        params.batch_size, params.learning_rate, params.optimizer,
    )
    return RoundMessage(MessageKind.PARAMS_ANNOUNCE, 0, SERVER_ID, mp.params_payload(rp, ep, plan))


class HttpDeviceRunner:
    """Polls the service and feeds responses through the device state machine.

    `client` is anything with httpx's request API (an httpx.Client bound to
    the service URL, or a FastAPI TestClient).
    """

    def __init__(self, device: FederationDevice, client=None, base_url=None,
                 poll_interval=0.05, poll_budget_s=60.0):
        if client is None:
            if base_url is None:
                raise ProtocolError("need a client or a base_url")
            client = httpx.Client(base_url=base_url, timeout=poll_budget_s)
        self.device = device
        self.client = client
        self.poll_interval = poll_interval
        self.poll_budget_s = poll_budget_s

    # -- low-level helpers ----------------------------------------------------

    def _check(self, response):
        if response.status_code in (409, 410, 422):
            detail = response.json().get("detail", "rejected")
            self.device.aborted = str(detail)
            raise ProtocolError(f"device {self.device.device_id}: server rejected: {detail}")
        response.raise_for_status()
        return response

    def _poll(self, path) -> RoundMessage:
        deadline = time.monotonic() + self.poll_budget_s
        while True:
            response = self.client.get(path)
            if response.status_code != 404:
                self._check(response)
                blob = schemas.BlobResponse.model_validate(response.json())
                return RoundMessage(
                    MessageKind[blob.kind], blob.round_id, SERVER_ID, schemas.unb64(blob.payload_b64)
                )
            if time.monotonic() > deadline:
                raise ProtocolError(f"timed out polling {path}")
            time.sleep(self.poll_interval)

    def _post_outputs(self, outputs):
        for msg in outputs:
            if msg.kind is MessageKind.PUBKEY_SHARE:
                self._check(
                    self.client.post(
                        "/v1/pubkey",
                        json=schemas.PubKeyShareRequest(
                            device_id=self.device.device_id,
                            share_b64=schemas.b64(msg.payload),
                        ).model_dump(),
                    )
                )
            elif msg.kind is MessageKind.ENCRYPTED_UPDATE:
                self._check(
                    self.client.post(
                        f"/v1/rounds/{msg.round_id}/update",
                        json=schemas.EncryptedUpdateRequest(
                            device_id=self.device.device_id,
                            round_id=msg.round_id,
                            payload_b64=schemas.b64(msg.payload),
                        ).model_dump(),
                    )
                )
            elif msg.kind is MessageKind.DEC_SHARE:
                self._check(
                    self.client.post(
                        f"/v1/rounds/{msg.round_id}/decshare",
                        json=schemas.DecShareRequest(
                            device_id=self.device.device_id,
                            round_id=msg.round_id,
                            payload_b64=schemas.b64(msg.payload),
                        ).model_dump(),
                    )
                )
            elif msg.kind is MessageKind.ABORT:
                raise ProtocolError(
                    f"device {self.device.device_id} aborted: {mp.parse_abort_payload(msg.payload)}"
                )
            else:
                raise ProtocolError(f"no HTTP route for outbound {msg.kind.name}")

    # -- session --------------------------------------------------------------

    def run(self) -> FederationDevice:
        dev = self.device
        response = self._check(
            self.client.post("/v1/join", json=schemas.JoinRequest(device_id=dev.device_id).model_dump())
        )
        params = schemas.ParamsResponse.model_validate(response.json())
        self._post_outputs(dev.handle_message(announce_from_params(params)))

        self._post_outputs(dev.handle_message(self._poll("/v1/aggkey")))
        outputs = dev.handle_message(self._poll("/v1/rounds/1/model"))
        while not dev.done and dev.aborted is None:
            self._post_outputs(outputs)
            if dev.done or dev.aborted:
                break
            round_id = dev.round_id
            share_out = dev.handle_message(self._poll(f"/v1/rounds/{round_id}/csum1"))
            self._post_outputs(share_out)
            outputs = dev.handle_message(self._poll(f"/v1/rounds/{round_id}/result"))
        return dev
