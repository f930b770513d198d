"""FastAPI front end for the aggregation server.

The HTTP layer adapts requests to the same RoundMessage state machine the
loopback and TCP transports drive: POSTs feed handle_message, broadcast
outputs are parked per (kind, round) for clients to poll with GETs. A
watchdog aborts the round when a phase stalls past the configured timeout.
"""

import threading
import time

from fastapi import FastAPI, HTTPException

from .. import bench
from ..errors import MkfedError
from ..protocol import FederationConfig, FederationServer
from ..protocol import messages as mp
from ..protocol.messages import BROADCAST, MessageKind, RoundMessage
from ..protocol.server import ServerPhase
from . import schemas


class Coordinator:
    """Thread-safe wrapper: one federation session behind the HTTP API."""

    def __init__(self, config: FederationConfig):
        self.config = config
        self.server = FederationServer(config)
        self.lock = threading.Lock()
        self.broadcasts = {}  # (kind, round_id) -> payload bytes
        self.last_activity = time.monotonic()

    def _feed(self, msg: RoundMessage):
        """Push one message in; returns direct replies, parks broadcasts."""
        replies = []
        for dest, out in self.server.handle_message(msg):
            if dest == BROADCAST:
                self.broadcasts[(out.kind, out.round_id)] = out.payload
            else:
                replies.append((dest, out))
        self.last_activity = time.monotonic()
        for dest, out in replies:
            if out.kind is MessageKind.ABORT and dest == msg.sender_id:
                raise HTTPException(status_code=409, detail=mp.parse_abort_payload(out.payload))
        return replies

    def check_timeout(self):
        if self.server.phase in (ServerPhase.DONE, ServerPhase.ABORTED):
            return
        if time.monotonic() - self.last_activity > self.config.timeout_s:
            for dest, out in self.server.handle_timeout():
                if dest == BROADCAST:
                    self.broadcasts[(out.kind, out.round_id)] = out.payload

    def fail_if_aborted(self):
        if self.server.phase is ServerPhase.ABORTED:
            raise HTTPException(status_code=410, detail=self.server.abort_reason or "aborted")

    def blob_or_404(self, kind: MessageKind, round_id: int) -> schemas.BlobResponse:
        payload = self.broadcasts.get((kind, round_id))
        if payload is None:
            self.fail_if_aborted()
            raise HTTPException(status_code=404, detail=f"{kind.name} for round {round_id} not ready")
        return schemas.BlobResponse(
            kind=kind.name, round_id=round_id, payload_b64=schemas.b64(payload)
        )

    def ack(self) -> schemas.AckResponse:
        return schemas.AckResponse(phase=self.server.phase.value, round_id=self.server.round_id)


def create_app(config: FederationConfig | None = None) -> FastAPI:
    config = config or FederationConfig()
    app = FastAPI(title="mkfed aggregation service", version="0.1.0")
    coord = Coordinator(config)
    app.state.coordinator = coord

    def guarded(fn):
        with coord.lock:
            coord.check_timeout()
            try:
                return fn()
            except HTTPException:
                raise
            except MkfedError as exc:
                raise HTTPException(status_code=422, detail=str(exc)) from exc

    @app.get("/v1/status", response_model=schemas.StatusResponse)
    def status():
        def run():
            s = coord.server
            return schemas.StatusResponse(
                phase=s.phase.value,
                round_id=s.round_id,
                devices_expected=s.plan.devices,
                devices_registered=len(s.registered),
                rounds=s.plan.rounds,
                failed=s.round_failed,
                abort_reason=s.abort_reason,
            )

        return guarded(run)

    @app.post("/v1/join", response_model=schemas.ParamsResponse)
    def join(req: schemas.JoinRequest):
        def run():
            coord.fail_if_aborted()
            replies = coord._feed(RoundMessage(MessageKind.JOIN_REQUEST, 0, req.device_id))
            payload = replies[0][1].payload
            rp, ep, plan = mp.parse_params_payload(payload)
            return schemas.ParamsResponse(
                n=rp.n,
                q=rp.q,
                sigma_err=rp.sigma_err,
                sigma_flood=rp.sigma_flood,
                seed_hex=rp.seed.hex(),
                scale=ep.scale,
                devices=plan.devices,
                rounds=plan.rounds,
                local_epochs=plan.local_epochs,
                batch_size=plan.batch_size,
                learning_rate=plan.learning_rate,
                optimizer=plan.optimizer,
            )

        return guarded(run)

    @app.post("/v1/pubkey", response_model=schemas.AckResponse)
    def pubkey(req: schemas.PubKeyShareRequest):
        def run():
            coord.fail_if_aborted()
            coord._feed(
                RoundMessage(MessageKind.PUBKEY_SHARE, 0, req.device_id, schemas.unb64(req.share_b64))
            )
            return coord.ack()

        return guarded(run)

    @app.get("/v1/aggkey", response_model=schemas.BlobResponse)
    def aggkey():
        return guarded(lambda: coord.blob_or_404(MessageKind.AGG_PK_BROADCAST, 0))

    @app.get("/v1/rounds/{round_id}/model", response_model=schemas.BlobResponse)
    def global_model(round_id: int):
        def run():
            if round_id == 1:
                return coord.blob_or_404(MessageKind.GLOBAL_MODEL, 1)
            return coord.blob_or_404(MessageKind.ROUND_RESULT, round_id - 1)

        return guarded(run)

    @app.post("/v1/rounds/{round_id}/update", response_model=schemas.AckResponse)
    def update(round_id: int, req: schemas.EncryptedUpdateRequest):
        def run():
            coord.fail_if_aborted()
            if round_id != req.round_id:
                raise HTTPException(status_code=422, detail="round mismatch between path and body")
            coord._feed(
                RoundMessage(
                    MessageKind.ENCRYPTED_UPDATE, round_id, req.device_id,
                    schemas.unb64(req.payload_b64),
                )
            )
            return coord.ack()

        return guarded(run)

    @app.get("/v1/rounds/{round_id}/csum1", response_model=schemas.BlobResponse)
    def csum1(round_id: int):
        return guarded(lambda: coord.blob_or_404(MessageKind.CSUM1_BROADCAST, round_id))

    @app.post("/v1/rounds/{round_id}/decshare", response_model=schemas.AckResponse)
    def decshare(round_id: int, req: schemas.DecShareRequest):
        def run():
            coord.fail_if_aborted()
            if round_id != req.round_id:
                raise HTTPException(status_code=422, detail="round mismatch between path and body")
            coord._feed(
                RoundMessage(
                    MessageKind.DEC_SHARE, round_id, req.device_id, schemas.unb64(req.payload_b64)
                )
            )
            return coord.ack()

        return guarded(run)

    @app.get("/v1/rounds/{round_id}/result", response_model=schemas.BlobResponse)
    def result(round_id: int):
        return guarded(lambda: coord.blob_or_404(MessageKind.ROUND_RESULT, round_id))

    @app.get("/v1/sizes", response_model=schemas.SizeReportResponse)
    def sizes(preset: str = "standard", devices: int = 10, weights: int = 492):
        def run():
            report = bench.measure_sizes(preset, devices, weights)
            def ms(m):
                return schemas.MessageSizeModel(
                    elements_per_chunk=m.elements_per_chunk,
                    ring_payload_bytes=m.ring_payload_bytes,
                    total_bytes_computed=m.total_bytes_computed,
                    total_bytes_measured=m.total_bytes_measured,
                )
            return schemas.SizeReportResponse(
                preset=report.preset,
                devices=report.devices,
                weight_count=report.weight_count,
                chunks=report.chunks,
                ring_element_bytes=report.ring_element_bytes,
                xmk_update=ms(report.xmk_update),
                csum1_broadcast=ms(report.csum1_broadcast),
                dec_share=ms(report.dec_share),
                mk_sum=ms(report.mk_sum),
            )

        return guarded(run)

    @app.post("/v1/simulate", response_model=schemas.SimulateResponse)
    def simulate(req: schemas.SimulateRequest):
        # independent of the hosted session: runs an in-process loopback round set
        def run():
            sim_config = FederationConfig(
                preset=req.preset,
                devices=req.devices,
                rounds=req.rounds,
                local_epochs=req.local_epochs,
                seed=req.seed,
            )
            result = bench.run_simulation(
                sim_config, samples_per_device=req.samples_per_device, skew=req.skew
            )
            return schemas.SimulateResponse(
                phase=result.phase,
                failed=result.failed,
                abort_reason=result.abort_reason,
                accuracies=list(result.accuracies),
                final_accuracy=result.final_accuracy,
            )

        return guarded(run)

    return app
