"""HTTP service: API contract, full sessions, parity with the loopback run."""

import threading
import time

import numpy as np
from fastapi.testclient import TestClient

from mkfed import bench, fedavg
from mkfed.protocol import FederationConfig, FederationDevice, FederationServer
from mkfed.protocol import run_loopback_session
from mkfed.protocol.server import ServerPhase
from mkfed.service import HttpDeviceRunner, create_app
from mkfed.service.client import announce_from_params
from mkfed.service.schemas import ParamsResponse, b64


def service_config(**kw):
    defaults = dict(
        preset="small", devices=2, rounds=1, local_epochs=1, batch_size=16, seed=77,
        timeout_s=30.0,
    )
    defaults.update(kw)
    return FederationConfig(**defaults)


def make_datasets(config, data_seed=3, samples=48):
    datasets, test = fedavg.synth_dataset(
        config.devices, samples, seed=data_seed, test_samples=100
    )
    return datasets, test


class TestApiContract:
    def test_status_reports_phase(self):
        app = create_app(service_config())
        with TestClient(app) as client:
            body = client.get("/v1/status").json()
            assert body["phase"] == "registration"
            assert body["devices_expected"] == 2
            assert body["failed"] is False

    def test_join_returns_params_and_rejects_duplicates(self):
        app = create_app(service_config())
        with TestClient(app) as client:
            first = client.post("/v1/join", json={"device_id": 1})
            assert first.status_code == 200
            params = ParamsResponse.model_validate(first.json())
            assert params.n == 2048 and params.devices == 2
            dup = client.post("/v1/join", json={"device_id": 1})
            assert dup.status_code == 409

    def test_broadcasts_poll_as_404_until_ready(self):
        app = create_app(service_config())
        with TestClient(app) as client:
            client.post("/v1/join", json={"device_id": 1})
            assert client.get("/v1/aggkey").status_code == 404
            assert client.get("/v1/rounds/1/csum1").status_code == 404

    def test_bad_base64_rejected(self):
        app = create_app(service_config())
        with TestClient(app) as client:
            client.post("/v1/join", json={"device_id": 1})
            bad = client.post(
                "/v1/pubkey", json={"device_id": 1, "share_b64": "@@not-base64@@"}
            )
            assert bad.status_code == 422

    def test_sizes_endpoint_matches_bench(self):
        app = create_app(service_config())
        with TestClient(app) as client:
            got = client.get(
                "/v1/sizes", params={"preset": "small", "devices": 3, "weights": 492}
            ).json()
        report = bench.measure_sizes("small", 3, 492)
        assert got["chunks"] == report.chunks
        assert got["xmk_update"]["elements_per_chunk"] == 2
        assert got["mk_sum"]["elements_per_chunk"] == 4
        assert got["dec_share"]["ring_payload_bytes"] == got["csum1_broadcast"]["ring_payload_bytes"]
        assert got["xmk_update"]["total_bytes_measured"] == report.xmk_update.total_bytes_measured

    def test_simulate_endpoint_runs_rounds(self):
        app = create_app(service_config())
        with TestClient(app) as client:
            body = client.post(
                "/v1/simulate",
                json={"devices": 2, "rounds": 2, "local_epochs": 1, "samples_per_device": 32,
                      "seed": 5},
            ).json()
        assert body["phase"] == "done"
        assert body["failed"] is False
        assert len(body["accuracies"]) == 2

    def test_watchdog_aborts_stalled_session(self):
        app = create_app(service_config(timeout_s=0.2))
        with TestClient(app) as client:
            client.post("/v1/join", json={"device_id": 1})
            time.sleep(0.35)
            body = client.get("/v1/status").json()
            assert body["phase"] == "aborted"
            assert client.get("/v1/rounds/1/model").status_code == 410
            late = client.post("/v1/join", json={"device_id": 2})
            assert late.status_code == 410


class TestFullSessionSequential:
    def test_manual_two_device_round(self):
        config = service_config()
        datasets, _ = make_datasets(config)
        app = create_app(config)
        devices = [FederationDevice(i + 1, datasets[i], config.seed) for i in range(2)]
        with TestClient(app) as client:
            outs = {}
            for dev in devices:
                resp = client.post("/v1/join", json={"device_id": dev.device_id})
                params = ParamsResponse.model_validate(resp.json())
                (pubkey_msg,) = dev.handle_message(announce_from_params(params))
                ack = client.post(
                    "/v1/pubkey",
                    json={"device_id": dev.device_id, "share_b64": b64(pubkey_msg.payload)},
                )
                assert ack.status_code == 200
            aggkey = client.get("/v1/aggkey")
            assert aggkey.status_code == 200
            model = client.get("/v1/rounds/1/model").json()
            from mkfed.protocol.messages import MessageKind, RoundMessage, SERVER_ID
            from mkfed.service.schemas import unb64

            for dev in devices:
                dev.handle_message(
                    RoundMessage(MessageKind.AGG_PK_BROADCAST, 0, SERVER_ID,
                                 unb64(aggkey.json()["payload_b64"]))
                )
                (update_msg,) = dev.handle_message(
                    RoundMessage(MessageKind.GLOBAL_MODEL, 1, SERVER_ID,
                                 unb64(model["payload_b64"]))
                )
                outs[dev.device_id] = update_msg
            for dev in devices:
                resp = client.post(
                    f"/v1/rounds/1/update",
                    json={"device_id": dev.device_id, "round_id": 1,
                          "payload_b64": b64(outs[dev.device_id].payload)},
                )
                assert resp.status_code == 200
            csum1 = client.get("/v1/rounds/1/csum1")
            assert csum1.status_code == 200
            for dev in devices:
                (share_msg,) = dev.handle_message(
                    RoundMessage(MessageKind.CSUM1_BROADCAST, 1, SERVER_ID,
                                 unb64(csum1.json()["payload_b64"]))
                )
                resp = client.post(
                    "/v1/rounds/1/decshare",
                    json={"device_id": dev.device_id, "round_id": 1,
                          "payload_b64": b64(share_msg.payload)},
                )
                assert resp.status_code == 200
            result = client.get("/v1/rounds/1/result")
            assert result.status_code == 200
            status = client.get("/v1/status").json()
            assert status["phase"] == "done"


class TestFullSessionThreaded:
    def test_http_session_matches_loopback_bit_exactly(self):
        config = service_config(devices=3, rounds=2)
        datasets, _ = make_datasets(config, data_seed=8)

        loop_server = FederationServer(config)
        loop_devices = [FederationDevice(i + 1, datasets[i], config.seed) for i in range(3)]
        run_loopback_session(loop_server, loop_devices)
        assert loop_server.phase is ServerPhase.DONE

        app = create_app(config)
        with TestClient(app) as client:
            runners = [
                HttpDeviceRunner(
                    FederationDevice(i + 1, datasets[i], config.seed),
                    client=client,
                    poll_interval=0.01,
                    poll_budget_s=60.0,
                )
                for i in range(3)
            ]
            threads = [threading.Thread(target=r.run, daemon=True) for r in runners]
            for t in threads:
                t.start()
            for t in threads:
                t.join(timeout=90)
                assert not t.is_alive()
            coordinator = app.state.coordinator
            assert coordinator.server.phase is ServerPhase.DONE
            assert coordinator.server.merged_history == loop_server.merged_history
            for a, b in zip(
                coordinator.server.weights_history, loop_server.weights_history
            ):
                assert np.array_equal(a.values, b.values)
            for runner in runners:
                assert runner.device.done
