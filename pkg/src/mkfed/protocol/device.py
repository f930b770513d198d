"""Device-side state machine: train, encrypt, share, repeat.

A device only ever talks to the server. All of its randomness (key
generation, encryption, flooding noise, batch order) is derived from
(master_seed, device_id, round, purpose), so a run is reproducible across
transports.
"""

from .. import encoding, mkhe
from ..errors import FrameError, ProtocolError
from ..fedavg import DenseNet, LocalDataset, TrainingConfig, local_update
from ..seeds import derive_int, derive_rng
from . import messages as mp
from .messages import SERVER_ID, MessageKind, RoundMessage


class FederationDevice:
    def __init__(self, device_id: int, dataset: LocalDataset, master_seed: int = 0):
        if device_id == SERVER_ID:
            raise ProtocolError("device id 0 is reserved for the server")
        self.device_id = device_id
        self.dataset = dataset
        self.master_seed = master_seed
        self.net = None
        self.ring_params = None
        self.encoding_params = None
        self.crs = None
        self.plan = None
        self.secret_key = None
        self.public_share = None
        self.aggregated_key = None
        self.weights = None
        self.last_local_weights = None
        self.round_id = 0
        self.done = False
        self.aborted = None

    def start(self):
        return [RoundMessage(MessageKind.JOIN_REQUEST, 0, self.device_id)]

    def _send(self, kind, round_id, payload=b""):
        return RoundMessage(kind, round_id, self.device_id, payload)

    def _abort(self, reason):
        self.aborted = reason
        return [self._send(MessageKind.ABORT, self.round_id, mp.abort_payload(reason))]

    def handle_message(self, msg: RoundMessage):
        if self.done or self.aborted:
            return []
        try:
            if msg.kind is MessageKind.PARAMS_ANNOUNCE:
                return self._on_params(msg)
            if msg.kind is MessageKind.AGG_PK_BROADCAST:
                return self._on_aggregated_key(msg)
            if msg.kind is MessageKind.GLOBAL_MODEL:
                return self._on_global_model(msg)
            if msg.kind is MessageKind.CSUM1_BROADCAST:
                return self._on_csum1(msg)
            if msg.kind is MessageKind.ROUND_RESULT:
                return self._on_result(msg)
            if msg.kind is MessageKind.ABORT:
                self.aborted = mp.parse_abort_payload(msg.payload)
                return []
            return self._abort(f"unexpected message kind {msg.kind.name}")
        except FrameError as exc:
            return self._abort(str(exc))

    def _on_params(self, msg):
        self.ring_params, self.encoding_params, self.plan = mp.parse_params_payload(msg.payload)
        self.crs = mkhe.setup_crs(self.ring_params)
        rng = derive_rng(self.master_seed, self.device_id, "keygen")
        self.secret_key, self.public_share = mkhe.keygen(
            self.ring_params, self.crs, rng, self.device_id
        )
        return [
            self._send(
                MessageKind.PUBKEY_SHARE, 0, mkhe.serialize_public_key_share(self.public_share)
            )
        ]

    def _on_aggregated_key(self, msg):
        apk, _ = mkhe.parse_aggregated_key(msg.payload, self.ring_params)
        if self.device_id not in apk.contributor_ids:
            return self._abort("aggregated key does not include this device")
        self.aggregated_key = apk
        return []

    def _on_global_model(self, msg):
        self.weights = mp.parse_weights_payload(msg.payload)
        if self.net is None:
            (in_dim, hidden), _, (_, classes), _ = self.weights.layout
            self.net = DenseNet(in_dim, hidden, classes)
        self.round_id = msg.round_id
        return self._train_and_encrypt()

    def _on_csum1(self, msg):
        if msg.round_id != self.round_id:
            return []  # stale broadcast
        count, contributors, c1_chunks = mp.parse_csum1_payload(msg.payload, self.ring_params)
        rng = derive_rng(self.master_seed, self.device_id, self.round_id, "flood")
        shares = [
            mkhe.decryption_share(
                self.secret_key, mkhe.sum_digest(c1, contributors), self.ring_params, rng
            )
            for c1 in c1_chunks
        ]
        return [self._send(MessageKind.DEC_SHARE, self.round_id, mp.decshare_payload(shares))]

    def _on_result(self, msg):
        if msg.round_id != self.round_id:
            return []
        self.weights = mp.parse_weights_payload(msg.payload)
        if self.round_id >= self.plan.rounds:
            self.done = True
            return []
        self.round_id += 1
        return self._train_and_encrypt()

    def _train_and_encrypt(self):
        cfg = TrainingConfig(
            learning_rate=self.plan.learning_rate,
            batch_size=self.plan.batch_size,
            local_epochs=self.plan.local_epochs,
            optimizer=self.plan.optimizer,
            seed=derive_int(self.master_seed, self.device_id, self.round_id, "train"),
        )
        trained = local_update(self.net, self.weights, self.dataset, cfg)
        self.last_local_weights = trained
        chunks = encoding.chunk_weights(trained.values, self.encoding_params.slots)
        rng = derive_rng(self.master_seed, self.device_id, self.round_id, "encrypt")
        cts = [
            mkhe.encrypt(
                encoding.encode(chunk, self.encoding_params, self.ring_params),
                self.aggregated_key,
                self.crs,
                self.ring_params,
                rng,
            )
            for chunk in chunks
        ]
        payload = mp.update_payload(len(trained.values), cts)
        return [self._send(MessageKind.ENCRYPTED_UPDATE, self.round_id, payload)]
