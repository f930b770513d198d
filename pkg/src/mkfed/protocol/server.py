"""Aggregation server state machine.

Transport-agnostic: feed inbound RoundMessages to handle_message and route
the returned (destination, message) pairs; destination is a device id or
BROADCAST. Phases advance only when an accumulator holds one item from
every registered device, so any arrival interleaving inside a phase yields
the same exit state.

One session runs: registration, key collection, then `rounds` iterations of
collect-updates / publish c_sum1 / collect-shares / publish result. The
server sees ciphertexts and decryption shares bound to the per-round sums;
it never holds a share usable against an individual ciphertext.
"""

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .. import encoding, mkhe, ring
from ..errors import FrameError, MixedKeyError, QuorumError
from ..fedavg import DenseNet, ModelWeights
from ..params import params_from_preset
from ..seeds import derive_bytes, derive_rng
from . import messages as mp
from .config import FederationConfig
from .messages import BROADCAST, SERVER_ID, MessageKind, RoundMessage


class ServerPhase(Enum):
    REGISTRATION = "registration"
    KEYS = "keys"
    UPDATES = "updates"
    SHARES = "shares"
    DONE = "done"
    ABORTED = "aborted"


@dataclass
class TranscriptEntry:
    direction: str  # "in" or "out"
    kind: MessageKind
    round_id: int
    peer: int  # device id, or BROADCAST for outbound broadcasts


class FederationServer:
    def __init__(self, config: FederationConfig, net: DenseNet | None = None,
                 initial_weights: ModelWeights | None = None):
        self.config = config
        self.plan = config.plan()
        self.ring_params, self.encoding_params = params_from_preset(
            config.preset, derive_bytes(config.seed, "crs")
        )
        self.crs = mkhe.setup_crs(self.ring_params)
        self.net = net or DenseNet()
        if initial_weights is None:
            initial_weights = self.net.init_weights(derive_rng(config.seed, "model-init"))
        self.global_weights = initial_weights
        self.weights_history = [initial_weights]
        self.merged_history = []  # per round: serialized merged plaintext polynomials
        self.transcript = []
        self.phase = ServerPhase.REGISTRATION
        self.round_id = 1
        self.round_failed = False
        self.abort_reason = None
        self.registered = set()
        self._pubkeys = {}
        self.aggregated_key = None
        self._updates = {}
        self._weight_count = None
        self._sums = None
        self._shares = {}

    # -- helpers ------------------------------------------------------------

    def _out(self, dest, kind, round_id, payload=b""):
        self.transcript.append(TranscriptEntry("out", kind, round_id, dest))
        return dest, RoundMessage(kind, round_id, SERVER_ID, payload)

    def _reject(self, msg, reason):
        return [self._out(msg.sender_id, MessageKind.ABORT, msg.round_id, mp.abort_payload(reason))]

    def _fail_session(self, reason):
        self.phase = ServerPhase.ABORTED
        self.round_failed = True
        self.abort_reason = reason
        return [self._out(BROADCAST, MessageKind.ABORT, self.round_id, mp.abort_payload(reason))]

    # -- inbound dispatch -----------------------------------------------------

    def handle_message(self, msg: RoundMessage):
        self.transcript.append(TranscriptEntry("in", msg.kind, msg.round_id, msg.sender_id))
        handler = {
            MessageKind.JOIN_REQUEST: self._on_join,
            MessageKind.PUBKEY_SHARE: self._on_pubkey,
            MessageKind.ENCRYPTED_UPDATE: self._on_update,
            MessageKind.DEC_SHARE: self._on_share,
            MessageKind.ABORT: self._on_abort,
        }.get(msg.kind)
        if handler is None:
            return self._reject(msg, f"unexpected message kind {msg.kind.name}")
        try:
            return handler(msg)
        except (FrameError, MixedKeyError, QuorumError) as exc:
            return self._reject(msg, f"device {msg.sender_id}: {exc}")

    def _on_join(self, msg):
        if self.phase is not ServerPhase.REGISTRATION:
            return self._reject(msg, "registration closed")
        dev = msg.sender_id
        if dev == SERVER_ID or dev in self.registered:
            return self._reject(msg, f"device id {dev} invalid or already registered")
        self.registered.add(dev)
        out = [
            self._out(
                dev,
                MessageKind.PARAMS_ANNOUNCE,
                0,
                mp.params_payload(self.ring_params, self.encoding_params, self.plan),
            )
        ]
        if len(self.registered) == self.plan.devices:
            self.phase = ServerPhase.KEYS
        return out

    def _on_pubkey(self, msg):
        if self.phase not in (ServerPhase.REGISTRATION, ServerPhase.KEYS):
            return self._reject(msg, "key collection is over")
        if msg.sender_id not in self.registered:
            return self._reject(msg, "not registered")
        if msg.sender_id in self._pubkeys:
            return self._reject(msg, "duplicate public key share")
        share, _ = mkhe.parse_public_key_share(msg.payload, self.ring_params)
        if share.device_id != msg.sender_id:
            return self._reject(msg, "key share claims a different device id")
        self._pubkeys[msg.sender_id] = share
        if self.phase is ServerPhase.KEYS and len(self._pubkeys) == self.plan.devices:
            self.aggregated_key = mkhe.aggregate_public_keys(list(self._pubkeys.values()))
            self.phase = ServerPhase.UPDATES
            return [
                self._out(
                    BROADCAST,
                    MessageKind.AGG_PK_BROADCAST,
                    0,
                    mkhe.serialize_aggregated_key(self.aggregated_key),
                ),
                self._out(
                    BROADCAST,
                    MessageKind.GLOBAL_MODEL,
                    self.round_id,
                    mp.weights_payload(self.global_weights),
                ),
            ]
        return []

    def _on_update(self, msg):
        if self.phase is not ServerPhase.UPDATES:
            return self._reject(msg, "no update expected now")
        if msg.round_id != self.round_id:
            return self._reject(msg, f"encrypted update for wrong round {msg.round_id}")
        if msg.sender_id not in self.registered:
            return self._reject(msg, "not registered")
        if msg.sender_id in self._updates:
            return self._reject(msg, "duplicate encrypted update")
        weight_count, chunks = mp.parse_update_payload(msg.payload, self.ring_params)
        if any(ct.key_fingerprint != self.aggregated_key.fingerprint for ct in chunks):
            return self._reject(msg, "ciphertext not under the aggregated key")
        if self._weight_count is None:
            self._weight_count = weight_count
        if weight_count != self._weight_count or len(chunks) != self._expected_chunks():
            return self._reject(msg, "update shape disagrees with the cohort")
        self._updates[msg.sender_id] = chunks
        if len(self._updates) < self.plan.devices:
            return []
        ordered = [self._updates[d] for d in sorted(self._updates)]
        self._sums = [
            mkhe.add_ciphertexts([dev_chunks[k] for dev_chunks in ordered])
            for k in range(self._expected_chunks())
        ]
        self.phase = ServerPhase.SHARES
        payload = mp.csum1_payload(
            self.plan.devices,
            self.aggregated_key.contributor_ids,
            [cs.c_sum1 for cs in self._sums],
        )
        return [self._out(BROADCAST, MessageKind.CSUM1_BROADCAST, self.round_id, payload)]

    def _on_share(self, msg):
        if self.phase is not ServerPhase.SHARES or msg.round_id != self.round_id:
            return self._reject(
                msg, f"decryption share for round {msg.round_id} rejected (current {self.round_id})"
            )
        if msg.sender_id not in self.registered:
            return self._reject(msg, "not registered")
        if msg.sender_id in self._shares:
            return self._reject(msg, "duplicate decryption share")
        shares = mp.parse_decshare_payload(msg.payload, self.ring_params)
        if len(shares) != len(self._sums):
            return self._reject(msg, "share chunk count mismatch")
        for sh, cs in zip(shares, self._sums):
            if sh.device_id != msg.sender_id:
                return self._reject(msg, "share claims a different device id")
            if sh.sum_fingerprint != cs.sum_fingerprint:
                return self._reject(msg, "share bound to a different ciphertext sum")
        self._shares[msg.sender_id] = shares
        if len(self._shares) < self.plan.devices:
            return []
        return self._finish_round()

    def _on_abort(self, msg):
        reason = mp.parse_abort_payload(msg.payload)
        return self._fail_session(f"device {msg.sender_id} aborted: {reason}")

    # -- round completion -----------------------------------------------------

    def _expected_chunks(self):
        slots = self.encoding_params.slots
        return -(-self._weight_count // slots) if self._weight_count else 0

    def _finish_round(self):
        merged = [
            mkhe.merge(cs, [self._shares[d][k] for d in sorted(self._shares)])
            for k, cs in enumerate(self._sums)
        ]
        self.merged_history.append(b"".join(ring.to_bytes(m) for m in merged))
        slot_chunks = [
            encoding.decode(m, self.encoding_params, self.ring_params) for m in merged
        ]
        summed = encoding.unchunk(slot_chunks, self._weight_count)
        averaged = summed / self.plan.devices
        if not np.all(np.isfinite(averaged)):
            return self._fail_session("merged weights are not finite")
        self.global_weights = ModelWeights(averaged, self.global_weights.layout)
        self.weights_history.append(self.global_weights)
        out = [
            self._out(
                BROADCAST,
                MessageKind.ROUND_RESULT,
                self.round_id,
                mp.weights_payload(self.global_weights),
            )
        ]
        self._updates = {}
        self._shares = {}
        self._sums = None
        self._weight_count = None
        if self.round_id >= self.plan.rounds:
            self.phase = ServerPhase.DONE
        else:
            self.round_id += 1
            self.phase = ServerPhase.UPDATES
        return out

    # -- liveness ---------------------------------------------------------------

    def handle_timeout(self):
        """Abort policy: the scheme needs all contributors, so a silent device
        fails the round; the global model is left unchanged."""
        if self.phase in (ServerPhase.DONE, ServerPhase.ABORTED):
            return []
        if self.phase is ServerPhase.SHARES:
            missing = sorted(self.registered - set(self._shares))
            return self._fail_session(
                f"incomplete decryption quorum: missing decryption shares from {missing}"
            )
        if self.phase is ServerPhase.UPDATES:
            missing = sorted(self.registered - set(self._updates))
            return self._fail_session(f"round {self.round_id}: missing encrypted updates from {missing}")
        return self._fail_session(f"setup incomplete (phase {self.phase.value})")
