"""Benchmark harness: per-phase timings, wire-size accounting, accuracy runs.

Timings cover the four aggregation phases (encrypt, cipher_sum, dec_share,
merge) for three schemes: plain (no encryption), the aggregated-key scheme
(xmkckks), and the per-device-key baseline (mkckks). Results are plain
records; the CSV files are the interchange format.
"""

import csv
import time
from dataclasses import dataclass

import numpy as np

from . import encoding, fedavg, mkhe, ring
from .errors import ConfigurationError
from .protocol import FederationDevice, FederationServer, run_loopback_session
from .protocol import messages as mp
from .seeds import derive_int, derive_rng

SCHEMES = ("plain", "xmkckks", "mkckks")
PHASES = ("encrypt", "cipher_sum", "dec_share", "merge")

BENCH_CSV_HEADER = ["scheme", "phase", "weight_count", "rep", "wall_time_ms", "bytes_on_wire"]
ACCURACY_CSV_HEADER = ["scheme", "trial", "round", "accuracy"]


@dataclass(frozen=True)
class BenchRecord:
    scheme: str
    phase: str
    weight_count: int
    rep: int
    wall_time_ms: float
    bytes_on_wire: int


def _timed(fn):
    start = time.perf_counter()
    result = fn()
    return result, (time.perf_counter() - start) * 1000.0


class _PhaseBench:
    """One (scheme, weight_count) cell: prepares inputs once, times phases."""

    def __init__(self, scheme, rp, ep, crs, keys, apk, weights):
        self.scheme = scheme
        self.rp, self.ep, self.crs = rp, ep, crs
        self.keys = keys
        self.apk = apk
        self.weights = weights
        self.n_devices = len(weights)
        self.rng = np.random.default_rng(derive_int(1234, scheme, len(weights[0])))

    def _encode_all(self, values):
        return [
            encoding.encode(chunk, self.ep, self.rp)
            for chunk in encoding.chunk_weights(values, self.ep.slots)
        ]

    def _encrypt_update(self, device_index):
        plaintexts = self._encode_all(self.weights[device_index])
        if self.scheme == "xmkckks":
            return [
                mkhe.encrypt(m, self.apk, self.crs, self.rp, self.rng) for m in plaintexts
            ]
        pk = self.keys[device_index][1]
        return [mkhe.mk_encrypt(m, pk, self.crs, self.rp, self.rng) for m in plaintexts]

    def run(self, reps):
        records = []
        wc = len(self.weights[0])
        if self.scheme == "plain":
            records.extend(self._run_plain(reps, wc))
            return records

        updates = [self._encrypt_update(i) for i in range(self.n_devices)]
        update_bytes = len(mp.update_payload(wc, updates[0]))
        n_chunks = len(updates[0])

        if self.scheme == "xmkckks":
            sums = [
                mkhe.add_ciphertexts([updates[d][k] for d in range(self.n_devices)])
                for k in range(n_chunks)
            ]
            sum_bytes = len(
                mp.csum1_payload(
                    self.n_devices, self.apk.contributor_ids, [cs.c_sum1 for cs in sums]
                )
            )
            shares = [
                [mkhe.decryption_share(sk, cs, self.rp, self.rng) for cs in sums]
                for sk, _ in self.keys
            ]
            share_bytes = len(mp.decshare_payload(shares[0]))
            result_bytes = 8 * wc

            for rep in range(reps):
                _, t_enc = _timed(lambda: self._encrypt_update(rep % self.n_devices))
                records.append(BenchRecord(self.scheme, "encrypt", wc, rep, t_enc, update_bytes))
                _, t_sum = _timed(
                    lambda: [
                        mkhe.add_ciphertexts([updates[d][k] for d in range(self.n_devices)])
                        for k in range(n_chunks)
                    ]
                )
                records.append(BenchRecord(self.scheme, "cipher_sum", wc, rep, t_sum, sum_bytes))
                sk = self.keys[rep % self.n_devices][0]
                _, t_share = _timed(
                    lambda: [mkhe.decryption_share(sk, cs, self.rp, self.rng) for cs in sums]
                )
                records.append(BenchRecord(self.scheme, "dec_share", wc, rep, t_share, share_bytes))

                def merge_and_decode():
                    merged = [
                        mkhe.merge(cs, [shares[d][k] for d in range(self.n_devices)])
                        for k, cs in enumerate(sums)
                    ]
                    slot_chunks = [encoding.decode(m, self.ep, self.rp) for m in merged]
                    return encoding.unchunk(slot_chunks, wc)

                _, t_merge = _timed(merge_and_decode)
                records.append(BenchRecord(self.scheme, "merge", wc, rep, t_merge, result_bytes))
            return records

        # baseline scheme
        chunk_sums = [
            mkhe.mk_add([updates[d][k] for d in range(self.n_devices)]) for k in range(n_chunks)
        ]
        sum_bytes = sum(len(mkhe.serialize_mk_sum(s)) for s in chunk_sums)
        shares = [
            [
                mkhe.mk_part_dec(sk, chunk_sums[k].c1_list[d], self.rp, self.rng)
                for k in range(n_chunks)
            ]
            for d, (sk, _) in enumerate(self.keys)
        ]
        share_bytes = len(mp.decshare_payload(shares[0]))
        result_bytes = 8 * wc
        for rep in range(reps):
            _, t_enc = _timed(lambda: self._encrypt_update(rep % self.n_devices))
            records.append(BenchRecord(self.scheme, "encrypt", wc, rep, t_enc, update_bytes))
            _, t_sum = _timed(
                lambda: [
                    mkhe.mk_add([updates[d][k] for d in range(self.n_devices)])
                    for k in range(n_chunks)
                ]
            )
            records.append(BenchRecord(self.scheme, "cipher_sum", wc, rep, t_sum, sum_bytes))
            d = rep % self.n_devices
            sk = self.keys[d][0]
            _, t_share = _timed(
                lambda: [
                    mkhe.mk_part_dec(sk, chunk_sums[k].c1_list[d], self.rp, self.rng)
                    for k in range(n_chunks)
                ]
            )
            records.append(BenchRecord(self.scheme, "dec_share", wc, rep, t_share, share_bytes))

            def merge_and_decode():
                merged = [
                    mkhe.mk_merge(cs, [shares[d][k] for d in range(self.n_devices)])
                    for k, cs in enumerate(chunk_sums)
                ]
                slot_chunks = [encoding.decode(m, self.ep, self.rp) for m in merged]
                return encoding.unchunk(slot_chunks, wc)

            _, t_merge = _timed(merge_and_decode)
            records.append(BenchRecord(self.scheme, "merge", wc, rep, t_merge, result_bytes))
        return records

    def _run_plain(self, reps, wc):
        records = []
        layout = ((wc,),)
        payloads = [
            fedavg.ModelWeights(w, layout) for w in self.weights
        ]
        plain_bytes = len(mp.weights_payload(payloads[0]))
        for rep in range(reps):
            _, t_enc = _timed(lambda: mp.weights_payload(payloads[rep % self.n_devices]))
            records.append(BenchRecord("plain", "encrypt", wc, rep, t_enc, plain_bytes))
            _, t_sum = _timed(lambda: np.sum(self.weights, axis=0))
            records.append(BenchRecord("plain", "cipher_sum", wc, rep, t_sum, plain_bytes))
            _, t_noop = _timed(lambda: None)
            records.append(BenchRecord("plain", "dec_share", wc, rep, t_noop, 0))
            summed = np.sum(self.weights, axis=0)
            _, t_merge = _timed(lambda: summed / self.n_devices)
            records.append(BenchRecord("plain", "merge", wc, rep, t_merge, plain_bytes))
        return records


def bench_phases(preset="standard", weight_counts=(492, 4920, 49200, 320000), reps=4,
                 devices=3, seed=0):
    """Time all phases for every scheme over the weight sweep."""
    if reps < 1 or devices < 2:
        raise ConfigurationError("need at least 1 rep and 2 devices")
    rp, ep, crs = mkhe.setup(preset)
    keys = [mkhe.keygen(rp, crs, derive_rng(seed, "bench-key", i), i + 1) for i in range(devices)]
    apk = mkhe.aggregate_public_keys([pk for _, pk in keys])
    records = []
    for wc in weight_counts:
        rng = derive_rng(seed, "bench-weights", wc)
        weights = [rng.uniform(-1, 1, wc) for _ in range(devices)]
        for scheme in SCHEMES:
            cell = _PhaseBench(scheme, rp, ep, crs, keys, apk, weights)
            records.extend(cell.run(reps))
    return records


def median_times(records):
    """(scheme, phase, weight_count) -> median wall time over reps."""
    cells = {}
    for rec in records:
        cells.setdefault((rec.scheme, rec.phase, rec.weight_count), []).append(rec.wall_time_ms)
    return {key: float(np.median(times)) for key, times in cells.items()}


def write_bench_csv(records, path):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(BENCH_CSV_HEADER)
        for rec in records:
            writer.writerow(
                [rec.scheme, rec.phase, rec.weight_count, rec.rep,
                 f"{rec.wall_time_ms:.6f}", rec.bytes_on_wire]
            )


# --- wire sizes ---------------------------------------------------------------


@dataclass(frozen=True)
class MessageSize:
    elements_per_chunk: int
    ring_payload_bytes: int
    total_bytes_computed: int
    total_bytes_measured: int


@dataclass(frozen=True)
class SizeReport:
    preset: str
    devices: int
    weight_count: int
    chunks: int
    ring_element_bytes: int
    xmk_update: MessageSize
    csum1_broadcast: MessageSize
    dec_share: MessageSize
    mk_sum: MessageSize

    def to_rows(self):
        rows = []
        for name in ("xmk_update", "csum1_broadcast", "dec_share", "mk_sum"):
            size: MessageSize = getattr(self, name)
            rows.append(
                {
                    "message": name,
                    "elements_per_chunk": size.elements_per_chunk,
                    "chunks": self.chunks,
                    "ring_payload_bytes": size.ring_payload_bytes,
                    "total_bytes": size.total_bytes_measured,
                }
            )
        return rows


_OBJ_HEADER = 38  # type/version/id/fingerprint header on scheme objects


def measure_sizes(preset: str, n_devices: int, weight_count: int, seed=0) -> SizeReport:
    """Build real objects and reconcile predicted vs serialized sizes."""
    if n_devices < 2:
        raise ConfigurationError("size report needs at least 2 devices")
    rp, ep, crs = mkhe.setup(preset)
    keys = [mkhe.keygen(rp, crs, derive_rng(seed, "sz", i), i + 1) for i in range(n_devices)]
    apk = mkhe.aggregate_public_keys([pk for _, pk in keys])
    rng = derive_rng(seed, "sz-weights")
    updates = []
    for sk, pk in keys:
        chunks = encoding.chunk_weights(rng.uniform(-1, 1, weight_count), ep.slots)
        plain = [encoding.encode(c, ep, rp) for c in chunks]
        updates.append(
            (
                [mkhe.encrypt(m, apk, crs, rp, rng) for m in plain],
                [mkhe.mk_encrypt(m, pk, crs, rp, rng) for m in plain],
            )
        )
    n_chunks = len(updates[0][0])
    ring_bytes = ring.serialized_size(rp)
    ids_bytes = 4 + 4 * n_devices

    sums = [
        mkhe.add_ciphertexts([updates[d][0][k] for d in range(n_devices)])
        for k in range(n_chunks)
    ]
    shares = [mkhe.decryption_share(keys[0][0], cs, rp, rng) for cs in sums]
    mk_sums = [
        mkhe.mk_add([updates[d][1][k] for d in range(n_devices)]) for k in range(n_chunks)
    ]

    update_payload = mp.update_payload(weight_count, updates[0][0])
    csum1 = mp.csum1_payload(n_devices, apk.contributor_ids, [cs.c_sum1 for cs in sums])
    decshare = mp.decshare_payload(shares)
    mk_blob = b"".join(mkhe.serialize_mk_sum(s) for s in mk_sums)

    xmk_update = MessageSize(
        elements_per_chunk=2,
        ring_payload_bytes=2 * n_chunks * ring_bytes,
        total_bytes_computed=8 + n_chunks * (_OBJ_HEADER + ids_bytes + 2 * ring_bytes),
        total_bytes_measured=len(update_payload),
    )
    csum1_size = MessageSize(
        elements_per_chunk=1,
        ring_payload_bytes=n_chunks * ring_bytes,
        total_bytes_computed=12 + 4 * n_devices + n_chunks * ring_bytes,
        total_bytes_measured=len(csum1),
    )
    decshare_size = MessageSize(
        elements_per_chunk=1,
        ring_payload_bytes=n_chunks * ring_bytes,
        total_bytes_computed=4 + n_chunks * (_OBJ_HEADER + ring_bytes),
        total_bytes_measured=len(decshare),
    )
    mk_size = MessageSize(
        elements_per_chunk=n_devices + 1,
        ring_payload_bytes=n_chunks * (n_devices + 1) * ring_bytes,
        total_bytes_computed=n_chunks * (_OBJ_HEADER + ids_bytes + (n_devices + 1) * ring_bytes),
        total_bytes_measured=len(mk_blob),
    )
    return SizeReport(
        preset, n_devices, weight_count, n_chunks, ring_bytes,
        xmk_update, csum1_size, decshare_size, mk_size,
    )


def write_sizes_csv(report: SizeReport, path):
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(
            fh, fieldnames=["message", "elements_per_chunk", "chunks",
                            "ring_payload_bytes", "total_bytes"]
        )
        writer.writeheader()
        for row in report.to_rows():
            writer.writerow(row)


# --- encrypted aggregation helpers (accuracy comparison) -----------------------


class EncryptedAverager:
    """In-process aggregation pipelines used by the accuracy comparison."""

    def __init__(self, scheme, preset, n_devices, seed=0):
        self.scheme = scheme
        self.n_devices = n_devices
        self.rp, self.ep, self.crs = mkhe.setup(preset)
        self.rng = derive_rng(seed, "avg", scheme)
        self.keys = [
            mkhe.keygen(self.rp, self.crs, derive_rng(seed, "avg-key", scheme, i), i + 1)
            for i in range(n_devices)
        ]
        self.apk = mkhe.aggregate_public_keys([pk for _, pk in self.keys])

    def average(self, weight_vectors):
        n = len(weight_vectors)
        wc = len(weight_vectors[0])
        chunk_lists = [encoding.chunk_weights(w, self.ep.slots) for w in weight_vectors]
        n_chunks = len(chunk_lists[0])
        if self.scheme == "xmkckks":
            cts = [
                [
                    mkhe.encrypt(encoding.encode(c, self.ep, self.rp), self.apk, self.crs,
                                 self.rp, self.rng)
                    for c in chunks
                ]
                for chunks in chunk_lists
            ]
            sums = [mkhe.add_ciphertexts([cts[d][k] for d in range(n)]) for k in range(n_chunks)]
            shares = [
                [mkhe.decryption_share(sk, cs, self.rp, self.rng) for cs in sums]
                for sk, _ in self.keys[:n]
            ]
            merged = [
                mkhe.merge(cs, [shares[d][k] for d in range(n)]) for k, cs in enumerate(sums)
            ]
        elif self.scheme == "mkckks":
            cts = [
                [
                    mkhe.mk_encrypt(encoding.encode(c, self.ep, self.rp), self.keys[d][1],
                                    self.crs, self.rp, self.rng)
                    for c in chunks
                ]
                for d, chunks in enumerate(chunk_lists)
            ]
            sums = [mkhe.mk_add([cts[d][k] for d in range(n)]) for k in range(n_chunks)]
            shares = [
                [
                    mkhe.mk_part_dec(self.keys[d][0], sums[k].c1_list[d], self.rp, self.rng)
                    for k in range(n_chunks)
                ]
                for d in range(n)
            ]
            merged = [
                mkhe.mk_merge(cs, [shares[d][k] for d in range(n)])
                for k, cs in enumerate(sums)
            ]
        else:
            raise ConfigurationError(f"no encrypted pipeline for scheme {self.scheme!r}")
        slot_chunks = [encoding.decode(m, self.ep, self.rp) for m in merged]
        return encoding.unchunk(slot_chunks, wc) / n


@dataclass(frozen=True)
class AccuracyOptions:
    preset: str = "small"
    devices: int = 10
    trials: int = 5
    local_epochs: int = 20
    rounds: int = 10
    samples_per_device: int = 400
    skew: float = 0.5
    seed: int = 0
    schemes: tuple = SCHEMES
    learning_rate: float = 0.01
    batch_size: int = 32
    optimizer: str = "sgd"
    test_samples: int = 2000


def run_accuracy_comparison(options: AccuracyOptions):
    """Per-round accuracy of plain vs encrypted federated averaging.

    The same seeds drive training in every scheme, so trajectories differ
    only through the aggregation arithmetic. Returns (rows, summary) where
    rows are (scheme, trial, round, accuracy) and summary maps scheme ->
    (mean final accuracy, std final accuracy).
    """
    net = fedavg.DenseNet()
    rows = []
    finals = {scheme: [] for scheme in options.schemes}
    for trial in range(options.trials):
        datasets, test = fedavg.synth_dataset(
            options.devices,
            options.samples_per_device,
            skew=options.skew,
            seed=derive_int(options.seed, "data", trial),
            test_samples=options.test_samples,
        )
        w0 = net.init_weights(derive_rng(options.seed, "init", trial))
        for scheme in options.schemes:
            averager = (
                None
                if scheme == "plain"
                else EncryptedAverager(scheme, options.preset, options.devices,
                                       seed=derive_int(options.seed, "keys", trial))
            )
            w = w0
            for rnd in range(1, options.rounds + 1):
                locals_ = []
                for dev, ds in enumerate(datasets):
                    cfg = fedavg.TrainingConfig(
                        learning_rate=options.learning_rate,
                        batch_size=options.batch_size,
                        local_epochs=options.local_epochs,
                        optimizer=options.optimizer,
                        seed=derive_int(options.seed, trial, dev, rnd, "train"),
                    )
                    locals_.append(fedavg.local_update(net, w, ds, cfg))
                if averager is None:
                    w = fedavg.average(locals_)
                else:
                    averaged = averager.average([lw.values for lw in locals_])
                    w = fedavg.ModelWeights(averaged, w0.layout)
                rows.append((scheme, trial, rnd, fedavg.evaluate(net, w, test)))
            finals[scheme].append(rows[-1][3])
    summary = {
        scheme: (float(np.mean(accs)), float(np.std(accs))) for scheme, accs in finals.items()
    }
    return rows, summary


def rounds_to_threshold(rows, scheme, threshold):
    """Per trial, the first round whose accuracy reaches threshold (None if never)."""
    by_trial = {}
    for s, trial, rnd, acc in rows:
        if s != scheme:
            continue
        if acc >= threshold and trial not in by_trial:
            by_trial[trial] = rnd
    return by_trial


def write_accuracy_csv(rows, path):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(ACCURACY_CSV_HEADER)
        for scheme, trial, rnd, acc in rows:
            writer.writerow([scheme, trial, rnd, f"{acc:.6f}"])


# --- loopback simulation --------------------------------------------------------


@dataclass(frozen=True)
class SimulationResult:
    phase: str
    failed: bool
    abort_reason: str | None
    accuracies: tuple
    final_accuracy: float | None


def run_simulation(config, samples_per_device=400, skew=0.5, data_seed=None,
                   test_samples=2000) -> SimulationResult:
    """All-in-one loopback run of the full protocol; evaluates every round."""
    data_seed = config.seed if data_seed is None else data_seed
    datasets, test = fedavg.synth_dataset(
        config.devices, samples_per_device, skew=skew,
        seed=derive_int(data_seed, "sim-data"), test_samples=test_samples,
    )
    server = FederationServer(config)
    devices = [
        FederationDevice(i + 1, ds, master_seed=config.seed) for i, ds in enumerate(datasets)
    ]
    run_loopback_session(server, devices)
    net = server.net
    accuracies = tuple(
        fedavg.evaluate(net, w, test) for w in server.weights_history[1:]
    )
    return SimulationResult(
        phase=server.phase.value,
        failed=server.round_failed,
        abort_reason=server.abort_reason,
        accuracies=accuracies,
        final_accuracy=accuracies[-1] if accuracies else None,
    )
