"""Command line entry points.

    mkfed server    --transport http|tcp   long-running aggregation service
    mkfed device    --device-id N          one federated device (thin client)
    mkfed simulate                         all-in-one loopback run, accuracy CSV
    mkfed bench                            per-phase timing sweep, CSV
    mkfed sizes                            wire-size report

Exit codes: 0 success, 1 runtime failure, 2 usage errors.
"""

import argparse
import sys
from pathlib import Path

from .errors import MkfedError
from .params import PRESETS


def _add_common(sp):
    sp.add_argument("--config", type=Path, help="key=value config file")
    sp.add_argument("--preset", choices=sorted(PRESETS), help="parameter preset")
    sp.add_argument("--seed", type=int, help="master seed")
    sp.add_argument("--rounds", type=int, help="aggregation rounds")
    sp.add_argument("--local-epochs", type=int, dest="local_epochs")
    sp.add_argument("--devices", type=int, help="expected device count")
    sp.add_argument("--out", type=Path, help="output file")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="mkfed",
        description="Privacy-preserving federated averaging over multi-key encryption",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_server = sub.add_parser("server", help="run the aggregation server")
    _add_common(p_server)
    p_server.add_argument("--listen", help="host:port to bind")
    p_server.add_argument("--transport", choices=("http", "tcp"), default="http")
    p_server.add_argument("--timeout", type=float, dest="timeout_s")

    p_device = sub.add_parser("device", help="run one federated device")
    _add_common(p_device)
    p_device.add_argument("--device-id", type=int, required=True, dest="device_id")
    p_device.add_argument("--transport", choices=("http", "tcp"), default="http")
    p_device.add_argument("--url", help="service URL (http transport)")
    p_device.add_argument("--connect", help="host:port (tcp transport)")
    p_device.add_argument("--data", type=Path, help="dataset snapshot; default synthetic shard")
    p_device.add_argument("--samples", type=int, default=400)
    p_device.add_argument("--skew", type=float, default=0.5)
    p_device.add_argument("--data-seed", type=int, dest="data_seed")

    p_sim = sub.add_parser("simulate", help="all-in-one loopback federation run")
    _add_common(p_sim)
    p_sim.add_argument("--samples", type=int, default=400)
    p_sim.add_argument("--skew", type=float, default=0.5)
    p_sim.add_argument("--data-seed", type=int, dest="data_seed")

    p_bench = sub.add_parser("bench", help="phase timing sweep over weight counts")
    _add_common(p_bench)
    p_bench.add_argument("--weights", default="492,4920,49200,320000",
                         help="comma-separated weight counts")
    p_bench.add_argument("--reps", type=int, default=4)

    p_sizes = sub.add_parser("sizes", help="serialized message size report")
    _add_common(p_sizes)
    p_sizes.add_argument("--weights", type=int, default=492)

    return parser


def _config_from_args(args, **extra):
    from .protocol.config import load_config

    overrides = dict(
        preset=args.preset,
        seed=args.seed,
        rounds=args.rounds,
        local_epochs=args.local_epochs,
        devices=args.devices,
    )
    overrides.update(extra)
    return load_config(getattr(args, "config", None), **overrides)


def _device_dataset(args, config):
    from . import fedavg

    if args.data:
        return fedavg.load_dataset(args.data)
    data_seed = args.data_seed if args.data_seed is not None else config.seed
    from .seeds import derive_int

    shards, _ = fedavg.synth_dataset(
        config.devices, args.samples, skew=args.skew, seed=derive_int(data_seed, "sim-data")
    )
    return shards[args.device_id - 1]


def cmd_server(args):
    config = _config_from_args(
        args, listen_address=args.listen, timeout_s=args.timeout_s
    )
    host, port = config.host_port()
    if args.transport == "http":
        import uvicorn

        from .service import create_app

        uvicorn.run(create_app(config), host=host, port=port, log_level="warning")
        return 0
    from .protocol import FederationServer, TcpServerRunner
    from .protocol.server import ServerPhase

    server = FederationServer(config)
    runner = TcpServerRunner(server, host, port).start()
    print(f"serving tcp federation on {runner.address[0]}:{runner.address[1]}", flush=True)
    runner.join()
    if server.phase is ServerPhase.DONE:
        print(f"session complete: {server.plan.rounds} rounds, "
              f"{len(server.registered)} devices")
        return 0
    print(f"session aborted: {server.abort_reason}", file=sys.stderr)
    return 1


def cmd_device(args):
    config = _config_from_args(args)
    dataset = _device_dataset(args, config)
    from .protocol import FederationDevice

    device = FederationDevice(args.device_id, dataset, master_seed=config.seed)
    if args.transport == "tcp":
        if not args.connect:
            raise MkfedError("tcp transport needs --connect host:port")
        host, _, port = args.connect.rpartition(":")
        from .protocol import run_tcp_device

        run_tcp_device(device, host, int(port), timeout=config.timeout_s)
    else:
        url = args.url or f"http://{config.listen_address}"
        from .service import HttpDeviceRunner

        HttpDeviceRunner(device, base_url=url, poll_budget_s=config.timeout_s * 10).run()
    if device.done:
        print(f"device {args.device_id} finished {device.round_id} rounds")
        return 0
    print(f"device {args.device_id} aborted: {device.aborted}", file=sys.stderr)
    return 1


def cmd_simulate(args):
    from . import bench

    config = _config_from_args(args)
    result = bench.run_simulation(
        config,
        samples_per_device=args.samples,
        skew=args.skew,
        data_seed=args.data_seed,
    )
    out = args.out or Path("accuracy.csv")
    rows = [
        ("xmkckks", 0, rnd + 1, acc) for rnd, acc in enumerate(result.accuracies)
    ]
    bench.write_accuracy_csv(rows, out)
    for scheme, _, rnd, acc in rows:
        print(f"round {rnd}: accuracy {acc:.4f}")
    if result.failed:
        print(f"simulation failed: {result.abort_reason}", file=sys.stderr)
        return 1
    print(f"final accuracy {result.final_accuracy:.4f}; wrote {out}")
    return 0


def cmd_bench(args):
    from . import bench

    try:
        weight_counts = tuple(int(w) for w in args.weights.split(",") if w)
    except ValueError as exc:
        raise MkfedError(f"bad --weights list: {exc}") from exc
    records = bench.bench_phases(
        preset=args.preset or "standard",
        weight_counts=weight_counts,
        reps=args.reps,
        devices=args.devices or 3,
        seed=args.seed or 0,
    )
    out = args.out or Path("bench.csv")
    bench.write_bench_csv(records, out)
    medians = bench.median_times(records)
    for (scheme, phase, wc), ms in sorted(medians.items()):
        print(f"{scheme:8s} {phase:10s} {wc:>8d} weights  {ms:10.3f} ms")
    print(f"wrote {len(records)} records to {out}")
    return 0


def cmd_sizes(args):
    from . import bench

    report = bench.measure_sizes(
        args.preset or "standard", args.devices or 10, args.weights, seed=args.seed or 0
    )
    print(
        f"preset {report.preset}: {report.weight_count} weights in {report.chunks} chunk(s), "
        f"{report.ring_element_bytes} bytes per ring element"
    )
    for row in report.to_rows():
        print(
            f"{row['message']:16s} {row['elements_per_chunk']:>3d} elem/chunk  "
            f"{row['ring_payload_bytes']:>12d} ring bytes  {row['total_bytes']:>12d} total"
        )
    if args.out:
        bench.write_sizes_csv(report, args.out)
        print(f"wrote {args.out}")
    return 0


_COMMANDS = {
    "server": cmd_server,
    "device": cmd_device,
    "simulate": cmd_simulate,
    "bench": cmd_bench,
    "sizes": cmd_sizes,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except MkfedError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
