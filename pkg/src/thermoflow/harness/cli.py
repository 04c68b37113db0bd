"""Command-line entry point: ``python -m thermoflow <subcommand> ...``.

Exit codes: 0 success, 1 data or I/O error, 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from ..bridge import Ring, bench_ring, harvest
from ..errors import CheckpointMissing, ThermoflowError
from ..ingest import PcapReader, save_pcap
from ..network import Hyper, TrainConfig, load_checkpoint, save_checkpoint, train
from ..network.train import calibrate_on
from ..physics import (
    DEFAULT_N,
    PRIVATE_NETS,
    UNLABELED,
    WindowSet,
    WindowStreamCounters,
    fit_norm_stats,
    normalize,
    read_windows,
    window_stream,
    write_windows,
)
from ..synth import CorpusConfig, build_corpus, generate, parse_corpus_config, time_ordered
from .detect import detect_stream
from .experiments import STRESS_LEVELS, evaluate, format_stress, stress

log = logging.getLogger("thermoflow")


def _floats(text: str) -> list[float]:
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from exc


def _load_params(path):
    if path is None or not Path(path).exists():
        raise CheckpointMissing(f"checkpoint not found: {path}")
    return load_checkpoint(path)


def _out(args):
    return open(args.out, "w") if getattr(args, "out", None) else sys.stdout


def cmd_extract(args) -> int:
    with open(args.pcap, "rb") as fh:
        reader = PcapReader(fh)
        packets = list(reader)
    nets = args.local_nets.split(",") if args.local_nets else PRIVATE_NETS
    counters = WindowStreamCounters()
    raw = list(window_stream(packets, args.n, None, nets, args.label, counters, normalized=False))
    if args.checkpoint:
        stats = _load_params(args.checkpoint).stats
    elif args.stats:
        stats = read_windows(args.stats).stats
    elif raw:
        stats = fit_norm_stats(np.concatenate([w.data for w in raw]))
    else:
        raise ThermoflowError("no complete windows in capture and no statistics supplied")
    ws = WindowSet.from_windows(raw, stats, args.n)
    ws.data = normalize(ws.data.astype(np.float64), stats).astype(np.float32)
    write_windows(args.out, ws)
    pc = reader.counters
    print(f"records\t{pc.records}\npackets\t{pc.yielded}\nskipped\t{pc.skipped}")
    print(f"windows\t{counters.windows}\ndropped_partials\t{counters.dropped_partials}")
    return 0


def cmd_synth(args) -> int:
    if args.config:
        cfg = parse_corpus_config(Path(args.config).read_text())
    else:
        cfg = CorpusConfig.default(args.windows, args.n, args.seed)
    train_set, test_set = build_corpus(cfg, args.out)
    print(f"train\t{len(train_set)}\ntest\t{len(test_set)}\nout\t{args.out}")
    if args.pcap:
        packets = []
        for profile, flows, per_flow in cfg.profiles:
            packets.extend(generate(profile, flows, per_flow * cfg.n))
        save_pcap(time_ordered(packets), args.pcap)
        print(f"pcap\t{args.pcap}\t{len(packets)}")
    return 0


def cmd_train(args) -> int:
    data = read_windows(args.windows)
    cfg = TrainConfig(
        lr=args.lr, batch_size=args.batch, epochs=args.epochs, seed=args.seed, weight_decay=args.weight_decay
    )
    result = train(data, cfg, Hyper(args.d, args.d_h, args.d_s, data.n))
    save_checkpoint(args.out, result.params)
    fields = ("epoch", "train_loss", "val_loss", "val_f1", "batches_seen", "batches_applied", "batches_discarded", "baseline_entropy", "seconds")
    lines = ["\t".join(fields)]
    for m in result.history:
        lines.append("\t".join(str(getattr(m, f)) for f in fields))
    text = "\n".join(lines) + "\n"
    if args.log:
        Path(args.log).write_text(text)
    sys.stdout.write(text)
    print(f"# best_epoch\t{result.best_epoch}\tcheckpoint\t{args.out}")
    return 0


def cmd_eval(args) -> int:
    params = _load_params(args.checkpoint)
    report = evaluate(params, read_windows(args.windows))
    sys.stdout.write(report.to_text())
    if args.out:
        Path(args.out).write_text(report.to_json())
    return 0


def cmd_stress(args) -> int:
    params = _load_params(args.checkpoint)
    rows = stress(params, read_windows(args.windows), args.noise, seed=args.seed)
    text = format_stress(rows)
    sys.stdout.write(text)
    if args.out:
        Path(args.out).write_text(text)
    return 0


def cmd_calibrate(args) -> int:
    params = _load_params(args.checkpoint)
    windows = read_windows(args.windows)
    params.tvd = calibrate_on(params, windows, args.fpr)
    save_checkpoint(args.out or args.checkpoint, params)
    print(f"baseline_entropy\t{params.tvd.baseline_entropy:.6f}\ntau_threshold\t{params.tvd.tau_threshold:.6f}")
    return 0


def cmd_harvest(args) -> int:
    try:
        ring = Ring.attach(args.ring)
    except ThermoflowError:
        ring = Ring.create(args.ring, args.capacity)
    with open(args.pcap, "rb") as fh, ring:
        sent = harvest(PcapReader(fh), ring)
    print(f"published\t{sent}")
    return 0


def cmd_detect(args) -> int:
    params = _load_params(args.checkpoint)
    out = _out(args)
    try:
        with Ring.attach(args.ring) as ring:
            summary = detect_stream(
                ring, params, args.n, args.batch, idle_timeout=args.idle_timeout,
                on_verdict=lambda v: out.write(v.format() + "\n"),
            )
    finally:
        if out is not sys.stdout:
            out.close()
    print(f"# slots\t{summary.slots_consumed}\twindows\t{summary.windows}\tbatches\t{summary.batches}", file=sys.stderr)
    return 0


def cmd_bench(args) -> int:
    rep = bench_ring(args.records, args.capacity, args.batch, stall_prob=args.stall, consumer_stall_prob=args.stall, seed=args.seed)
    sys.stdout.write(rep.to_text())
    if args.out:
        Path(args.out).write_text(json.dumps({**rep.__dict__, "records_per_sec": rep.records_per_sec}, indent=2))
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="thermoflow", description="Flow-physics anomaly detection toolkit")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("extract", help="pcap -> window-tensor file")
    s.add_argument("--pcap", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--n", type=int, default=DEFAULT_N)
    s.add_argument("--label", type=int, choices=(-1, 0, 1), default=UNLABELED)
    s.add_argument("--checkpoint", help="reuse the normalization stats stored in a checkpoint")
    s.add_argument("--stats", help="reuse the normalization stats of a window file")
    s.add_argument("--local-nets", help="comma-separated CIDR blocks counted as egress sources")
    s.set_defaults(func=cmd_extract)

    s = sub.add_parser("synth", help="build a labeled synthetic corpus")
    s.add_argument("--config", help="key=value corpus description")
    s.add_argument("--out", required=True, help="output directory for train.aegt / test.aegt")
    s.add_argument("--windows", type=int, default=2000)
    s.add_argument("--n", type=int, default=DEFAULT_N)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--pcap", help="also export the corpus packets as a pcap")
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("train", help="windows -> checkpoint")
    s.add_argument("--windows", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--epochs", type=int, default=20)
    s.add_argument("--batch", type=int, default=32)
    s.add_argument("--lr", type=float, default=3e-3)
    s.add_argument("--weight-decay", type=float, default=1e-2)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--d", type=int, default=16)
    s.add_argument("--d-h", type=int, default=16)
    s.add_argument("--d-s", type=int, default=8)
    s.add_argument("--log", help="also write the per-epoch table here")
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("eval", help="metrics of a checkpoint on labeled windows")
    s.add_argument("--checkpoint", required=True)
    s.add_argument("--windows", required=True)
    s.add_argument("--out", help="machine-readable JSON report")
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("detect", help="attach to a ring and stream verdict lines")
    s.add_argument("--ring", required=True)
    s.add_argument("--checkpoint", required=True)
    s.add_argument("--n", type=int)
    s.add_argument("--batch", type=int, default=64)
    s.add_argument("--idle-timeout", type=float, default=None)
    s.add_argument("--out")
    s.set_defaults(func=cmd_detect)

    s = sub.add_parser("harvest", help="replay a pcap into a ring (producer role)")
    s.add_argument("--pcap", required=True)
    s.add_argument("--ring", required=True)
    s.add_argument("--capacity", type=int, default=1 << 16)
    s.set_defaults(func=cmd_harvest)

    s = sub.add_parser("stress", help="F1 under Gaussian IAT noise")
    s.add_argument("--checkpoint", required=True)
    s.add_argument("--windows", required=True)
    s.add_argument("--noise", type=_floats, default=list(STRESS_LEVELS))
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out")
    s.set_defaults(func=cmd_stress)

    s = sub.add_parser("bench-ring", help="ring throughput and correctness audit")
    s.add_argument("--records", type=int, default=10**6)
    s.add_argument("--capacity", type=int, default=1 << 16)
    s.add_argument("--batch", type=int, default=64)
    s.add_argument("--stall", type=float, default=0.0, help="probability of a random stall per chunk")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--ring", help="unused placeholder for symmetry with detect", default=None)
    s.add_argument("--out")
    s.set_defaults(func=cmd_bench)

    s = sub.add_parser("calibrate-tvd", help="fit baseline entropy and threshold on benign windows")
    s.add_argument("--checkpoint", required=True)
    s.add_argument("--windows", required=True)
    s.add_argument("--fpr", type=float, default=0.01, help="tolerated benign flag rate")
    s.add_argument("--out", help="write the recalibrated checkpoint here (default: in place)")
    s.set_defaults(func=cmd_calibrate)
    return p


def cli(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except (ThermoflowError, OSError, ValueError) as exc:
        print(f"thermoflow {args.command}: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(cli())
