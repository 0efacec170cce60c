"""Command-line entry point.

Subcommands: enhance, bench-rtf, probe, count, describe, mix, score.
Configuration is flags-only for reproducibility.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys

import numpy as np

from . import metrics, runtime, zoo
from .wavio import read_wav, write_wav
from .weights import load as load_archive, random_archive, save as save_archive, validate


def _add_model_args(p):
    p.add_argument("--variant", choices=["taer", "taerlite"], required=True)
    p.add_argument("--order", type=int, default=3, help="expansion order Q")
    p.add_argument("--channels", type=int, default=1, help="microphones M")


def _cmd_enhance(args) -> int:
    report = runtime.enhance_file(args.model, args.input, args.output,
                                  dump_dir=args.dump_orders)
    print(f"enhanced {args.input} -> {args.output} "
          f"({report['frames']} frames, RTF {report['rtf']:.3f})")
    if args.report:
        with open(args.report, "w", newline="") as f:
            w = csv.DictWriter(f, fieldnames=["utterance", "samples", "frames",
                                              "wall_s", "rtf"])
            w.writeheader()
            w.writerow({k: report[k] for k in w.fieldnames})
    return 0


def _cmd_bench(args) -> int:
    result = runtime.bench_rtf(args.model, seconds=args.seconds, runs=args.runs)
    for i, r in enumerate(result["runs"], 1):
        print(f"run {i}: RTF {r:.4f}")
    print(f"mean RTF: {result['mean']:.4f}")
    return 0


def _cmd_probe(args) -> int:
    graph = zoo.build(args.variant, args.order, args.channels)
    symbolic = zoo.receptive_field(graph)
    weights = random_archive(graph, seed=args.seed)
    measured = zoo.probe_receptive_field(graph, weights.astype64())
    print(f"zeroth-order path receptive field: {symbolic.zeroth} frames "
          f"(probe: {measured.zeroth})")
    if graph.order > 0:
        print(f"high-order path receptive field: {symbolic.high_order} frames "
              f"(probe: {measured.high_order})")
    if (symbolic.zeroth, symbolic.high_order) != (measured.zeroth, measured.high_order):
        print("probe disagrees with symbolic accumulation", file=sys.stderr)
        return 1
    return 0


def _cmd_count(args) -> int:
    graph = zoo.build(args.variant, args.order, args.channels)
    params = graph.count_params()
    macs = graph.count_macs_per_frame()
    print(f"{args.variant} Q={args.order} M={args.channels}")
    print(f"params: {params} ({params / 1e6:.3f} M)")
    print(f"MACs/frame: {macs} -> {macs * 100 / 1e9:.3f} G/s at 100 frames/s")
    return 0


def _cmd_describe(args) -> int:
    graph = zoo.build(args.variant, args.order, args.channels)
    print(graph.describe_json() if args.json else graph.describe_text())
    return 0


def _cmd_mix(args) -> int:
    _, clean = read_wav(args.clean)
    _, noise = read_wav(args.noise)
    mixture = metrics.mix(clean[0], noise[0], args.snr)
    write_wav(args.out, mixture)
    snr_in = metrics.si_snr(mixture, clean[0])
    print(f"wrote {args.out} at {args.snr:+.1f} dB (SI-SNR vs clean: {snr_in:+.2f} dB)")
    return 0


def _cmd_score(args) -> int:
    _, clean = read_wav(args.clean)
    rows = []
    si_in = ""
    if args.noisy:
        _, noisy = read_wav(args.noisy)
        si_in = metrics.si_snr(noisy[0], clean[0])
    _, est = read_wav(args.enhanced)
    si_out = metrics.si_snr(est[0], clean[0])
    rows.append({"utterance": args.enhanced, "snr_in": args.snr_in,
                 "si_snr_in": si_in, "si_snr_out": si_out})
    if si_in != "":
        print(f"SI-SNR in:  {si_in:+.2f} dB")
    print(f"SI-SNR out: {si_out:+.2f} dB")
    if args.csv:
        metrics.write_score_report(args.csv, rows)
    return 0


def _cmd_validate(args) -> int:
    archive = load_archive(args.model)
    graph = zoo.build(archive.variant, archive.order, archive.channels)
    report = validate(archive, graph)
    print(report.summary())
    return 0 if report.ok else 1


def _cmd_init_random(args) -> int:
    graph = zoo.build(args.variant, args.order, args.channels)
    archive = random_archive(graph, seed=args.seed, weight_scale=args.scale)
    save_archive(archive, args.out)
    report = validate(load_archive(args.out), graph)
    print(f"wrote {args.out} ({archive.total_elements()} parameters); "
          f"validate: {'ok' if report.ok else report.summary()}")
    return 0 if report.ok else 1


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="taer",
                                 description="Causal streaming speech enhancement")
    sub = ap.add_subparsers(dest="cmd", required=True)

    p = sub.add_parser("enhance", help="enhance a 16 kHz WAV file")
    p.add_argument("--model", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--dump-orders", default=None, metavar="DIR")
    p.add_argument("--report", default=None, metavar="CSV")
    p.set_defaults(fn=_cmd_enhance)

    p = sub.add_parser("bench-rtf", help="real-time factor on synthetic noise")
    p.add_argument("--model", required=True)
    p.add_argument("--seconds", type=float, default=2.0)
    p.add_argument("--runs", type=int, default=5)
    p.set_defaults(fn=_cmd_bench)

    p = sub.add_parser("probe", help="receptive field: symbolic + perturbation probe")
    _add_model_args(p)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(fn=_cmd_probe)

    p = sub.add_parser("count", help="parameter and MAC counts")
    _add_model_args(p)
    p.set_defaults(fn=_cmd_count)

    p = sub.add_parser("describe", help="per-layer table")
    _add_model_args(p)
    p.add_argument("--json", action="store_true")
    p.set_defaults(fn=_cmd_describe)

    p = sub.add_parser("mix", help="mix clean+noise at a target SNR")
    p.add_argument("--clean", required=True)
    p.add_argument("--noise", required=True)
    p.add_argument("--snr", type=float, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=_cmd_mix)

    p = sub.add_parser("score", help="SI-SNR scoring")
    p.add_argument("--clean", required=True)
    p.add_argument("--enhanced", required=True)
    p.add_argument("--noisy", default=None)
    p.add_argument("--snr-in", default="")
    p.add_argument("--csv", default=None)
    p.set_defaults(fn=_cmd_score)

    p = sub.add_parser("validate", help="check an archive against its declared graph")
    p.add_argument("--model", required=True)
    p.set_defaults(fn=_cmd_validate)

    p = sub.add_parser("init-random", help="write a random weight archive")
    _add_model_args(p)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--scale", type=float, default=1.0)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=_cmd_init_random)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
