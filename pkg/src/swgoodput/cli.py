"""Command-line front end: payload sweeps, optimization and validation.

Exit codes: 0 success, 1 config error, 2 numerical error, 3 validation failure.
"""
from __future__ import annotations

import argparse
import csv
import io
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, fields, replace
from pathlib import Path

from . import analysis, checks, simulator
from .channel import GilbertParams, from_mean_ber_and_burst
from .config import ExperimentConfig, parse_config
from .errors import ConfigError, NumericalError
from .segmentation import (
    BITS_PER_BYTE,
    DiscreteMessageDist,
    edge_probability,
    mean_packet_size,
    packet_mix,
)

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_VALIDATION = 0, 1, 2, 3
SIG_DIGITS = 12


@dataclass(frozen=True)
class SweepRow:
    payload_bytes: int
    payload_bits: int
    edge_prob: float
    mean_packet_bytes: float
    mean_packet_bits: float
    goodput_exact_bps: float | None = None
    goodput_const_approx_bps: float | None = None
    goodput_sim_bps: float | None = None
    sim_stderr_bps: float | None = None

    def rounded(self) -> "SweepRow":
        """The row as it reads back from CSV."""
        return SweepRow(**{f.name: _parse_cell(_fmt(getattr(self, f.name)), f.name)
                           for f in fields(self)})


COLUMNS = [f.name for f in fields(SweepRow)]


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, int):
        return str(value)
    return format(value, f".{SIG_DIGITS}g")


def _parse_cell(text: str, name: str):
    if text == "":
        return None
    return int(text) if name in ("payload_bytes", "payload_bits") else float(text)


def evaluate_payload(cfg: ExperimentConfig, payload_bytes: int, mode: str,
                     sim_cfg: simulator.SimConfig | None = None) -> SweepRow:
    seg = cfg.segmentation(payload_bytes)
    timing = cfg.timing
    mean_bits = mean_packet_size(cfg.message, seg)
    row = dict(
        payload_bytes=payload_bytes,
        payload_bits=seg.payload,
        edge_prob=edge_probability(cfg.message, seg.payload),
        mean_packet_bytes=mean_bits / BITS_PER_BYTE,
        mean_packet_bits=mean_bits,
    )
    if mode in ("analytic", "both"):
        report = analysis.goodput(packet_mix(cfg.message, seg), timing, cfg.channel)
        row["goodput_exact_bps"] = report.goodput
        row["goodput_const_approx_bps"] = analysis.goodput_const_approx(
            seg.payload, seg.header, timing, cfg.channel)
    if mode in ("simulate", "both"):
        sim = simulator.run(sim_cfg or cfg.sim, cfg.message, seg, timing, cfg.channel,
                            stream=payload_bytes)
        row["goodput_sim_bps"] = sim.goodput_est
        row["sim_stderr_bps"] = sim.goodput_stderr
    return SweepRow(**row)


def run_sweep(cfg: ExperimentConfig, mode: str | None = None) -> list[SweepRow]:
    """One row per payload on the grid, in increasing payload order.

    With several workers the grid points run concurrently and each simulation
    runs its replications serially; every grid point has its own RNG streams,
    so the rows do not depend on the worker count.
    """
    mode = mode or cfg.mode
    payloads = cfg.payloads
    if cfg.sim.workers > 1 and len(payloads) > 1:
        inner = replace(cfg.sim, workers=1)
        with ThreadPoolExecutor(max_workers=cfg.sim.workers) as pool:
            return list(pool.map(lambda d: evaluate_payload(cfg, d, mode, inner), payloads))
    return [evaluate_payload(cfg, d, mode) for d in payloads]


def write_csv(rows: list[SweepRow], cfg: ExperimentConfig, out, trailer: list[str] = ()) -> None:
    for line in cfg.to_text().splitlines():
        out.write(f"# {line}\n")
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(COLUMNS)
    for row in rows:
        writer.writerow([_fmt(getattr(row, c)) for c in COLUMNS])
    for line in trailer:
        out.write(f"# {line}\n")


def read_csv(text: str) -> tuple[str, list[SweepRow]]:
    """Split a sweep CSV into (echoed config text, rows)."""
    comments, body = [], []
    for line in text.splitlines():
        if line.startswith("#"):
            comments.append(line[2:] if line.startswith("# ") else line[1:])
        elif line:
            body.append(line)
    reader = csv.DictReader(body)
    rows = [SweepRow(**{c: _parse_cell(r[c], c) for c in COLUMNS}) for r in reader]
    return "\n".join(comments) + "\n", rows


def optimize(cfg: ExperimentConfig) -> tuple[int, float]:
    """Goodput-maximizing payload in bytes on the configured grid."""
    best_bits, value = analysis.optimal_payload(
        cfg.message, cfg.header_bytes * BITS_PER_BYTE, cfg.timing, cfg.channel,
        (cfg.sweep_min * BITS_PER_BYTE, cfg.sweep_max * BITS_PER_BYTE),
        cfg.sweep_step * BITS_PER_BYTE,
    )
    return best_bits // BITS_PER_BYTE, value


def validate(cfg: ExperimentConfig, perturb: float = 1.0) -> list[checks.CheckResult]:
    """Analytic-vs-simulation checks at each configured payload.

    ``perturb`` scales the analytic goodput before comparison; it exists so the
    harness can be shown to fail.
    """
    results = []
    timing = cfg.timing
    for payload_bytes in cfg.check_payloads:
        seg = cfg.segmentation(payload_bytes)
        mix = packet_mix(cfg.message, seg)
        exact = analysis.goodput(mix, timing, cfg.channel).goodput * perturb
        sim = simulator.run(cfg.sim, cfg.message, seg, timing, cfg.channel, stream=payload_bytes)
        for res in (checks.goodput_agreement(sim, exact),
                    checks.attempts_check(sim, timing.timeout_bits, cfg.channel)):
            results.append(replace(res, name=f"{res.name}@{payload_bytes}B"))
        if cfg.channel.is_iid:
            sizes = [s for s, _ in mix.atoms]
            res = checks.iid_equivalence(cfg.channel, sizes, timing.timeout_bits)
            results.append(replace(res, name=f"{res.name}@{payload_bytes}B"))
    return results


FIG_BERS = (1e-6, 1e-5, 1e-4, 1e-3)
FIG_BURSTS = (10.0, 100.0, 1000.0)


def figure_tables(cfg: ExperimentConfig) -> dict[str, tuple[list[str], list[list]]]:
    """Data behind the edge-probability and goodput-versus-payload figures."""
    payloads = cfg.payloads
    timing, h = cfg.timing, cfg.header_bytes * BITS_PER_BYTE
    dist: DiscreteMessageDist = cfg.message

    def curve(params: GilbertParams):
        return analysis.goodput_curve(dist, h, timing, params,
                                      [d * BITS_PER_BYTE for d in payloads])

    tables = {}
    tables["fig6_edge_probability"] = (
        ["payload_bytes", "edge_prob"],
        [[d, edge_probability(dist, d * BITS_PER_BYTE)] for d in payloads],
    )
    rows = []
    for p_e in FIG_BERS:
        params = GilbertParams.iid(p_e)
        exact = curve(params)
        for d, g in zip(payloads, exact):
            approx = analysis.goodput_const_approx(d * BITS_PER_BYTE, h, timing, params)
            rows.append([p_e, d, g, approx])
    tables["fig7_exact_vs_constant"] = (
        ["mean_ber", "payload_bytes", "goodput_exact_bps", "goodput_const_approx_bps"], rows)
    rows = []
    for p_e in FIG_BERS:
        rows += [[p_e, d, g] for d, g in zip(payloads, curve(GilbertParams.iid(p_e)))]
    tables["fig8_iid"] = (["mean_ber", "payload_bytes", "goodput_exact_bps"], rows)
    rows = []
    for burst in FIG_BURSTS:
        params = from_mean_ber_and_burst(1e-4, burst)
        rows += [[burst, d, g] for d, g in zip(payloads, curve(params))]
    tables["fig9_burst"] = (["burst_len_bits", "payload_bytes", "goodput_exact_bps"], rows)
    return tables


def _open_out(path: str | None):
    if path is None or path == "-":
        return sys.stdout, False
    return open(path, "w", newline=""), True


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="swgoodput",
        description="Stop-and-wait goodput over a Gilbert channel with message segmentation.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="experiment config file (defaults used if omitted)")
        p.add_argument("--out", help="output path (default: stdout)")
        p.add_argument("--seed", type=int, help="override the simulation seed")
        p.add_argument("--workers", type=int, help="parallel workers (results do not depend on it)")

    common(sub.add_parser("analyze", help="closed-form sweep over the payload grid"))
    common(sub.add_parser("simulate", help="Monte Carlo sweep over the payload grid"))
    p = sub.add_parser("sweep", help="sweep in the configured (or given) mode")
    common(p)
    p.add_argument("--mode", choices=["analytic", "simulate", "both"])
    common(sub.add_parser("optimize", help="goodput-maximizing payload on the grid"))
    p = sub.add_parser("validate", help="check closed forms against simulation")
    common(p)
    p.add_argument("--perturb-analytic", type=float, default=1.0, help=argparse.SUPPRESS)
    p = sub.add_parser("figures", help="write figure data tables into a directory")
    common(p)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = parse_config(args.config).with_overrides(
            seed=args.seed, mode=getattr(args, "mode", None), workers=args.workers)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    try:
        if args.command in ("analyze", "simulate", "sweep"):
            mode = {"analyze": "analytic", "simulate": "simulate"}.get(args.command, cfg.mode)
            rows = run_sweep(cfg, mode)
            out, close = _open_out(args.out)
            try:
                write_csv(rows, cfg.with_overrides(mode=mode), out)
            finally:
                if close:
                    out.close()
        elif args.command == "optimize":
            payload, value = optimize(cfg)
            result = f"optimum payload_bytes={payload} goodput_bps={_fmt(value)}"
            if args.out:
                rows = run_sweep(cfg, "analytic")
                with open(args.out, "w", newline="") as out:
                    write_csv(rows, cfg.with_overrides(mode="analytic"), out, [result])
            print(result)
        elif args.command == "validate":
            results = validate(cfg, args.perturb_analytic)
            text = "\n".join(r.line() for r in results) + "\n"
            out, close = _open_out(args.out)
            try:
                out.write(text)
            finally:
                if close:
                    out.close()
            if not all(r.passed for r in results):
                return EXIT_VALIDATION
        elif args.command == "figures":
            target = Path(args.out or "figures")
            target.mkdir(parents=True, exist_ok=True)
            for name, (header, rows) in figure_tables(cfg).items():
                buf = io.StringIO()
                for line in cfg.to_text().splitlines():
                    buf.write(f"# {line}\n")
                writer = csv.writer(buf, lineterminator="\n")
                writer.writerow(header)
                writer.writerows([[_fmt(v) for v in r] for r in rows])
                (target / f"{name}.csv").write_text(buf.getvalue())
                print(target / f"{name}.csv")
    except NumericalError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except BrokenPipeError:
        # reader went away (e.g. piped into head); silence the flush at exit
        os.dup2(os.open(os.devnull, os.O_WRONLY), sys.stdout.fileno())
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
