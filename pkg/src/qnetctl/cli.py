"""Command-line entry point: ``qnetctl <subcommand> ...``.

Exit codes: 0 success, 1 usage error, 2 configuration error, 3 runtime error.
Errors are reported on stderr as a single JSON object.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import kernel as k
from . import protocols as proto
from .capacity import UnsupportedRegimeError, estimate_capacity_region, stability_sweep
from .config import ConfigError, load_config
from .fidelity import distill_fidelity
from .netsim import run

EXIT_OK, EXIT_USAGE, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{message}\n{self.format_usage().strip()}")


def _floats(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _fmt(x: float) -> str:
    return f"{x:.12g}"


def _write(text: str, out: str | None, stdout) -> None:
    if out:
        Path(out).write_text(text)
    else:
        stdout.write(text)


# -- subcommands ---------------------------------------------------------------


def cmd_swap_circuit(args, stdout):
    tables = proto.swap_step_tables()
    rng = np.random.default_rng(args.seed)
    shots = proto.run_swap_circuit(args.shots, rng)
    stdout.write("# basis-state probabilities after each step (state written q3q2q1q0)\n")
    stdout.write("state," + ",".join(tables) + "\n")
    for idx in range(16):
        row = [tables[s][idx] for s in tables]
        if any(p > k.STATE_ATOL for p in row):
            stdout.write(f"{idx:04b}," + ",".join(_fmt(p) for p in row) + "\n")
    stdout.write("# BSM outcome counts (bit1 bit2)\n")
    for outcome, n in shots.outcome_counts.items():
        stdout.write(f"{outcome.bit1}{outcome.bit2},{n}\n")
    stdout.write(f"shots,{shots.shots}\n")
    stdout.write(f"equal_outcome_rate,{_fmt(shots.equal_rate)}\n")


def _random_qubit(rng) -> k.StateVector:
    theta, phi = rng.uniform(0, math.pi), rng.uniform(0, 2 * math.pi)
    return k.StateVector([math.cos(theta / 2), np.exp(1j * phi) * math.sin(theta / 2)])


def cmd_teleport(args, stdout):
    rng = np.random.default_rng(args.seed)
    worst_overlap, worst_branch, worst_mixed = 1.0, 1.0, 0.0
    counts = {}
    for _ in range(args.trials):
        psi = _random_qubit(rng)
        out, outcome = proto.teleport(psi, rng)
        counts[outcome] = counts.get(outcome, 0) + 1
        worst_overlap = min(worst_overlap, k.overlap(psi, out))
        for b1 in (0, 1):
            for b2 in (0, 1):
                _, branch_out, _ = proto.teleport_branch(psi, proto.BsmOutcome(b1, b2))
                worst_branch = min(worst_branch, k.overlap(psi, branch_out))
        pre = proto.teleport_precorrection_state(psi).entries
        worst_mixed = max(worst_mixed, float(np.abs(pre - np.eye(2) / 2).max()))
    stdout.write(f"trials,{args.trials}\n")
    for b1 in (0, 1):
        for b2 in (0, 1):
            stdout.write(f"outcome_{b1}{b2},{counts.get(proto.BsmOutcome(b1, b2), 0)}\n")
    stdout.write(f"min_overlap_sampled,{_fmt(worst_overlap)}\n")
    stdout.write(f"min_overlap_all_branches,{_fmt(worst_branch)}\n")
    stdout.write(f"max_precorrection_deviation_from_I/2,{worst_mixed:.3e}\n")


def cmd_qkd(args, stdout):
    eve = {"none": "none", "intercept": "intercept_resend"}[args.eavesdropper]
    cfg = proto.E91Config(
        n=args.pairs,
        test_fraction=args.test_fraction,
        abort_threshold=args.abort_threshold,
        eavesdropper=eve,
    )
    result = proto.e91_run(cfg, args.fidelity, np.random.default_rng(args.seed))
    stdout.write(f"pairs,{args.pairs}\n")
    stdout.write(f"sifted,{result.sifted_count}\n")
    stdout.write(f"tested,{result.tested_count}\n")
    stdout.write(f"qber,{_fmt(result.qber_estimate)}\n")
    stdout.write(f"aborted,{str(result.aborted).lower()}\n")
    stdout.write(f"key_length,{len(result.key_alice)}\n")
    if not result.aborted:
        stdout.write("key," + "".join(map(str, result.key_alice.tolist())) + "\n")


def cmd_distill(args, stdout):
    f1, f2 = args.f1, args.f2
    F_out, p = distill_fidelity(f1, f2)
    p_oracle, rho = proto.bbpssw_exact(k.make_werner(f1), k.make_werner(f2))
    F_oracle = k.fidelity_to_bell(rho)
    stdout.write("quantity,closed_form,density_matrix,abs_diff\n")
    stdout.write(f"output_fidelity,{_fmt(F_out)},{_fmt(F_oracle)},{abs(F_out - F_oracle):.3e}\n")
    stdout.write(f"success_probability,{_fmt(p)},{_fmt(p_oracle)},{abs(p - p_oracle):.3e}\n")


def cmd_simulate(args, stdout):
    cfg = load_config(args.config)
    horizon = args.horizon or cfg.horizon
    seed = cfg.seed if args.seed is None else args.seed
    metrics = run(cfg.network(), cfg.make_policy(), horizon, seed)
    csv_path = args.out or cfg.output.get("metrics_csv")
    summary_path = args.summary or cfg.output.get("summary_json")
    if csv_path:
        with open(csv_path, "w", newline="") as fh:
            metrics.write_csv(fh)
    summary = json.dumps(metrics.summary(), indent=2, sort_keys=True) + "\n"
    if summary_path:
        Path(summary_path).write_text(summary)
    if not csv_path:
        metrics.write_csv(stdout)
    else:
        stdout.write(summary)


def cmd_capacity(args, stdout):
    cfg = load_config(args.config)
    region = estimate_capacity_region(cfg.network())
    if args.lam is not None:
        if len(args.lam) != region.dim:
            raise UsageError(f"--lambda needs {region.dim} values, got {len(args.lam)}")
        inside = region.contains(args.lam)
        inside_lp = region.contains_lp(args.lam)
        stdout.write(f"lambda,{','.join(_fmt(x) for x in args.lam)}\n")
        stdout.write(f"inside_halfspaces,{str(inside).lower()}\n")
        stdout.write(f"inside_lp,{str(inside_lp).lower()}\n")
        return
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow([f"rate_{c}" for c in region.commodity_ids])
    for v in region.vertices:
        w.writerow([_fmt(x + 0.0) for x in v])
    _write(buf.getvalue(), args.out, stdout)


def cmd_sweep(args, stdout):
    cfg = load_config(args.config)
    network = cfg.network()
    if len(args.direction) != len(network.commodity_ids):
        raise UsageError(f"--direction needs {len(network.commodity_ids)} values")
    base = cfg.seed
    seeds = [base + i for i in range(args.seeds)]
    points = stability_sweep(
        network,
        cfg.make_policy,
        args.direction,
        args.rho_grid,
        args.horizon or cfg.horizon,
        seeds,
        epsilon=args.epsilon,
    )
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["rho"] + [f"rate_{c}" for c in network.commodity_ids] + ["mean_slope", "stable"])
    for p in points:
        w.writerow([_fmt(p.rho)] + [_fmt(r) for r in p.rates] + [f"{p.mean_slope:.6e}", str(p.stable).lower()])
    _write(buf.getvalue(), args.out, stdout)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="qnetctl", description="Quantum network control simulator.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("swap-circuit", help="four-qubit entanglement swapping circuit")
    p.add_argument("--shots", type=int, default=10_000)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_swap_circuit)

    p = sub.add_parser("teleport", help="teleport random single-qubit states")
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_teleport)

    p = sub.add_parser("qkd", help="entanglement-based key distribution")
    p.add_argument("--pairs", type=int, default=100_000)
    p.add_argument("--eavesdropper", choices=["none", "intercept"], default="none")
    p.add_argument("--fidelity", type=float, default=1.0)
    p.add_argument("--test-fraction", type=float, default=0.2)
    p.add_argument("--abort-threshold", type=float, default=0.05)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_qkd)

    p = sub.add_parser("distill", help="compare BBPSSW closed form with density-matrix evaluation")
    p.add_argument("--f1", type=float, required=True)
    p.add_argument("--f2", type=float, required=True)
    p.set_defaults(func=cmd_distill)

    p = sub.add_parser("simulate", help="run the slotted network simulation")
    p.add_argument("--config", required=True)
    p.add_argument("--out", help="metrics CSV path (default: config output or stdout)")
    p.add_argument("--summary", help="summary JSON path")
    p.add_argument("--horizon", type=int)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("capacity", help="enumerate the capacity region (cutoff_age = 1)")
    p.add_argument("--config", required=True)
    p.add_argument("--lambda", dest="lam", type=_floats, help="test membership of a rate vector")
    p.add_argument("--out")
    p.set_defaults(func=cmd_capacity)

    p = sub.add_parser("sweep", help="stability verdicts along a load direction")
    p.add_argument("--config", required=True)
    p.add_argument("--direction", type=_floats, required=True)
    p.add_argument("--rho-grid", type=_floats, required=True)
    p.add_argument("--seeds", type=int, default=5, help="number of seeds, counting up from the config seed")
    p.add_argument("--horizon", type=int)
    p.add_argument("--epsilon", type=float, default=1e-3)
    p.add_argument("--out")
    p.set_defaults(func=cmd_sweep)
    return parser


def _fail(code: int, kind: str, messages, stderr) -> int:
    if isinstance(messages, str):
        messages = [messages]
    stderr.write(json.dumps({"error": kind, "exit_code": code, "messages": list(messages)}) + "\n")
    return code


def main(argv=None, stdout=None, stderr=None) -> int:
    stdout = stdout or sys.stdout
    stderr = stderr or sys.stderr
    try:
        args = build_parser().parse_args(argv)
        args.func(args, stdout)
    except UsageError as exc:
        return _fail(EXIT_USAGE, "usage", str(exc), stderr)
    except ConfigError as exc:
        return _fail(EXIT_CONFIG, "config", exc.errors, stderr)
    except (UnsupportedRegimeError, proto.ProtocolError, ValueError, RuntimeError) as exc:
        return _fail(EXIT_RUNTIME, "runtime", f"{type(exc).__name__}: {exc}", stderr)
    except OSError as exc:
        return _fail(EXIT_RUNTIME, "runtime", str(exc), stderr)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
