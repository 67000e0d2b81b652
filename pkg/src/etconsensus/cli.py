"""Batch command-line front end.

Verbs: ``run``, ``spectral``, ``design-gain``, ``compare-baseline``.
Outputs are CSV traces plus a structured key=value summary; floats are
written with 17 significant digits so emitted values round-trip exactly.

Exit codes: 0 success, 2 config error, 3 assumption violation, 4 divergence.
"""

from __future__ import annotations

import argparse
import csv
import sys
from pathlib import Path

import numpy as np

from . import matlib, sim
from .config import RunConfig, parse_config, preset_config
from .errors import AssumptionError, ConfigError, PreconditionError
from .model import (
    SystemModel,
    check_consensus_condition,
    closed_loop_matrices,
    design_gain,
    validate_alpha,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_ASSUMPTION = 3
EXIT_DIVERGENCE = 4


def _fmt(value: float) -> str:
    return f"{value:.17g}"


def _fmt_matrix(m: np.ndarray) -> str:
    rows = ["[" + ", ".join(_fmt(v) for v in row) + "]" for row in np.atleast_2d(m)]
    return "[" + ", ".join(rows) + "]"


def _fmt_complex(z: complex) -> str:
    sign = "+" if z.imag >= 0 else "-"
    return f"{_fmt(z.real)}{sign}{_fmt(abs(z.imag))}j"


def write_trace_csv(path: Path, trace: sim.SimTrace) -> None:
    n_agents, n = trace.states.shape[1], trace.states.shape[2]
    header = ["time"]
    header += [f"x{i + 1}_{d + 1}" for i in range(n_agents) for d in range(n)]
    header += [f"e{i + 1}" for i in range(n_agents)]
    header += ["threshold"]
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for k in range(trace.times.shape[0]):
            row = [_fmt(trace.times[k])]
            row += [_fmt(v) for v in trace.states[k].flatten()]
            row += [_fmt(v) for v in trace.error_norms[k]]
            row.append(_fmt(trace.thresholds[k]))
            writer.writerow(row)


def write_events_csv(path: Path, trace: sim.SimTrace) -> None:
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["time", "agent"])
        for agent, time in trace.events:
            writer.writerow([_fmt(time), agent + 1])


def _condition_lines(model) -> list:
    report = check_consensus_condition(model)
    lines = [f"consensus_condition_holds = {str(report.holds).lower()}"]
    for idx, entry in enumerate(report.entries, start=2):
        lines.append(f"eigenvalue_{idx} = {_fmt_complex(entry.laplacian_eigenvalue)}")
        lines.append(f"eigenvalue_{idx}_abscissa = {_fmt(entry.abscissa)}")
        lines.append(f"eigenvalue_{idx}_hurwitz = {str(entry.hurwitz).lower()}")
        if entry.marginal:
            lines.append(f"eigenvalue_{idx}_marginal = true")
    return lines


def write_summary(path: Path, trace: sim.SimTrace, model, alpha) -> None:
    zeno = sim.zeno_diagnostics(trace)
    lines = [
        f"status = {'diverged' if trace.diverged else 'ok'}",
        f"mode = {trace.mode}",
        f"gain = {_fmt_matrix(model.k_mat)}",
        f"final_consensus_error = {_fmt(trace.summary.final_consensus_error)}",
        f"min_inter_event_gap = {_fmt(trace.summary.min_inter_event_interval)}",
        f"total_events = {len(trace.events)}",
    ]
    for i, count in enumerate(trace.summary.trigger_counts, start=1):
        lines.append(f"trigger_count_{i} = {count}")
    lines += _condition_lines(model)
    if alpha is not None and not trace.diverged:
        disagreement = closed_loop_matrices(model).disagreement_mat
        try:
            admissible = validate_alpha(alpha, disagreement)
        except PreconditionError:
            admissible = False
        lines.append(f"alpha = {_fmt(alpha)}")
        lines.append(f"alpha_admissible = {str(admissible).lower()}")
    lines.append(f"min_gap_global = {_fmt(zeno.min_gap)}")
    path.write_text("\n".join(lines) + "\n")


def _load_config(args) -> RunConfig:
    if (args.config is None) == (args.preset is None):
        raise ConfigError("provide exactly one of --config PATH or --preset NAME")
    if args.preset is not None:
        return preset_config(args.preset)
    path = Path(args.config)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    return parse_config(path.read_text())


def _out_dir(args, cfg: RunConfig) -> Path:
    out = args.out or cfg.output_dir or "out"
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def cmd_run(args) -> int:
    cfg = _load_config(args)
    out = _out_dir(args, cfg)
    scenario = cfg.build_scenario()
    trace = sim.run(scenario)
    if "trace_csv" in cfg.emit:
        write_trace_csv(out / "trace.csv", trace)
    if "events_csv" in cfg.emit:
        write_events_csv(out / "events.csv", trace)
    if "summary" in cfg.emit:
        write_summary(out / "summary.txt", trace, scenario.model, scenario.alpha)
    status = "diverged" if trace.diverged else "ok"
    print(
        f"{status}: events={len(trace.events)} "
        f"final_consensus_error={_fmt(trace.summary.final_consensus_error)} "
        f"-> {out}"
    )
    return EXIT_DIVERGENCE if trace.diverged else EXIT_OK


def cmd_spectral(args) -> int:
    cfg = _load_config(args)
    out = _out_dir(args, cfg)
    model = cfg.build_model()
    clm = closed_loop_matrices(model)
    lines = _condition_lines(model)
    lines.append(f"gain = {_fmt_matrix(model.k_mat)}")
    lines.append(
        "disagreement_spectrum = "
        + "; ".join(_fmt_complex(z) for z in _sorted_spectrum(clm.disagreement_mat))
    )
    for i, om in enumerate(clm.predictor_mats, start=1):
        lines.append(
            f"predictor_spectrum_{i} = "
            + "; ".join(_fmt_complex(z) for z in _sorted_spectrum(om))
        )
    if cfg.alpha is not None:
        try:
            admissible = validate_alpha(cfg.alpha, clm.disagreement_mat)
        except PreconditionError:
            admissible = False
        lines.append(f"alpha = {_fmt(cfg.alpha)}")
        lines.append(f"alpha_admissible = {str(admissible).lower()}")
    report_path = out / "spectral.txt"
    report_path.write_text("\n".join(lines) + "\n")
    print(f"spectral report -> {report_path}")
    return EXIT_OK


def cmd_design_gain(args) -> int:
    cfg = _load_config(args)
    out = _out_dir(args, cfg)
    gain = design_gain(cfg.a_mat, cfg.b_mat, cfg.graph, cfg.c_margin)
    p = matlib.solve_care(cfg.a_mat, cfg.b_mat)
    lines = [
        f"gain = {_fmt_matrix(gain)}",
        f"riccati_solution = {_fmt_matrix(p)}",
        f"riccati_residual = {_fmt(float(np.linalg.norm(matlib.care_residual(cfg.a_mat, cfg.b_mat, p))))}",
        f"c_margin = {_fmt(cfg.c_margin)}",
    ]
    lines += _condition_lines(SystemModel(cfg.a_mat, cfg.b_mat, gain, cfg.graph))
    report_path = out / "gain.txt"
    report_path.write_text("\n".join(lines) + "\n")
    print(f"designed gain {_fmt_matrix(gain)} -> {report_path}")
    return EXIT_OK


def cmd_compare_baseline(args) -> int:
    cfg = _load_config(args)
    out = _out_dir(args, cfg)
    scenario = cfg.build_scenario()
    comparison = sim.compare_baseline(scenario)
    write_trace_csv(out / "trace_event_triggered.csv", comparison.et_trace)
    write_trace_csv(out / "trace_baseline.csv", comparison.cont_trace)
    write_events_csv(out / "events.csv", comparison.et_trace)
    steps = comparison.et_trace.times.shape[0] - 1
    lines = [
        f"et_final_error = {_fmt(comparison.et_final_error)}",
        f"baseline_final_error = {_fmt(comparison.cont_final_error)}",
        f"et_events = {len(comparison.et_trace.events)}",
        f"baseline_communication_instants = {steps}",
    ]
    (out / "comparison.txt").write_text("\n".join(lines) + "\n")
    print(
        f"event-triggered error={_fmt(comparison.et_final_error)} "
        f"baseline error={_fmt(comparison.cont_final_error)} "
        f"events={len(comparison.et_trace.events)} vs {steps} instants -> {out}"
    )
    diverged = comparison.et_trace.diverged or comparison.cont_trace.diverged
    return EXIT_DIVERGENCE if diverged else EXIT_OK


def _sorted_spectrum(m) -> list:
    return sorted(matlib.eigenvalues(m), key=lambda z: (round(z.real, 12), round(z.imag, 12)))


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="TOML configuration file")
    common.add_argument("--preset", metavar="NAME", help="built-in preset name")
    common.add_argument("--out", metavar="DIR", help="output directory")
    common.add_argument(
        "--seed", type=int, default=None,
        help="reserved; runs are deterministic and ignore it",
    )
    parser = argparse.ArgumentParser(
        prog="etconsensus",
        description="Predictor-based event-triggered consensus simulator",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("run", parents=[common], help="simulate and emit trace/events/summary")
    sub.add_parser("spectral", parents=[common], help="spectral consensus-condition report")
    sub.add_parser("design-gain", parents=[common], help="Riccati-based gain synthesis")
    sub.add_parser(
        "compare-baseline", parents=[common],
        help="event-triggered vs continuous protocol on identical data",
    )
    return parser


_COMMANDS = {
    "run": cmd_run,
    "spectral": cmd_spectral,
    "design-gain": cmd_design_gain,
    "compare-baseline": cmd_compare_baseline,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except AssumptionError as exc:
        print(f"assumption violation: {exc}", file=sys.stderr)
        return EXIT_ASSUMPTION
    except PreconditionError as exc:
        print(f"assumption violation: {exc}", file=sys.stderr)
        return EXIT_ASSUMPTION


if __name__ == "__main__":
    sys.exit(main())
