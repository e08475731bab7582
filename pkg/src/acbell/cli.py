"""Command-line front end.

    acbell phases CONFIG [--nodes N] [--exclusion R]
    acbell state CONFIG
    acbell correlate CONFIG
    acbell chsh CONFIG | acbell chsh --direct PHI_A,PHI_A',PHI_B,PHI_B'
    acbell scan CONFIG [--format json|csv]
    acbell lhv [--samples N] [--seed S]
    acbell validate CONFIG
    acbell --dump-config CONFIG

Exit codes: 0 success, 1 usage or config error, 2 computation error
(singularity, path violation, undefined correlation).
"""
from __future__ import annotations

import argparse
import math
import os
import sys
from typing import Optional, TextIO

from . import engine
from .config import ExperimentConfig, load_config
from .engine import ChshSettings, CorrelationRecord, PhaseQuadruple
from .errors import ComputationError, ConfigError
from .report import csv_table, dumps
from .spin import COUPLED_ORDER, MEETING_GROUPING, coupled_amplitudes

COMMANDS = ("phases", "state", "correlate", "chsh", "scan", "lhv", "validate")
NEEDS_CONFIG = {"phases", "state", "correlate", "scan", "validate"}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="acbell", description="Four-particle Aharonov-Casher Bell test simulator.")
    p.add_argument("command", nargs="?", help=f"one of: {', '.join(COMMANDS)}")
    p.add_argument("config", nargs="?", help="experiment configuration (JSON)")
    p.add_argument("--format", choices=("json", "csv"), default=None, help="report format")
    p.add_argument("--nodes", type=int, default=None, help="Gauss-Legendre nodes per segment")
    p.add_argument("--exclusion", type=float, default=None, help="exclusion radius around the line")
    p.add_argument("--seed", type=int, default=0, help="seed for lhv sampling")
    p.add_argument("--samples", type=int, default=10_000, help="number of lhv strategy samples")
    p.add_argument("--direct", default=None, help="chsh phases phi_a,phi_a',phi_b,phi_b' (radians)")
    p.add_argument("--dump-config", action="store_true", help="echo the normalized config and exit")
    return p


def _phases_dict(ph: PhaseQuadruple) -> dict:
    return {
        "phi1": ph.phi1,
        "phi2": ph.phi2,
        "phi3": ph.phi3,
        "phi4": ph.phi4,
        "phi_a": ph.phi_a,
        "phi_b": ph.phi_b,
    }


def _dist_dict(d: engine.JointDistribution) -> dict:
    return {"p11": d.p11, "p00": d.p00, "p10": d.p10, "p01": d.p01, "residual": d.residual}


def _record_dict(rec: CorrelationRecord) -> dict:
    settings = {"mode": rec.settings.mode}
    if rec.settings.mode == "geometric":
        for key, point in zip(("A", "A_prime", "B", "B_prime"), rec.settings.meetings):
            settings[key] = list(point)
    out = {"settings": settings}
    if rec.indices is not None:
        out["indices"] = dict(zip(("a_index", "a_prime_index", "b_index", "b_prime_index"), rec.indices))
    out["phases"] = dict(zip(("phi_a", "phi_a_prime", "phi_b", "phi_b_prime"), rec.phases))
    out["E"] = dict(zip(("ab", "abp", "apb", "apbp"), rec.correlations))
    out["distributions"] = {
        key: _dist_dict(d) for key, d in zip(("ab", "abp", "apb", "apbp"), rec.distributions)
    }
    out["S"] = rec.s
    out["classical_bound"] = engine.CLASSICAL_BOUND
    out["tsirelson_bound"] = engine.TSIRELSON
    out["violates_classical_bound"] = rec.violates_classical_bound
    return out


def _cmd_phases(cfg: ExperimentConfig, args) -> dict:
    layout = cfg.to_layout()
    exact = engine.compute_phases(layout)
    quad = engine.quadrature_phases(layout, cfg.numerics.nodes)
    deltas = [q - e for q, e in zip(quad.as_tuple(), exact.as_tuple())]
    report = {"command": "phases", **_phases_dict(exact)}
    report["quadrature"] = {
        "nodes": cfg.numerics.nodes,
        **{f"phi{k}": v for k, v in enumerate(quad.as_tuple(), start=1)},
        **{f"delta_phi{k}": v for k, v in enumerate(deltas, start=1)},
        "max_abs_delta": max(abs(d) for d in deltas),
    }
    return report


def _cmd_state(cfg: ExperimentConfig, args) -> dict:
    phases = engine.compute_phases(cfg.to_layout())
    state = engine.assemble_total_state(phases)
    coupled = coupled_amplitudes(state, MEETING_GROUPING)
    return {
        "command": "state",
        "phases": _phases_dict(phases),
        "amplitudes": [
            {"label": label, "re": amp.real, "im": amp.imag} for label, amp in state.items()
        ],
        "coupled_grouping": [list(MEETING_GROUPING.first_pair), list(MEETING_GROUPING.second_pair)],
        "coupled_amplitudes": [
            {"first": a.value, "second": b.value, "re": coupled[a, b].real, "im": coupled[a, b].imag}
            for a in COUPLED_ORDER
            for b in COUPLED_ORDER
        ],
    }


def _cmd_correlate(cfg: ExperimentConfig, args) -> dict:
    phases = engine.compute_phases(cfg.to_layout())
    e, dist = engine.pipeline_correlation(phases)
    return {
        "command": "correlate",
        "phases": _phases_dict(phases),
        "distribution": _dist_dict(dist),
        "E": e,
        "E_closed_form": engine.closed_form_correlation(phases.phi_a, phases.phi_b),
    }


def _parse_direct(text: str) -> ChshSettings:
    try:
        values = [float(v) for v in text.split(",")]
    except ValueError:
        raise UsageError(f"--direct expects four comma-separated numbers, got {text!r}") from None
    if len(values) != 4 or not all(math.isfinite(v) for v in values):
        raise UsageError(f"--direct expects four finite comma-separated numbers, got {text!r}")
    return ChshSettings.direct(*values)


def _cmd_chsh(cfg: Optional[ExperimentConfig], args) -> dict:
    if args.direct is not None:
        rec = engine.chsh_value(_parse_direct(args.direct))
    else:
        if cfg is None:
            raise UsageError("chsh needs a config file or --direct phases")
        rec = engine.chsh_value(cfg.chsh_settings(), cfg.to_layout())
    return {"command": "chsh", **_record_dict(rec)}


def _cmd_scan(cfg: ExperimentConfig, args):
    if cfg.scan is None:
        raise ConfigError("scan: section required for the scan command")
    result = engine.scan_chsh_over_locations(cfg.to_layout(), cfg.scan.locus_a, cfg.scan.locus_b)
    if cfg.output.format == "csv":
        return csv_table(engine.SCAN_COLUMNS, result.rows())
    return {
        "command": "scan",
        "best": _record_dict(result.best),
        "invalid_a": [i for i, v in enumerate(result.station_a) if v is None],
        "invalid_b": [j for j, v in enumerate(result.station_b) if v is None],
        "table_size": len(result),
        "table": [row._asdict() for row in result.rows()],
    }


def _cmd_lhv(cfg, args) -> dict:
    if args.samples < 1:
        raise UsageError(f"--samples must be >= 1, got {args.samples}")
    return {
        "command": "lhv",
        "samples": args.samples,
        "seed": args.seed,
        "max_abs_S": engine.lhv_reference_bound(args.samples, args.seed),
        "exhaustive_max_abs_S": engine.exhaustive_lhv_bound(),
        "classical_bound": engine.CLASSICAL_BOUND,
    }


def _cmd_validate(cfg: ExperimentConfig, args):
    reports = cfg.to_layout().validate()
    ok = all(r.ok for r in reports.values())
    body = {
        "command": "validate",
        "exclusion_radius": cfg.numerics.exclusion_radius,
        "ok": ok,
        "contours": {
            name: {
                "ok": r.ok,
                "violations": [{"segment": i, "distance": d} for i, d in r.violations],
            }
            for name, r in reports.items()
        },
    }
    return body, (0 if ok else 2)


HANDLERS = {
    "phases": _cmd_phases,
    "state": _cmd_state,
    "correlate": _cmd_correlate,
    "chsh": _cmd_chsh,
    "scan": _cmd_scan,
    "lhv": _cmd_lhv,
    "validate": _cmd_validate,
}


def run(argv, out: TextIO = sys.stdout, err: TextIO = sys.stderr) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.dump_config:
            path = args.config or args.command
            if path is None:
                raise UsageError("--dump-config needs a config file")
            cfg = load_config(path).with_overrides(args.nodes, args.exclusion, args.format)
            out.write(dumps(cfg.dump()))
            return 0
        if args.command not in COMMANDS:
            what = "no command given" if args.command is None else f"unknown command {args.command!r}"
            raise UsageError(what)
        if args.command in NEEDS_CONFIG and args.config is None:
            raise UsageError(f"{args.command} needs a config file")
        cfg = None
        if args.config is not None:
            cfg = load_config(args.config).with_overrides(args.nodes, args.exclusion, args.format)
        fmt = args.format or (cfg.output.format if cfg is not None else "json")
        if fmt == "csv" and args.command != "scan":
            raise UsageError("--format csv is only available for scan")
        result = HANDLERS[args.command](cfg, args)
    except UsageError as exc:
        err.write(parser.format_usage())
        err.write(f"acbell: error: {exc}\n")
        return 1
    except ConfigError as exc:
        err.write(f"acbell: invalid configuration:\n{exc}\n")
        return 1
    except ComputationError as exc:
        err.write(f"acbell: computation error: {exc}\n")
        return 2

    code = 0
    if isinstance(result, tuple):
        result, code = result
    out.write(result if isinstance(result, str) else dumps(result))
    return code


def main(argv=None) -> int:
    try:
        code = run(sys.argv[1:] if argv is None else argv)
        sys.stdout.flush()
    except BrokenPipeError:
        # reader went away (e.g. `| head`); silence the flush at interpreter exit
        os.dup2(os.open(os.devnull, os.O_WRONLY), sys.stdout.fileno())
        code = 0
    return code


if __name__ == "__main__":
    sys.exit(main())
