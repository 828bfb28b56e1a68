"""Command-line interface: ``dpdlms <subcommand> ...``.

Exit status is 0 on success, 2 for configuration or usage errors and 3 for
runtime failures; errors are a single JSON line on stderr.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import harness
from .config import ConfigError, config_hash, key_help, load_config, to_ini, with_overrides

OUT_DIR_ENV = "DPDLMS_OUT_DIR"
EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 3

logger = logging.getLogger("dpdlms")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _emit_error(kind: str, code: int, errors) -> int:
    sys.stderr.write(json.dumps({"status": "error", "kind": kind, "exit_code": code, "errors": list(errors)}) + "\n")
    return code


def _out_dir(args) -> Path:
    path = Path(args.out_dir or os.environ.get(OUT_DIR_ENV) or "dpdlms-out")
    path.mkdir(parents=True, exist_ok=True)
    return path


def _config(args, default_preset: str | None = None):
    if getattr(args, "config", None):
        return load_config(args.config, args.override)
    if default_preset is None:
        raise ConfigError(["a config file is required"])
    return with_overrides(harness.preset(default_preset), args.override)


def _write(path: Path, text: str) -> Path:
    harness.write_text(path, text)
    print(path)
    return path


def cmd_run(args) -> int:
    config = _config(args)
    out, tag = _out_dir(args), f"run-{config_hash(config)}"
    result = harness.run_experiment(config)
    _write(out / f"{tag}-traces.csv", harness.traces_csv(result))
    if result.bounds:
        _write(out / f"{tag}-bounds.csv", harness.bounds_csv(result))
    if result.diagnostics:
        _write(out / f"{tag}-diagnostics.csv", harness.diagnostics_csv(result))
    return EXIT_OK


def cmd_preset(args) -> int:
    try:
        config = with_overrides(harness.preset(args.name), args.override)
    except KeyError as exc:
        raise ConfigError([exc.args[0]]) from None
    _write(_out_dir(args) / f"preset-{args.name}-{config_hash(config)}.ini", to_ini(config))
    return EXIT_OK


def cmd_bound_check(args) -> int:
    config = _config(args, "bound-check")
    # the bound ignores channel noise and assumes unit-norm intermediates
    config = replace(
        config,
        privacy=replace(config.privacy, channel_noise_variance=0.0),
        algorithms=tuple(replace(a, normalize_phi=True) for a in config.algorithms if a.private),
        collect_bounds=True,
        collect_diagnostics=False,
    )
    if not config.algorithms:
        raise ConfigError(["bound-check needs at least one dp-pgcdlms algorithm"])
    result = harness.run_experiment(config)
    _write(_out_dir(args) / f"bound-check-{config_hash(config)}-bounds.csv", harness.bounds_csv(result))
    summary = {name: rep.fraction_satisfied for name, rep in result.bounds.items()}
    logger.info("fraction satisfied: %s", summary)
    return EXIT_OK


def cmd_stability(args) -> int:
    config = _config(args, "stability-probe")
    report, probe = harness.run_stability(config)
    buf = [("mu", "diverged_fraction", "diverged")]
    buf += [("%.17g" % m, "%.17g" % f, "true" if d else "false") for m, f, d in zip(probe.mu_grid, probe.diverged_fraction, probe.diverged)]
    _write(_out_dir(args) / f"stability-{config_hash(config)}.csv", "".join(",".join(r) + "\n" for r in buf))
    summary = {
        "white_case_bound": report.white_case_bound,
        "mu_bound": float(np.min(report.mu_bound)),
        "spectral_radius_F": report.spectral_radius_F,
        "spectral_radius_block": report.spectral_radius_block,
        "bracket": list(probe.bracket),
        "monotone": probe.monotone,
    }
    print(json.dumps(summary))
    return EXIT_OK


def cmd_diagnose(args) -> int:
    config = _config(args, "diagnostics")
    config = replace(config, algorithms=tuple(a for a in config.algorithms if a.private), collect_diagnostics=True)
    if not config.algorithms:
        raise ConfigError(["diagnose needs at least one dp-pgcdlms algorithm"])
    result = harness.run_experiment(config)
    _write(_out_dir(args) / f"diagnose-{config_hash(config)}-diagnostics.csv", harness.diagnostics_csv(result))
    for name, reps in result.diagnostics.items():
        pooled = harness.pooled_diagnostics(reps)
        logger.info("%s: r_ab=%.3f r_cd=%.3f mean_v=%.3g", name, pooled.r_ab, pooled.r_cd, pooled.mean_v)
    return EXIT_OK


def plot_script(traces: list[str]) -> str:
    """gnuplot script drawing every algorithm series found in the traces CSVs."""
    lines = [
        "set datafile separator ','",
        "set key autotitle columnhead",
        "set xlabel 'iteration'",
        "set ylabel 'network MSD (dB)'",
        "set grid",
        "set terminal pngcairo size 900,600",
    ]
    for path in traces:
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header != list(harness.TRACE_HEADER):
                raise ConfigError([f"{path}: not a traces CSV (header {header})"])
            names = list(dict.fromkeys(row[0] for row in reader))
        stem = Path(path).with_suffix("").name
        lines.append(f"set output '{stem}.png'")
        plots = [
            f"'{path}' using 2:(strcol(1) eq '{n}' ? $3 : 1/0) with lines title '{n}'" for n in names
        ]
        lines.append("plot " + ", \\\n     ".join(plots))
    return "\n".join(lines) + "\n"


def cmd_plot_script(args) -> int:
    try:
        text = plot_script(args.traces)
    except OSError as exc:
        raise ConfigError([f"cannot read {exc.filename}: {exc.strerror}"]) from exc
    digest = hashlib.sha256(text.encode()).hexdigest()[:12]
    _write(_out_dir(args) / f"plot-script-{digest}.gp", text)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("-O", "--override", action="append", default=[], metavar="KEY=VALUE",
                        help="set a config key (section.key or a unique bare key); repeatable")
    common.add_argument("--out-dir", help=f"output directory (default ${OUT_DIR_ENV} or ./dpdlms-out)")
    common.add_argument("-v", "--verbose", action="store_true")

    p = _Parser(
        prog="dpdlms",
        description="Double-private proportionate diffusion LMS simulations.",
        epilog="config keys:\n" + key_help(),
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("run", parents=[common], help="run an experiment config, write MSD traces")
    s.add_argument("config")
    s.set_defaults(func=cmd_run)

    s = sub.add_parser("preset", parents=[common], help="write a preset config file")
    s.add_argument("name", help=", ".join(harness.PRESETS))
    s.set_defaults(func=cmd_preset)

    for name, func, preset, what in (
        ("bound-check", cmd_bound_check, "bound-check", "check d2 <= d2_max, write bounds CSV"),
        ("stability", cmd_stability, "stability-probe", "step-size condition and divergence probe"),
        ("diagnose", cmd_diagnose, "diagnostics", "key-error correlation diagnostics"),
    ):
        s = sub.add_parser(name, parents=[common], help=f"{what} (default config: preset {preset})")
        s.add_argument("config", nargs="?")
        s.set_defaults(func=func)

    s = sub.add_parser("plot-script", parents=[common], help="emit a gnuplot script for traces CSVs")
    s.add_argument("traces", nargs="+")
    s.set_defaults(func=cmd_plot_script)
    return p


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        return _emit_error("usage", EXIT_CONFIG, [str(exc)])
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        return _emit_error("config", EXIT_CONFIG, exc.errors)
    except Exception as exc:  # noqa: BLE001
        logger.debug("runtime failure", exc_info=True)
        return _emit_error("runtime", EXIT_RUNTIME, [f"{type(exc).__name__}: {exc}"])


if __name__ == "__main__":
    sys.exit(main())
