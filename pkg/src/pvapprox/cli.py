"""Command line interface: ``pva <subcommand> [options]``.

Exit codes: 0 ok, 2 configuration error, 3 numerical failure, 4 I/O error.
Failures also print one JSON line ``{"error": ..., "code": ..., "message": ...}``
on stderr.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from contextlib import contextmanager
from pathlib import Path

from .approx import replication_seed
from .covariogram import ConvergenceError, CovariogramEvaluator, perimeter_from_covariogram
from .fit import fit_power_law
from .geom import Ball, Box, pva_constant, unit_ball_volume
from .harness import (
    ConfigError,
    ExperimentConfig,
    covariogram_profile,
    read_sweep_csv,
    resolve_threads,
    run_sweep,
    sweep_rows_to_csv,
    theory_table,
    timestamp_comment,
    write_csv,
)
from .sampler import label_nuclei, sample_ppp, simulation_window, stream, write_realization_csv
from .theory import direct_mean_sym_diff, exact_mean_sym_diff, kernel_integral_check

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_IO = 0, 2, 3, 4


class _Fail(Exception):
    def __init__(self, code: int, kind: str, message: str):
        super().__init__(message)
        self.code, self.kind, self.message = code, kind, message


def _common() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    S = argparse.SUPPRESS
    p.add_argument("--config", metavar="PATH", default=S, help="JSON experiment config")
    p.add_argument("--seed", type=int, metavar="U64", default=S, help="master seed override")
    p.add_argument("--out", metavar="PATH", default=S, help="output file (default: stdout)")
    p.add_argument("--threads", metavar="N", default=S, help="worker processes or 'auto'")
    p.add_argument("--n", type=int, metavar="ORDER", default=S, help="highest moment order")
    p.add_argument("--print-config", action="store_true", default=S, help="print the effective config and exit")
    return p


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    parser = argparse.ArgumentParser(prog="pva", description=__doc__.splitlines()[0], parents=[common])
    sub = parser.add_subparsers(dest="command")

    p = sub.add_parser("simulate", parents=[common], help="replicate at one intensity")
    p.add_argument("--lambda", dest="lam", type=float, required=False, help="intensity")
    p.add_argument("--dump-realization", metavar="PATH", help="write the first realisation's nuclei as CSV")

    sub.add_parser("sweep", parents=[common], help="replicate over the config's lambda grid")
    sub.add_parser("theory", parents=[common], help="exact and asymptotic predictions only")

    p = sub.add_parser("covariogram", parents=[common], help="export a covariogram profile")
    p.add_argument("--n-r", type=int, default=50)
    p.add_argument("--directions", type=int, default=8)

    p = sub.add_parser("fit", parents=[common], help="fit power laws to a sweep CSV")
    p.add_argument("csv", help="sweep CSV written by 'pva sweep'")

    sub.add_parser("selftest", parents=[common], help="quadrature and oracle self-checks")
    return parser


def _load_config(args) -> ExperimentConfig:
    path = getattr(args, "config", None)
    try:
        cfg = ExperimentConfig.load(path) if path else ExperimentConfig()
        return cfg.with_overrides(master_seed=getattr(args, "seed", None), n_max=getattr(args, "n", None))
    except ConfigError as exc:
        raise _Fail(EXIT_CONFIG, "config", str(exc)) from None
    except TypeError as exc:
        raise _Fail(EXIT_CONFIG, "config", f"config: {exc}") from None


@contextmanager
def _output(args, cfg: ExperimentConfig | None = None):
    path = getattr(args, "out", None) or (cfg.output_path if cfg else None)
    if not path or path == "-":
        yield sys.stdout
        return
    with Path(path).open("w", newline="") as fh:
        yield fh


def _threads(args, cfg: ExperimentConfig) -> int:
    try:
        return resolve_threads(cfg.thread_count, getattr(args, "threads", None))
    except ConfigError as exc:
        raise _Fail(EXIT_CONFIG, "config", str(exc)) from None


def _log(msg: str) -> None:
    print(msg, file=sys.stderr)


def cmd_simulate(args) -> int:
    cfg = _load_config(args)
    lam = args.lam if args.lam is not None else cfg.lambda_grid[0]
    if not lam > 0:
        raise _Fail(EXIT_CONFIG, "config", "--lambda: must be positive")
    cfg = cfg.with_overrides(lambda_grid=(lam,))
    if args.dump_realization:
        seed = replication_seed(cfg.master_seed, lam, 0)
        rng = stream(seed)
        window = simulation_window(cfg.shape, lam, cfg.safety)
        nuclei = label_nuclei(sample_ppp(window, lam, rng), cfg.shape, lam, seed, window)
        write_realization_csv(nuclei, args.dump_realization)
    rows = run_sweep(cfg, _threads(args, cfg), progress=_log)
    with _output(args, cfg) as fh:
        sweep_rows_to_csv(rows, fh, timestamp_comment("simulate"))
    return EXIT_OK


def cmd_sweep(args) -> int:
    cfg = _load_config(args)
    rows = run_sweep(cfg, _threads(args, cfg), progress=_log)
    with _output(args, cfg) as fh:
        sweep_rows_to_csv(rows, fh, timestamp_comment("sweep"))
    return EXIT_OK


def cmd_theory(args) -> int:
    cfg = _load_config(args)
    table = theory_table(cfg)
    with _output(args, cfg) as fh:
        write_csv(("lambda", "exact", "asymptotic", "ratio"), table, fh, timestamp_comment("theory"))
    return EXIT_OK


def cmd_covariogram(args) -> int:
    cfg = _load_config(args)
    records = covariogram_profile(cfg.shape, args.n_r, args.directions)
    with _output(args, cfg) as fh:
        write_csv(("r", "direction_index", "g_value"), records, fh)
    return EXIT_OK


def cmd_fit(args) -> int:
    try:
        records = read_sweep_csv(args.csv)
    except ConfigError as exc:
        raise _Fail(EXIT_CONFIG, "config", str(exc)) from None
    report = {}
    for col in ("mean_sym_diff", "var_sym_diff", "var_vol_approx"):
        pairs = [(r["lambda"], r[col]) for r in records if r[col] is not None]
        try:
            f = fit_power_law(pairs)
        except ValueError as exc:
            raise _Fail(EXIT_NUMERIC, "numeric", f"{col}: {exc}") from None
        report[col] = {
            "exponent": f.exponent,
            "ci95": [f.ci_low, f.ci_high],
            "log_constant": f.log_constant,
            "r_squared": f.r_squared,
        }
    with _output(args) as fh:
        json.dump(report, fh, indent=2)
        fh.write("\n")
    return EXIT_OK


def selftest_checks():
    """Yield ``(name, ok, detail)`` for the deterministic numerical checks."""
    for d, want in ((1, 0.5), (2, 1 / math.pi)):
        got = pva_constant(d)
        yield f"c_{d}", abs(got / want - 1) <= 1e-12, f"{got!r}"
    for c in (0.5, 1.0, 2.0):
        for d in (1, 2, 3):
            got, want = kernel_integral_check(c, d), unit_ball_volume(d) / c
            rel = abs(got / want - 1)
            yield f"kernel c={c} d={d}", rel <= 1e-8, f"rel err {rel:.2e}"
    for name, shape, per in (
        ("disk", Ball((0.0, 0.0), 1.0), 2 * math.pi),
        ("square", Box((0.0, 0.0), (1.0, 1.0)), 4.0),
        ("ball3 r=2", Ball((0.0, 0.0, 0.0), 2.0), 16 * math.pi),
    ):
        try:
            got = perimeter_from_covariogram(CovariogramEvaluator(shape))
            rel = abs(got / per - 1)
            yield f"perimeter {name}", rel <= 0.01, f"{got:.6g} (rel err {rel:.2e})"
        except ConvergenceError as exc:
            yield f"perimeter {name}", False, str(exc)
    for name, shape in (("disk", Ball((0.0, 0.0), 1.0)), ("square", Box((0.0, 0.0), (1.0, 1.0)))):
        for lam in (1e2, 1e3, 1e4):
            exact, direct = exact_mean_sym_diff(shape, lam), direct_mean_sym_diff(shape, lam)
            rel = abs(exact / direct - 1)
            yield f"exact vs direct {name} lambda={lam:g}", rel <= 0.01, f"rel err {rel:.2e}"


def cmd_selftest(args) -> int:
    failed = 0
    for name, ok, detail in selftest_checks():
        failed += not ok
        print(f"{'PASS' if ok else 'FAIL'} {name}: {detail}")
    if failed:
        raise _Fail(EXIT_NUMERIC, "numeric", f"{failed} self-test check(s) failed")
    return EXIT_OK


COMMANDS = {
    "simulate": cmd_simulate,
    "sweep": cmd_sweep,
    "theory": cmd_theory,
    "covariogram": cmd_covariogram,
    "fit": cmd_fit,
    "selftest": cmd_selftest,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if getattr(args, "print_config", False):
            json.dump(_load_config(args).to_json(), sys.stdout, indent=2)
            sys.stdout.write("\n")
            return EXIT_OK
        if not args.command:
            parser.print_usage(sys.stderr)
            raise _Fail(EXIT_CONFIG, "usage", "a subcommand is required")
        return COMMANDS[args.command](args)
    except _Fail as exc:
        err = exc
    except ConvergenceError as exc:
        err = _Fail(EXIT_NUMERIC, "numeric", str(exc))
    except (FloatingPointError, ZeroDivisionError) as exc:
        err = _Fail(EXIT_NUMERIC, "numeric", str(exc))
    except OSError as exc:
        err = _Fail(EXIT_IO, "io", str(exc))
    print(json.dumps({"error": err.kind, "code": err.code, "message": err.message}), file=sys.stderr)
    return err.code


if __name__ == "__main__":
    sys.exit(main())
