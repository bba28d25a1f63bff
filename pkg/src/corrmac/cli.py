"""``corrmac`` command line: run sweeps, figure presets and bound curves.

Exit codes: 0 success, 2 configuration error, 3 numerical failure.
"""

import argparse
import sys

from . import bound as _bound
from .errors import ConfigError, ContractViolation, NumericalFailure
from .sim import (
    BOUND_CSV_HEADER, PRECODERS, PRESETS, config_from_dict, config_to_dict, load_config,
    parse_snr_range, reproduce_figure, run_experiment, write_csv, write_table,
)

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL = 0, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _on_off(text: str) -> bool:
    if text not in ("on", "off"):
        raise argparse.ArgumentTypeError("expected 'on' or 'off'")
    return text == "on"


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="corrmac", description="Linear precoding for correlated sources over MIMO MACs.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    run = sub.add_parser("run", help="Monte Carlo SDR sweep")
    run.add_argument("--config", help="JSON experiment file; flags below override its fields")
    run.add_argument("--precoder", action="append", choices=PRECODERS, dest="precoders",
                     help="repeat to select several")
    run.add_argument("--snr", help="SNR grid a:b:step in dB (inclusive)")
    run.add_argument("--rho", type=float)
    run.add_argument("--users", type=int, dest="K")
    run.add_argument("--nt", type=int, dest="Nt")
    run.add_argument("--nr", type=int, dest="Nr")
    run.add_argument("--trials", type=int, dest="L")
    run.add_argument("--symbols", type=int, dest="M")
    run.add_argument("--seed", type=int, dest="master_seed")
    run.add_argument("--workers", type=int)
    run.add_argument("--empirical", type=_on_off, metavar="on|off")
    run.add_argument("--timing", action="store_true", default=None,
                     help="fill elapsed_ms (output is then no longer reproducible byte for byte)")
    run.add_argument("--out", help="CSV path (default: stdout)")

    fig = sub.add_parser("figure", help="reproduce a figure preset")
    fig.add_argument("preset", choices=list(PRESETS))
    fig.add_argument("--scale", choices=("desk", "full"), default="desk")
    fig.add_argument("--trials", type=int, help="override the realization count of the scale")
    fig.add_argument("--seed", type=int, default=0)
    fig.add_argument("--workers", type=int, default=1)
    fig.add_argument("--out-dir", default=".", help="directory for the CSV files")

    bnd = sub.add_parser("bound", help="separation-bound SDR curve")
    bnd.add_argument("--config", required=True, help="JSON experiment file (scenario, SNR grid, L, seed)")
    bnd.add_argument("--snr")
    bnd.add_argument("--trials", type=int, dest="L")
    bnd.add_argument("--seed", type=int, dest="master_seed")
    bnd.add_argument("--out", help="CSV path (default: stdout)")
    return p


_OVERRIDES = ("precoders", "rho", "K", "Nt", "Nr", "L", "M", "master_seed", "workers", "empirical", "timing")


def _config(args):
    data = config_to_dict(load_config(args.config)) if args.config else {}
    for key in _OVERRIDES:
        v = getattr(args, key, None)
        if v is not None:
            data[key] = v
    if getattr(args, "snr", None):
        data["snr_grid_db"] = list(parse_snr_range(args.snr))
    return config_from_dict(data, args.config or "<command line>")


def _emit(text: str, out) -> None:
    if out:
        with open(out, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _cmd_run(args) -> None:
    cfg = _config(args)
    _emit(write_csv(run_experiment(cfg)), args.out)


def _cmd_figure(args) -> None:
    res = reproduce_figure(args.preset, args.scale, out_dir=args.out_dir, workers=args.workers,
                           L=args.trials, master_seed=args.seed)
    for label in res:
        print(f"{args.out_dir}/{args.preset}_{label}.csv")


def _cmd_bound(args) -> None:
    cfg = _config(args)
    if cfg.rho >= 1:
        raise ConfigError("the separation bound needs rho < 1")
    rows = _bound.sdr_bound_curve(cfg.scenario(cfg.snr_grid_db[0]), cfg.snr_grid_db, cfg.L, cfg.master_seed)
    _emit(write_table(rows, None, BOUND_CSV_HEADER), args.out)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    handler = {"run": _cmd_run, "figure": _cmd_figure, "bound": _cmd_bound}[args.command]
    try:
        handler(args)
    except (ConfigError, ContractViolation) as exc:
        print(f"corrmac: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalFailure as exc:
        print(f"corrmac: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
