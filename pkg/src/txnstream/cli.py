"""Command line entry point: ``txnstream run`` and ``txnstream sweep``."""
import argparse
import logging
import sys

from .errors import ConfigError
from .harness import CSV_COLUMNS, RunConfig, convert, csv_row, parse_axis, run, sweep, \
    write_csv

EXIT_OK, EXIT_CONFIG, EXIT_MISMATCH = 0, 1, 2


def read_config_file(path):
    types = RunConfig.field_types()
    values = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, val = line.partition("=")
            key = key.strip().replace("-", "_")
            if not sep or key not in types:
                raise ConfigError(f"{path}:{lineno}: unknown setting {line!r}")
            try:
                values[key] = convert(types[key], val.strip())
            except ValueError as exc:
                raise ConfigError(f"{path}:{lineno}: {exc}") from None
    return values


def _bool(text):
    return convert(bool, text)


def add_run_flags(p):
    p.add_argument("--config", help="key=value file; flags override it")
    p.add_argument("--app", choices=["gs", "sl", "ob", "tp"])
    p.add_argument("--scheme", choices=["tstream", "lock", "mvlk", "pat", "nolock"])
    p.add_argument("--threads", type=int)
    p.add_argument("--interval", type=int)
    p.add_argument("--events", type=int)
    p.add_argument("--skew", type=float)
    p.add_argument("--read-ratio", type=float)
    p.add_argument("--mp-ratio", type=float)
    p.add_argument("--mp-length", type=int)
    p.add_argument("--placement", help="shared-nothing | shared-everything | shared-group:G")
    p.add_argument("--steal", type=_bool, help="override work stealing (true/false)")
    p.add_argument("--seed", type=int)
    p.add_argument("--warmup-events", type=int)
    p.add_argument("--table-size", type=int)
    p.add_argument("--initial-balance", type=int)
    p.add_argument("--partitions", type=int, help="PAT partition count (default: threads)")
    p.add_argument("--output", "-o", help="append CSV rows here instead of stdout")
    p.add_argument("--trace", action="store_true", default=None)
    p.add_argument("--dump-trace", help="write the generated stream as a binary trace")
    g = p.add_mutually_exclusive_group()
    g.add_argument("--oracle", dest="oracle", action="store_true", default=None)
    g.add_argument("--no-oracle", dest="oracle", action="store_false")


def build_config(args):
    values = read_config_file(args.config) if args.config else {}
    for name in RunConfig.field_types():
        v = getattr(args, name, None)
        if v is not None:
            values[name] = v
    return RunConfig(**values)


def _emit(rows, output, header):
    text = write_csv(rows, output, header=header)
    if text is not None:
        sys.stdout.write(text)
        sys.stdout.flush()


def cmd_run(args):
    cfg = build_config(args)
    m = run(cfg)
    _emit([csv_row(cfg, m)], cfg.output, header=True)
    if m.oracle_match is False:
        msg = "oracle mismatch"
        if cfg.scheme == "nolock":
            logging.getLogger("txnstream").info("%s (tolerated for nolock)", msg)
        else:
            print(f"error: {msg}: {m.extra.get('first_mismatch')}", file=sys.stderr)
            return EXIT_MISMATCH
    return EXIT_OK


def cmd_sweep(args):
    cfg = build_config(args)
    axis, values = parse_axis(args.axis)
    mismatch = False
    first = [True]

    def on_row(row):
        _emit([row], cfg.output, header=first[0])
        first[0] = False

    if not values:
        _emit([], cfg.output, header=True)
        return EXIT_OK
    for sub_cfg, m, _ in sweep(cfg, axis, values, on_row):
        if m.oracle_match is False and sub_cfg.scheme != "nolock":
            mismatch = True
    return EXIT_MISMATCH if mismatch else EXIT_OK


def main(argv=None):
    parser = argparse.ArgumentParser(prog="txnstream",
                                     description="Transactional stream processing benchmark")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", help="run one configuration, print one CSV row")
    add_run_flags(p_run)
    p_run.set_defaults(func=cmd_run)
    p_sweep = sub.add_parser("sweep", help="one CSV row per value of one parameter")
    add_run_flags(p_sweep)
    p_sweep.add_argument("--axis", required=True, help="e.g. threads=1,2,4,8 or interval=10,500")
    p_sweep.set_defaults(func=cmd_sweep)
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())


__all__ = ["main", "CSV_COLUMNS"]
