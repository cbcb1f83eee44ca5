"""Command-line entry point: one subcommand per experiment, reports as JSON or long-form CSV.

Exit status is 0 when every gated check passes, 1 when any fails and 2 on a
usage or configuration error.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from pathlib import Path

from .errors import DomainError
from .experiments import CSV_HEADER, EXPERIMENT_FIELDS, EXPERIMENTS, default_config, ladder

COMMANDS = tuple(EXPERIMENTS) + ("all",)

_FLAG_FIELDS = {
    "n": "n",
    "paths": "paths",
    "steps": "steps",
    "horizon": "horizon",
    "sigma": "sigmas",
    "seed": "seed",
    "k": "k",
    "batch": "batch",
    "replicates": "replicates",
    "format": "format",
}


_ALL_FIELDS = tuple(sorted({f for fields in EXPERIMENT_FIELDS.values() for f in fields}))


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(f"{self.prog}: {message}")


def build_parser():
    common = _Parser(add_help=False)
    common.add_argument("--n", type=int, help="samples for the sampling experiments")
    common.add_argument("--paths", type=int, help="simulated Wiener paths")
    common.add_argument("--steps", type=int, help="time steps per path (finest level for ito-check)")
    common.add_argument("--horizon", type=float, help="path horizon T")
    common.add_argument("--sigma", type=float, action="append", help="scale factor; repeatable")
    common.add_argument("--seed", type=int, help="root seed (default 42)")
    common.add_argument("--k", type=int, help="Hill order statistics (default n^(2/3))")
    common.add_argument("--batch", type=int, help="paths or samples per work unit")
    common.add_argument("--replicates", type=int, help="seed replicates (divergence)")
    common.add_argument("--format", choices=("json", "csv"), default="json")
    common.add_argument("--out", type=Path, help="output file (default: stdout)")

    parser = _Parser(prog="itocounter", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name in COMMANDS:
        fn = EXPERIMENTS[name][0].__doc__ if name in EXPERIMENTS else "run every experiment"
        sub.add_parser(name, parents=[common], help=fn.splitlines()[0] if fn else name)
    return parser


def _configs(args):
    overrides = {}
    for flag, field in _FLAG_FIELDS.items():
        value = getattr(args, flag)
        if value is not None:
            overrides[field] = tuple(value) if field == "sigmas" else value
    names = list(EXPERIMENTS) if args.command == "all" else [args.command]
    return [(name, default_config(name, **overrides)) for name in names]


def _csv_text(report):
    buf = io.StringIO()
    out = csv.writer(buf, lineterminator="\n")
    out.writerow(CSV_HEADER)
    out.writerows(report.csv_rows())
    return buf.getvalue()


def _targets(args, names):
    """Output path per experiment (None = stdout); CSV gets one file per experiment."""
    if args.out is None:
        return {name: None for name in names}
    if args.format == "csv" and len(names) > 1:
        out = args.out
        return {name: out.with_name(f"{out.stem}-{name}{out.suffix or '.csv'}") for name in names}
    return {name: args.out for name in names}


def _check_writable(paths):
    for p in set(paths):
        if p is None:
            continue
        try:
            with open(p, "a"):
                pass
        except OSError as exc:
            raise _UsageError(f"cannot write {p}: {exc.strerror}")


def parse_and_dispatch(argv) -> int:
    try:
        args = build_parser().parse_args(argv)
        configs = _configs(args)
        for name, config in configs:
            # every supplied flag is checked, even ones this experiment ignores
            config.validate(_ALL_FIELDS)
            if name == "ito-check":
                ladder(config.steps)
        targets = _targets(args, [name for name, _ in configs])
        _check_writable(targets.values())
    except (_UsageError, DomainError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2

    try:
        reports = [EXPERIMENTS[name][0](config) for name, config in configs]
    except DomainError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2

    if args.format == "json":
        payload = [r.to_dict() for r in reports] if args.command == "all" else reports[0].to_dict()
        text = json.dumps(payload, sort_keys=True, indent=2) + "\n"
        _emit(text, args.out)
    else:
        chunks = {}
        for r in reports:
            chunks.setdefault(targets[r.name], []).append(_csv_text(r))
        for target, parts in chunks.items():
            _emit("\n".join(parts), target)
    return 0 if all(r.passed for r in reports) else 1


def _emit(text, target):
    if target is None:
        sys.stdout.write(text)
    else:
        Path(target).write_text(text)


def main():
    sys.exit(parse_and_dispatch(sys.argv[1:]))
