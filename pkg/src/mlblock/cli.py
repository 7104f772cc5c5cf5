"""Command-line entry point.

Analysis subcommands (separate, convert, multilevel) take a JSON config
(see runs.py for the schema) plus overrides; utility subcommands compare
partition files, reshape networks, report weights and print descriptive
statistics.  Exit codes: 0 success, 2 bad input, 3 over an enumeration
cap, 4 I/O failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from . import blocks
from .compare import adjusted_rand, rand_index
from .errors import (
    CapacityError,
    DegenerateError,
    DegenerateWeightError,
    FeasibilityError,
    MembershipError,
    MlblockError,
    SpecError,
    TieError,
    ValidationError,
)
from .network import load_network, network_summary, write_network
from .reshape import ReshapeOptions, build_extended, build_multirelational
from .runs import (
    AnalysisConfig,
    _resolve_equivalences,
    config_from_mapping,
    document_json,
    run_analysis,
    write_run_outputs,
)
from .search import compute_weights

THREADS_ENV = "MLBLOCK_THREADS"

_USER_ERRORS = (
    ValidationError,
    SpecError,
    FeasibilityError,
    MembershipError,
    TieError,
    DegenerateWeightError,
    DegenerateError,
)


def _parse_cluster_override(texts: list[str]) -> dict:
    out: dict = {}
    for text in texts:
        for item in text.split(","):
            item = item.strip()
            if not item:
                continue
            if "=" not in item:
                raise ValidationError(f"--clusters entry {item!r} is not name=count")
            name, _, value = item.partition("=")
            value = value.strip()
            try:
                if "-" in value:
                    lo, _, hi = value.partition("-")
                    out[name.strip()] = [int(lo), int(hi)]
                else:
                    out[name.strip()] = int(value)
            except ValueError as exc:
                raise ValidationError(f"--clusters entry {item!r}: bad count") from exc
    return out


def _load_config(args: argparse.Namespace, approaches: tuple[str, ...]) -> AnalysisConfig:
    path = Path(args.config)
    with open(path, "r", encoding="utf-8") as fh:
        try:
            raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ValidationError(f"bad JSON in {path}: {exc}") from exc
    if not isinstance(raw, dict):
        raise ValidationError("config must be a JSON object")
    if args.network:
        raw["network"] = args.network
    if args.seed is not None or args.restarts is not None:
        search = dict(raw.get("search") or {})
        if args.seed is not None:
            search["seed"] = args.seed
        if args.restarts is not None:
            search["restarts"] = args.restarts
        raw["search"] = search
    if args.clusters:
        clusters = dict(raw.get("clusters") or {})
        clusters.update(_parse_cluster_override(args.clusters))
        raw["clusters"] = clusters
    if args.threads is not None:
        raw["threads"] = args.threads
    elif "threads" not in raw and os.environ.get(THREADS_ENV):
        try:
            raw["threads"] = int(os.environ[THREADS_ENV])
        except ValueError as exc:
            raise ValidationError(f"{THREADS_ENV} must be an integer") from exc
    if args.out:
        raw["out_dir"] = args.out
    config = config_from_mapping(raw, base_dir=path.parent)
    if config.approach not in approaches:
        raise ValidationError(
            f"config approach {config.approach!r} does not match this subcommand"
        )
    return config


def _cmd_analysis(args: argparse.Namespace, approaches: tuple[str, ...]) -> int:
    config = _load_config(args, approaches)
    doc = run_analysis(config)
    for record in doc["runs"]:
        print(f"{record['name']}: criterion {record['criterion']}")
    if doc.get("second_stage"):
        print(f"second_stage: criterion {doc['second_stage']['criterion']}")
    if config.out_dir:
        paths = write_run_outputs(config, doc)
        print(f"wrote {paths[0]}")
    else:
        sys.stdout.write(document_json(doc))
    return 0


def cmd_separate(args: argparse.Namespace) -> int:
    return _cmd_analysis(args, ("separate",))


def cmd_convert(args: argparse.Namespace) -> int:
    return _cmd_analysis(args, ("convert_single", "convert_multi"))


def cmd_multilevel(args: argparse.Namespace) -> int:
    return _cmd_analysis(args, ("multilevel",))


def _load_partition_file(path: str) -> dict[str, int]:
    p = Path(path)
    if p.suffix.lower() == ".json":
        with open(p, "r", encoding="utf-8") as fh:
            try:
                raw = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ValidationError(f"bad JSON in {p}: {exc}") from exc
        if not isinstance(raw, dict):
            raise ValidationError(f"{p}: expected an object of unit: cluster")
        try:
            return {str(k): int(v) for k, v in raw.items()}
        except (TypeError, ValueError) as exc:
            raise ValidationError(f"{p}: clusters must be integers") from exc
    out: dict[str, int] = {}
    with open(p, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            parts = [c.strip() for c in line.split(",")]
            if len(parts) != 2:
                raise ValidationError(f"{p}:{lineno}: expected 'unit,cluster'")
            try:
                out[parts[0]] = int(parts[1])
            except ValueError:
                if lineno == 1:
                    continue  # header row
                raise ValidationError(f"{p}:{lineno}: bad cluster {parts[1]!r}")
    if not out:
        raise ValidationError(f"{p}: no partition rows")
    return out


def cmd_compare(args: argparse.Namespace) -> int:
    a = _load_partition_file(args.a)
    b = _load_partition_file(args.b)
    if set(a) != set(b):
        only_a = sorted(set(a) - set(b))[:5]
        only_b = sorted(set(b) - set(a))[:5]
        raise ValidationError(
            f"partitions cover different units (e.g. {only_a or only_b})"
        )
    names = sorted(a)
    pa = [a[n] for n in names]
    pb = [b[n] for n in names]
    out = {
        "units": len(names),
        "rand": rand_index(pa, pb),
        "adjusted_rand": adjusted_rand(pa, pb),
    }
    print(json.dumps(out, sort_keys=True, indent=2))
    return 0


def cmd_reshape(args: argparse.Namespace) -> int:
    net = load_network(args.network)
    options = None
    if args.no_comembership or args.binarize or args.threshold is not None:
        options = ReshapeOptions(
            include_comembership=not args.no_comembership,
            binarize=args.binarize,
            threshold=args.threshold if args.threshold is not None else 1.0,
        )
    if args.multi:
        built = build_multirelational(net, args.main_level, options)
    else:
        built = build_extended(net, args.main_level, args.aggregate, options)
    if args.out:
        path = write_network(built, args.out, name="reshaped")
        print(f"wrote {path}")
    else:
        print(json.dumps(network_summary(built), sort_keys=True, indent=2))
    return 0


def cmd_weights(args: argparse.Namespace) -> int:
    config = _load_config(args, ("separate", "convert_single", "convert_multi", "multilevel"))
    net = config.network
    counts = {}
    for lv in net.levels:
        spec = config.clusters.get(lv.name)
        if not isinstance(spec, int):
            raise ValidationError(
                f"weights need a fixed cluster count for level {lv.name!r}"
            )
        counts[lv.id] = spec
    eq = _resolve_equivalences(config.model_specs, net, counts)
    w = compute_weights(net, eq)
    rows = []
    for rel, model, weight in zip(net.relations, eq.models, w.values):
        rows.append(
            {
                "relation": rel.name,
                "one_cluster_criterion": blocks.one_cluster_criterion(
                    net, rel.id, model
                ),
                "weight": weight,
            }
        )
    print(json.dumps(rows, sort_keys=True, indent=2))
    return 0


def cmd_stats(args: argparse.Namespace) -> int:
    net = load_network(args.network)
    out = {
        "levels": [
            {"name": lv.name, "units": lv.n_units} for lv in net.levels
        ],
        "relations": network_summary(net),
    }
    print(json.dumps(out, sort_keys=True, indent=2))
    return 0


def _add_config_options(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--config", required=True, help="JSON analysis config")
    sub.add_argument("--network", help="override the config's network path")
    sub.add_argument("--seed", type=int, help="override search.seed")
    sub.add_argument("--restarts", type=int, help="override search.restarts")
    sub.add_argument(
        "--clusters",
        action="append",
        default=[],
        metavar="NAME=COUNT[,NAME=LO-HI]",
        help="override cluster counts per level",
    )
    sub.add_argument("--out", help="output directory (overrides out_dir)")
    sub.add_argument(
        "--threads",
        type=int,
        help=f"worker processes for restarts (default: ${THREADS_ENV} or 1)",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mlblock",
        description="Blockmodeling of multilevel networks by criterion minimization.",
    )
    subs = parser.add_subparsers(dest="command", required=True)

    for name, func, descr in (
        ("separate", cmd_separate, "blockmodel each level separately"),
        ("convert", cmd_convert, "fold onto one level, then blockmodel"),
        ("multilevel", cmd_multilevel, "blockmodel all levels jointly"),
    ):
        sub = subs.add_parser(name, help=descr)
        _add_config_options(sub)
        sub.set_defaults(func=func)

    sub = subs.add_parser("compare", help="pair-counting agreement of two partitions")
    sub.add_argument("a", help="partition file (JSON {unit: cluster} or CSV)")
    sub.add_argument("b", help="partition file")
    sub.set_defaults(func=cmd_compare)

    sub = subs.add_parser("reshape", help="build a one-level network from a two-level one")
    sub.add_argument("--network", required=True, help="network JSON description")
    sub.add_argument("--main-level", required=True, dest="main_level")
    sub.add_argument(
        "--aggregate", default="max", choices=("max", "min", "average", "sum")
    )
    sub.add_argument(
        "--multi", action="store_true", help="keep original and inherited ties separate"
    )
    sub.add_argument("--no-comembership", action="store_true", dest="no_comembership")
    sub.add_argument("--binarize", action="store_true")
    sub.add_argument("--threshold", type=float)
    sub.add_argument("--out", help="directory to write the built network")
    sub.set_defaults(func=cmd_reshape)

    sub = subs.add_parser("weights", help="report automatic relation weights")
    _add_config_options(sub)
    sub.set_defaults(func=cmd_weights)

    sub = subs.add_parser("stats", help="descriptive statistics of a network")
    sub.add_argument("--network", required=True, help="network JSON description")
    sub.set_defaults(func=cmd_stats)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CapacityError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except _USER_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except MlblockError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
