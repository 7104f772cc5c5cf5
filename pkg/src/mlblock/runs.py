"""Config-driven analysis runs and their result documents.

A run takes one JSON config and produces one result document (a plain
dict, serialized with :func:`document_json`).  Every criterion in a
document is recomputed from the reported partition on the reference
evaluation path, so documents are self-verifying.  ``wall_time_s`` is
the only field that varies between identical runs.

Config schema::

    {
      "network": "network.json",          path, relative to the config file
      "approach": "multilevel",           separate | convert_single |
                                          convert_multi | multilevel
      "clusters": {"people": 4, "orgs": 3},   int, or [lo, hi] sweep
                                              (sweeps: separate only)
      "models": {"within0": {"kind": "cohesive", "m_pre": "2xdensity",
                             "round_up_2dp": true}},
      "weights": "auto",                  "auto" | [..] |
                                          {"mode": "auto",
                                           "scale": {"member01": 2}}
      "second_stage": {"scale": {"member01": 2}},    multilevel only
      "search": {"restarts": 200, "seed": 1},
      "main_level": "people",             convert_* only
      "conversion": {"aggregate": "max"}, convert_* reshape options
      "threads": 1,
      "out_dir": "results"
    }

Model kinds: ``cohesive`` (diagonal complete, off-diagonal null),
``one_to_one`` (each row cluster ties to exactly one column cluster),
``free`` (same ``allowed`` type set in every cell, default null or
complete), ``grid`` (explicit ``cells``).  Anywhere a pre-specified
center is expected, the string ``"2xdensity"`` means twice the
relation's density, rounded up to 2 decimals when ``round_up_2dp`` is
set.  For conversion runs, models are keyed by the built relation names
(``extended``, or ``original`` and ``institutional``).
"""

from __future__ import annotations

import csv
import json
import math
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from . import blocks
from .blocks import EquivalenceSpec, PrespecifiedModel, WeightVector
from .compare import adjusted_rand, forced_fit, image_matrix, max_error, rand_index
from .errors import FeasibilityError, SpecError, ValidationError
from .network import (
    Level,
    MultilevelNetwork,
    Relation,
    _format_value,
    _safe_filename,
    build_network,
    load_network,
    write_matrix,
)
from .partition import MultiPartition, is_feasible
from .reshape import (
    ReshapeOptions,
    build_extended,
    build_multirelational,
    expand_partition,
)
from .search import (
    SearchConfig,
    compute_weights,
    refine,
    restart_search,
    scale_weight,
)

_APPROACHES = ("separate", "convert_single", "convert_multi", "multilevel")
_BUILT_NAMES = ("extended", "original", "institutional")
_SEARCH_FIELDS = ("restarts", "seed", "max_iterations", "neighborhood", "acceptance")
_CONVERSION_FIELDS = (
    "aggregate",
    "include_comembership",
    "binarize",
    "threshold",
    "zero_diagonal",
)
_TYPE_KINDS = ("null", "complete", "dnc", "do_not_care")


@dataclass(frozen=True)
class AnalysisConfig:
    """One parsed analysis request; see the module docstring for the schema."""

    network: MultilevelNetwork
    approach: str
    clusters: Mapping[str, int | tuple[int, int]]
    model_specs: Mapping[str, Mapping]
    weight_spec: object
    search: SearchConfig
    second_stage: Mapping | None
    main_level: str | None
    conversion: Mapping
    threads: int
    out_dir: str | None
    echo: Mapping


def _parse_clusters(spec, network: MultilevelNetwork) -> dict:
    if not isinstance(spec, Mapping) or not spec:
        raise ValidationError("clusters must map level names to counts")
    out: dict = {}
    for name, v in spec.items():
        network.level_id(name)
        if isinstance(v, bool):
            raise ValidationError(f"clusters[{name!r}]: expected an integer")
        if isinstance(v, int):
            if v < 1:
                raise ValidationError(f"clusters[{name!r}] must be >= 1")
            out[name] = v
        elif (
            isinstance(v, (list, tuple))
            and len(v) == 2
            and all(isinstance(x, int) and not isinstance(x, bool) for x in v)
        ):
            lo, hi = v
            if not 1 <= lo <= hi:
                raise ValidationError(f"clusters[{name!r}]: bad sweep range {v}")
            out[name] = (lo, hi)
        else:
            raise ValidationError(
                f"clusters[{name!r}] must be an integer or a [lo, hi] range"
            )
    return out


def _parse_search(raw) -> SearchConfig:
    if raw is None:
        return SearchConfig()
    if not isinstance(raw, Mapping):
        raise ValidationError("search must be a mapping")
    unknown = set(raw) - set(_SEARCH_FIELDS)
    if unknown:
        raise ValidationError(f"unknown search fields: {sorted(unknown)}")
    return SearchConfig(**raw)


def config_from_mapping(
    raw: Mapping,
    base_dir: str | Path = ".",
    network: MultilevelNetwork | None = None,
) -> AnalysisConfig:
    """Validate a config mapping; loads the network unless one is passed in."""
    if not isinstance(raw, Mapping):
        raise ValidationError("config must be a JSON object")
    if network is None:
        path = raw.get("network")
        if not path:
            raise ValidationError("config needs a 'network' path")
        network = load_network(Path(base_dir) / path)
    approach = raw.get("approach")
    if approach not in _APPROACHES:
        raise ValidationError(f"approach must be one of {_APPROACHES}")
    clusters = _parse_clusters(raw.get("clusters"), network)
    model_specs = raw.get("models") or {}
    if not isinstance(model_specs, Mapping):
        raise ValidationError("models must map relation names to model specs")
    known = {rel.name for rel in network.relations} | set(_BUILT_NAMES)
    unknown = set(model_specs) - known
    if unknown:
        raise ValidationError(f"models for unknown relations: {sorted(unknown)}")
    main_level = raw.get("main_level")
    if approach in ("convert_single", "convert_multi"):
        if not main_level:
            raise ValidationError(f"approach {approach!r} needs main_level")
        network.level_id(main_level)
    conversion = raw.get("conversion") or {}
    bad = set(conversion) - set(_CONVERSION_FIELDS)
    if bad:
        raise ValidationError(f"unknown conversion fields: {sorted(bad)}")
    second_stage = raw.get("second_stage")
    if second_stage is not None:
        if not isinstance(second_stage, Mapping) or not (
            "scale" in second_stage or "weights" in second_stage
        ):
            raise ValidationError("second_stage needs 'scale' or 'weights'")
    threads = raw.get("threads", 1)
    if not isinstance(threads, int) or isinstance(threads, bool) or threads < 1:
        raise ValidationError("threads must be a positive integer")
    # threads and output paths do not affect results, so they stay out of
    # the echo and the document stays comparable across machines
    echo = {k: v for k, v in raw.items() if k not in ("threads", "out_dir")}
    return AnalysisConfig(
        network=network,
        approach=approach,
        clusters=clusters,
        model_specs=model_specs,
        weight_spec=raw.get("weights", "auto"),
        search=_parse_search(raw.get("search")),
        second_stage=second_stage,
        main_level=main_level,
        conversion=conversion,
        threads=threads,
        out_dir=raw.get("out_dir"),
        echo=echo,
    )


def load_analysis_config(path: str | Path) -> AnalysisConfig:
    path = Path(path)
    with open(path, "r", encoding="utf-8") as fh:
        try:
            raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ValidationError(f"bad JSON in {path}: {exc}") from exc
    return config_from_mapping(raw, base_dir=path.parent)


# -- model and weight resolution ---------------------------------------------------


def _block_type_from_config(entry, relation: Relation, round_up: bool):
    if (
        isinstance(entry, (list, tuple))
        and len(entry) >= 2
        and entry[1] == "2xdensity"
    ):
        entry = [entry[0], blocks.twice_density(relation, round_up), *entry[2:]]
    return blocks.block_type_from_json(entry)


def _cell_types(cell, relation: Relation, round_up: bool):
    if isinstance(cell, str):
        return (blocks.block_type_from_json(cell),)
    if (
        isinstance(cell, (list, tuple))
        and cell
        and isinstance(cell[0], str)
        and cell[0] in _TYPE_KINDS
    ):
        return (_block_type_from_config(cell, relation, round_up),)
    if isinstance(cell, (list, tuple)) and cell:
        return tuple(_block_type_from_config(e, relation, round_up) for e in cell)
    raise ValidationError(f"bad block-type cell: {cell!r}")


def resolve_model(
    spec: Mapping | None,
    relation: Relation,
    m_rows: int,
    m_cols: int,
) -> PrespecifiedModel:
    """Turn a config model spec into a concrete grid for one relation.

    Density-relative centers ("2xdensity") are evaluated on the relation
    the model is resolved against, which for conversion runs is the built
    relation, not the raw input.
    """
    spec = spec or {"kind": "free"}
    if not isinstance(spec, Mapping):
        raise ValidationError(f"model spec must be a mapping, got {spec!r}")
    kind = spec.get("kind", "free")
    round_up = bool(spec.get("round_up_2dp", False))
    pin = bool(spec.get("pin", False))

    def m_pre_value() -> float:
        v = spec.get("m_pre", 0.0)
        if v == "2xdensity":
            return blocks.twice_density(relation, round_up)
        return float(v)

    if kind == "cohesive":
        if m_rows != m_cols:
            raise SpecError(
                f"cohesive model needs equal cluster counts, got {m_rows}x{m_cols}"
            )
        return blocks.cohesive_prespec(m_rows, m_pre_value(), pin)
    if kind == "one_to_one":
        if m_rows != m_cols:
            raise SpecError(
                f"one_to_one model needs equal cluster counts, got {m_rows}x{m_cols}"
            )
        return blocks.one_to_one_prespec(m_rows, m_pre_value(), pin)
    if kind == "free":
        allowed_spec = spec.get("allowed", ["null", ["complete", 0.0]])
        allowed = [
            _block_type_from_config(e, relation, round_up) for e in allowed_spec
        ]
        return blocks.uniform_prespec(m_rows, m_cols, allowed)
    if kind == "grid":
        cells = spec.get("cells")
        if not isinstance(cells, (list, tuple)) or len(cells) != m_rows:
            raise SpecError(f"grid model needs {m_rows} cell rows")
        grid = []
        for row in cells:
            if not isinstance(row, (list, tuple)) or len(row) != m_cols:
                raise SpecError(f"grid model needs {m_cols} cells per row")
            grid.append(tuple(_cell_types(c, relation, round_up) for c in row))
        return PrespecifiedModel(grid=tuple(grid))
    raise ValidationError(f"unknown model kind {kind!r}")


def _resolve_equivalences(
    model_specs: Mapping,
    network: MultilevelNetwork,
    counts_by_level: Mapping[int, int],
) -> EquivalenceSpec:
    models = []
    for rel in network.relations:
        models.append(
            resolve_model(
                model_specs.get(rel.name),
                rel,
                counts_by_level[rel.from_level],
                counts_by_level[rel.to_level],
            )
        )
    return EquivalenceSpec(models=tuple(models))


def _resolve_weights(
    spec, network: MultilevelNetwork, equivalences: EquivalenceSpec
) -> WeightVector:
    if spec is None or spec == "auto":
        return compute_weights(network, equivalences)
    if isinstance(spec, (list, tuple)):
        vals = tuple(float(x) for x in spec)
        if len(vals) != len(network.relations):
            raise ValidationError(
                f"{len(vals)} weights for {len(network.relations)} relations"
            )
        return WeightVector(values=vals)
    if isinstance(spec, Mapping):
        mode = spec.get("mode", "auto")
        if mode == "auto":
            w = compute_weights(network, equivalences)
        elif mode == "explicit":
            vals = tuple(float(x) for x in spec.get("values", ()))
            if len(vals) != len(network.relations):
                raise ValidationError(
                    f"{len(vals)} weights for {len(network.relations)} relations"
                )
            w = WeightVector(values=vals)
        else:
            raise ValidationError("weights mode must be 'auto' or 'explicit'")
        for name, factor in (spec.get("scale") or {}).items():
            w = scale_weight(w, network.relation_id(name), float(factor))
        return w
    raise ValidationError("weights must be 'auto', a list, or a mapping")


# -- document assembly --------------------------------------------------------------


def _jsonable(obj):
    """Plain-JSON copy: numpy scalars unwrapped, non-finite floats to null."""
    if isinstance(obj, Mapping):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        obj = float(obj)
    if isinstance(obj, float):
        return obj if math.isfinite(obj) else None
    return obj


def document_json(doc: Mapping) -> str:
    """Canonical serialization: key-sorted, indented, shortest-repr floats."""
    return json.dumps(_jsonable(doc), sort_keys=True, indent=2, allow_nan=False) + "\n"


def write_document(doc: Mapping, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(document_json(doc), encoding="utf-8")
    return path


def _partition_doc(
    network: MultilevelNetwork, partition: MultiPartition
) -> dict[str, dict[str, int]]:
    out: dict[str, dict[str, int]] = {}
    for lv, labels in zip(network.levels, partition.labels):
        out[lv.name] = {
            name: int(c) + 1 for name, c in zip(lv.unit_names, labels)
        }
    return out


def _solution_record(
    name: str,
    network: MultilevelNetwork,
    equivalences: EquivalenceSpec,
    partition: MultiPartition,
    breakdown,
) -> dict:
    rels = []
    for term, model in zip(breakdown.per_relation, equivalences.models):
        im = image_matrix(network, term.relation_id, partition, model)
        rels.append(
            {
                "relation": term.relation_name,
                "raw": term.raw,
                "weight": term.weight,
                "weighted": term.weighted,
                "image_means": im.means,
                "block_sizes": im.counts,
                "block_types": [
                    [blocks.block_type_to_json(t) for t in row]
                    for row in (im.fitted_types or ())
                ],
                "block_errors": im.fitted_values,
            }
        )
    return {
        "name": name,
        "cluster_counts": {
            lv.name: int(m)
            for lv, m in zip(network.levels, partition.cluster_counts)
        },
        "criterion": breakdown.total,
        "relations": rels,
        "partitions": _partition_doc(network, partition),
    }


def _run_record(name, network, equivalences, result) -> dict:
    rec = _solution_record(
        name, network, equivalences, result.best_partition, result.best_breakdown
    )
    rec["restarts"] = len(result.per_restart)
    rec["restarts_at_optimum"] = result.restarts_at_optimum
    return rec


def _document(approach: str, config: AnalysisConfig, runs: list, extra: Mapping, t0: float) -> dict:
    doc = {
        "document": "mlblock-result",
        "version": 1,
        "approach": approach,
        "config": config.echo,
        "seed": config.search.seed,
        "runs": runs,
    }
    doc.update(extra)
    doc["wall_time_s"] = time.perf_counter() - t0
    return _jsonable(doc)


# -- the three approaches ------------------------------------------------------------


def _sole_one_mode(network: MultilevelNetwork, level: int) -> Relation:
    rels = [
        r
        for r in network.relations
        if r.from_level == level and r.to_level == level
    ]
    if len(rels) != 1:
        raise SpecError(
            f"level {network.levels[level].name!r} needs exactly one one-mode "
            f"relation, found {len(rels)}"
        )
    return rels[0]


def _level_subnetwork(
    network: MultilevelNetwork, level: int, rel: Relation
) -> MultilevelNetwork:
    lv = network.levels[level]
    return build_network(
        [Level(name=lv.name, unit_names=lv.unit_names)],
        [
            Relation(
                name=rel.name,
                from_level=lv.name,
                to_level=lv.name,
                values=rel.values,
                diagonal_defined=rel.diagonal_defined,
            )
        ],
    )


def run_separate(config: AnalysisConfig) -> dict:
    """Blockmodel each configured level on its own, then compare.

    Sweep ranges produce an error-vs-cluster-count table per level.  When
    every level has a fixed count and a two-mode relation joins two
    analyzed levels, the upper partition is expanded downward and compared
    with the lower level's own partition (pair stats, a cross-partition
    agreement grid, and the expanded partition's forced criterion against
    the level's own optimum and worst case).
    """
    t0 = time.perf_counter()
    net = config.network
    runs: list = []
    sweeps: dict = {}
    own: dict[str, dict] = {}
    for level_name, spec in config.clusters.items():
        lid = net.level_id(level_name)
        rel = _sole_one_mode(net, lid)
        subnet = _level_subnetwork(net, lid, rel)
        fixed = isinstance(spec, int)
        counts = [spec] if fixed else list(range(spec[0], spec[1] + 1))
        table = []
        for m in counts:
            model = resolve_model(
                config.model_specs.get(rel.name), subnet.relations[0], m, m
            )
            eq = EquivalenceSpec(models=(model,))
            res = restart_search(
                subnet, eq, WeightVector(values=(1.0,)), [m],
                config.search, threads=config.threads,
            )
            runs.append(_run_record(f"{level_name}:m={m}", subnet, eq, res))
            table.append({"clusters": m, "criterion": res.best_breakdown.total})
            if fixed:
                own[level_name] = {
                    "labels": res.best_partition.labels[0],
                    "m": m,
                    "raw": res.best_breakdown.per_relation[0].raw,
                    "relation": rel,
                }
        if not fixed:
            sweeps[level_name] = table
    comparisons: list = []
    grids: list = []
    if not sweeps:
        by_level = {name: [("own", info["labels"])] for name, info in own.items()}
        for rel in net.relations:
            if rel.one_mode:
                continue
            lower = net.levels[rel.from_level].name
            upper = net.levels[rel.to_level].name
            if lower not in own or upper not in own:
                continue
            lifted = expand_partition(own[upper]["labels"], rel, "majority")
            low = own[lower]
            forced_model = resolve_model(
                config.model_specs.get(low["relation"].name),
                low["relation"],
                own[upper]["m"],
                own[upper]["m"],
            )
            forced_raw, _ = forced_fit(net, low["relation"].id, lifted, forced_model)
            lv = net.levels[rel.from_level]
            comparisons.append(
                {
                    "two_mode": rel.name,
                    "upper_level": upper,
                    "lower_level": lower,
                    "adjusted_rand": adjusted_rand(low["labels"], lifted),
                    "rand": rand_index(low["labels"], lifted),
                    "lifted_partition": {
                        name: int(c) + 1
                        for name, c in zip(lv.unit_names, lifted)
                    },
                    "forced_criterion": forced_raw,
                    "own_criterion": low["raw"],
                    "max_error": max_error(net, low["relation"].id),
                }
            )
            by_level[lower].append((f"lifted:{rel.name}", lifted))
        for level_name, plist in by_level.items():
            if len(plist) < 2:
                continue
            grids.append(
                {
                    "level": level_name,
                    "partitions": [tag for tag, _ in plist],
                    "adjusted_rand": [
                        [adjusted_rand(a, b) for _, b in plist] for _, a in plist
                    ],
                }
            )
    extra = {"sweeps": sweeps, "comparisons": comparisons, "agreement_grids": grids}
    return _document("separate", config, runs, extra, t0)


def _reshape_options(conversion: Mapping) -> ReshapeOptions | None:
    keys = [k for k in _CONVERSION_FIELDS[1:] if k in conversion]
    if not keys:
        return None
    return ReshapeOptions(
        include_comembership=bool(conversion.get("include_comembership", True)),
        zero_diagonal=bool(conversion.get("zero_diagonal", True)),
        binarize=bool(conversion.get("binarize", False)),
        threshold=float(conversion.get("threshold", 1.0)),
    )


def run_conversion(config: AnalysisConfig) -> dict:
    """Fold the network onto the main level, then blockmodel that level.

    convert_single aggregates the main level's own ties with the ties
    inherited from the other level into one relation; convert_multi keeps
    them as two jointly weighted relations.
    """
    t0 = time.perf_counter()
    if config.approach not in ("convert_single", "convert_multi"):
        raise ValidationError(f"not a conversion approach: {config.approach!r}")
    main = config.main_level
    spec = config.clusters.get(main)
    if not isinstance(spec, int):
        raise ValidationError(
            f"conversion needs a fixed cluster count for level {main!r}"
        )
    options = _reshape_options(config.conversion)
    if config.approach == "convert_single":
        built = build_extended(
            config.network, main, config.conversion.get("aggregate", "max"), options
        )
    else:
        built = build_multirelational(config.network, main, options)
    eq = _resolve_equivalences(config.model_specs, built, {0: spec})
    weights = _resolve_weights(config.weight_spec, built, eq)
    res = restart_search(
        built, eq, weights, [spec], config.search, threads=config.threads
    )
    runs = [_run_record(f"{config.approach}:{main}:m={spec}", built, eq, res)]
    extra = {
        "built_relations": [r.name for r in built.relations],
        "weights": list(weights.values),
    }
    return _document(config.approach, config, runs, extra, t0)


def _linkage(breakdown, network: MultilevelNetwork) -> list:
    """Which row clusters tie to which column clusters, per two-mode relation."""
    out = []
    for term in breakdown.per_relation:
        rel = network.relations[term.relation_id]
        if rel.one_mode:
            continue
        links = []
        for i, row in enumerate(term.block_types):
            cols = [j + 1 for j, t in enumerate(row) if t.kind == "complete"]
            links.append({"row_cluster": i + 1, "col_clusters": cols})
        out.append(
            {
                "relation": rel.name,
                "row_level": network.levels[rel.from_level].name,
                "col_level": network.levels[rel.to_level].name,
                "links": links,
            }
        )
    return out


def _undetermined_levels(
    network: MultilevelNetwork, weights: WeightVector
) -> list[str]:
    determined: set[int] = set()
    for rel, w in zip(network.relations, weights.values):
        if w > 0:
            determined.add(rel.from_level)
            determined.add(rel.to_level)
    return [lv.name for lv in network.levels if lv.id not in determined]


def run_multilevel(config: AnalysisConfig) -> dict:
    """Blockmodel all levels at once under the weighted joint criterion.

    Weights come from the config (auto weights equalize the relations'
    worst-case errors; scale factors stack on top).  An optional second
    stage re-runs local search from the stage-one optimum under rescaled
    weights.  Levels no positively weighted relation touches are listed
    as undetermined: their partitions are arbitrary.
    """
    t0 = time.perf_counter()
    net = config.network
    counts = []
    for lv in net.levels:
        spec = config.clusters.get(lv.name)
        if not isinstance(spec, int):
            raise ValidationError(
                f"multilevel needs a fixed cluster count for level {lv.name!r}"
            )
        counts.append(spec)
    eq = _resolve_equivalences(
        config.model_specs, net, {lv.id: m for lv, m in zip(net.levels, counts)}
    )
    weights = _resolve_weights(config.weight_spec, net, eq)
    res = restart_search(net, eq, weights, counts, config.search, threads=config.threads)
    record = _run_record(f"multilevel:m={counts}", net, eq, res)
    record["linkage"] = _linkage(res.best_breakdown, net)
    second = None
    if config.second_stage is not None:
        if "weights" in config.second_stage:
            w2 = _resolve_weights(config.second_stage["weights"], net, eq)
        else:
            w2 = weights
            for name, factor in config.second_stage["scale"].items():
                w2 = scale_weight(w2, net.relation_id(name), float(factor))
        part2, bd2 = refine(net, eq, w2, res.best_partition, config.search)
        second = _solution_record("second_stage", net, eq, part2, bd2)
        second["weights"] = list(w2.values)
        second["linkage"] = _linkage(bd2, net)
    extra = {
        "weights": list(weights.values),
        "undetermined_levels": _undetermined_levels(net, weights),
        "second_stage": second,
    }
    return _document("multilevel", config, [record], extra, t0)


def run_analysis(config: AnalysisConfig) -> dict:
    if config.approach == "separate":
        return run_separate(config)
    if config.approach in ("convert_single", "convert_multi"):
        return run_conversion(config)
    return run_multilevel(config)


# -- matrix and attribute exports ----------------------------------------------------


def _render_block_view(
    ordered: np.ndarray,
    row_names: Sequence[str],
    col_names: Sequence[str],
    row_starts: set[int],
    col_starts: set[int],
) -> str:
    n_r, n_c = ordered.shape
    cells = [[_format_value(v) for v in row] for row in ordered]
    name_w = max((len(n) for n in row_names), default=0)
    col_ws = [
        max(len(col_names[j]), max((len(cells[i][j]) for i in range(n_r)), default=0))
        for j in range(n_c)
    ]

    def data_line(name: str, row: Sequence[str]) -> str:
        parts = [name.rjust(name_w)]
        for j in range(n_c):
            parts.append(" | " if j in col_starts else "  ")
            parts.append(row[j].rjust(col_ws[j]))
        return "".join(parts)

    def rule_line() -> str:
        parts = ["-" * name_w]
        for j in range(n_c):
            parts.append("-+-" if j in col_starts else "--")
            parts.append("-" * col_ws[j])
        return "".join(parts)

    lines = [data_line("", list(col_names))]
    for i in range(n_r):
        if i in row_starts:
            lines.append(rule_line())
        lines.append(data_line(row_names[i], cells[i]))
    return "\n".join(lines) + "\n"


def emit_ordered_matrix(
    network: MultilevelNetwork,
    relation: int | str,
    partition: MultiPartition,
    path: str | Path,
) -> tuple[Path, Path]:
    """Write one relation sorted into blocks: a CSV and a plain-text view.

    Rows and columns are ordered by (cluster, original index); the text
    view marks cluster boundaries.  Returns (csv_path, txt_path); reading
    the CSV back and undoing the permutation reproduces the matrix.
    """
    if not is_feasible(partition, network):
        raise FeasibilityError("partition does not fit the network")
    rel = network.relations[network.relation_id(relation)]
    row_labels = partition.labels[rel.from_level]
    col_labels = partition.labels[rel.to_level]
    order_r = np.lexsort((np.arange(row_labels.shape[0]), row_labels))
    order_c = np.lexsort((np.arange(col_labels.shape[0]), col_labels))
    ordered = rel.values[np.ix_(order_r, order_c)]
    row_names = [network.levels[rel.from_level].unit_names[i] for i in order_r]
    col_names = [network.levels[rel.to_level].unit_names[j] for j in order_c]
    base = Path(path)
    if base.suffix.lower() in (".csv", ".txt"):
        base = base.with_suffix("")
    base.parent.mkdir(parents=True, exist_ok=True)
    csv_path = base.with_suffix(".csv")
    txt_path = base.with_suffix(".txt")
    write_matrix(csv_path, ordered, row_names, col_names)
    row_starts = {
        i
        for i in range(1, len(order_r))
        if row_labels[order_r[i]] != row_labels[order_r[i - 1]]
    }
    col_starts = {
        j
        for j in range(1, len(order_c))
        if col_labels[order_c[j]] != col_labels[order_c[j - 1]]
    }
    txt_path.write_text(
        _render_block_view(ordered, row_names, col_names, row_starts, col_starts),
        encoding="utf-8",
    )
    return csv_path, txt_path


def _record_network(config: AnalysisConfig, record: Mapping) -> MultilevelNetwork:
    """Rebuild the network a run record was computed on (deterministic)."""
    if config.approach == "separate":
        (level_name,) = record["cluster_counts"].keys()
        lid = config.network.level_id(level_name)
        return _level_subnetwork(config.network, lid, _sole_one_mode(config.network, lid))
    if config.approach == "convert_single":
        return build_extended(
            config.network,
            config.main_level,
            config.conversion.get("aggregate", "max"),
            _reshape_options(config.conversion),
        )
    if config.approach == "convert_multi":
        return build_multirelational(
            config.network, config.main_level, _reshape_options(config.conversion)
        )
    return config.network


def _record_partition(
    network: MultilevelNetwork, record: Mapping
) -> MultiPartition:
    labels = []
    for lv in network.levels:
        per_unit = record["partitions"][lv.name]
        labels.append(
            np.array([per_unit[n] - 1 for n in lv.unit_names], dtype=np.int64)
        )
    counts = tuple(record["cluster_counts"][lv.name] for lv in network.levels)
    return MultiPartition(labels=tuple(labels), cluster_counts=counts)


def write_run_outputs(
    config: AnalysisConfig, doc: Mapping, out_dir: str | Path | None = None
) -> list[Path]:
    """Write a run's document and its block-ordered matrices.

    The document goes to ``result.json``; every relation of every run gets
    a CSV plus text view of its matrix sorted by the run's partition.
    """
    target = out_dir if out_dir is not None else config.out_dir
    if target is None:
        raise ValidationError("no output directory configured")
    out = Path(target)
    paths = [write_document(doc, out / "result.json")]
    records = list(doc.get("runs", ()))
    if doc.get("second_stage"):
        records.append(doc["second_stage"])
    for record in records:
        net = _record_network(config, record)
        part = _record_partition(net, record)
        for rel in net.relations:
            stem = f"{_safe_filename(record['name'])}_{_safe_filename(rel.name)}"
            csv_path, txt_path = emit_ordered_matrix(net, rel.id, part, out / stem)
            paths.extend([csv_path, txt_path])
    return paths


def attribute_profile(
    labels: Sequence[int] | np.ndarray,
    unit_names: Sequence[str],
    attributes: str | Path,
    out_path: str | Path | None = None,
) -> dict:
    """Per-cluster means of numeric unit attributes.

    ``attributes`` is a CSV whose first column holds unit names and whose
    remaining columns are numeric.  The name sets must match the units
    exactly, both ways.  Returns cluster sizes and per-column means
    (cluster by cluster plus overall); optionally writes them as CSV.
    """
    labels = np.asarray(labels, dtype=np.int64)
    if labels.shape[0] != len(unit_names):
        raise ValidationError("labels and unit names differ in length")
    with open(attributes, "r", encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or len(rows[0]) < 2:
        raise ValidationError("attribute CSV needs a name column and data columns")
    columns = [c.strip() for c in rows[0][1:]]
    data: dict[str, list[float]] = {}
    for row in rows[1:]:
        if not row or not any(cell.strip() for cell in row):
            continue
        name = row[0].strip()
        if name in data:
            raise ValidationError(f"duplicate attribute row for unit {name!r}")
        if len(row) != len(columns) + 1:
            raise ValidationError(f"attribute row for {name!r} has wrong width")
        try:
            data[name] = [float(cell) for cell in row[1:]]
        except ValueError as exc:
            raise ValidationError(
                f"non-numeric attribute value for unit {name!r}"
            ) from exc
    missing = [n for n in unit_names if n not in data]
    if missing:
        raise ValidationError(f"attributes missing for units: {missing}")
    extra = sorted(set(data) - set(unit_names))
    if extra:
        raise ValidationError(f"attributes for unknown units: {extra}")
    table = np.array([data[n] for n in unit_names], dtype=np.float64)
    m = int(labels.max()) + 1 if labels.size else 0
    sizes = np.bincount(labels, minlength=m)
    clusters = []
    for k in range(m):
        mask = labels == k
        means = table[mask].mean(axis=0) if mask.any() else np.full(len(columns), np.nan)
        clusters.append(
            {
                "cluster": k + 1,
                "size": int(sizes[k]),
                "means": {c: v for c, v in zip(columns, means)},
            }
        )
    overall = {c: v for c, v in zip(columns, table.mean(axis=0))}
    result = _jsonable(
        {"columns": columns, "clusters": clusters, "overall": overall}
    )
    if out_path is not None:
        out_path = Path(out_path)
        out_path.parent.mkdir(parents=True, exist_ok=True)
        with open(out_path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["cluster", "size", *columns])
            for rec in result["clusters"]:
                writer.writerow(
                    [rec["cluster"], rec["size"]]
                    + [rec["means"][c] for c in columns]
                )
            writer.writerow(["overall", len(unit_names)] + [overall[c] for c in columns])
    return result


__all__ = [
    "AnalysisConfig",
    "config_from_mapping",
    "load_analysis_config",
    "resolve_model",
    "run_separate",
    "run_conversion",
    "run_multilevel",
    "run_analysis",
    "document_json",
    "write_document",
    "write_run_outputs",
    "emit_ordered_matrix",
    "attribute_profile",
]
