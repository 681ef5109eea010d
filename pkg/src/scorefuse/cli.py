"""Command-line surface: score, fuse, eval, grid, correlate, synth.

Exit codes: 0 success, 2 usage, 3 parse, 4 contract violation, 5 alignment,
6 leakage, 7 I/O. Every emitted artifact records the tool version, the run
seed and the SHA-256 digests of its inputs (JSON artifacts inline, CSV
artifacts in a ``.meta.json`` sidecar), so identical inputs reproduce
byte-identical outputs.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from .demo import build_demo
from .embeddings import METRICS, batch_score, load_embeddings
from .errors import (
    IO_EXIT_CODE,
    ContractError,
    LeakageError,
    ParseError,
    ScoreFuseError,
)
from .fusion import (
    FusionWeights,
    PerceptronHyper,
    apply_fusion,
    estimate_pcc_weights,
    fuser_to_dict,
    load_fuser,
    train_perceptron,
)
from .metrics import (
    build_curves,
    correlation_matrix,
    curves_csv_text,
    evaluate_table,
    format_report,
    roc_csv_text,
    roc_from_curves,
)
from .protocol import (
    GROUP_BYS,
    PLAN_KINDS,
    ExperimentResult,
    MethodSpec,
    aggregate_results,
    plan_experiments,
    result_to_dict,
    run_experiment,
)
from .provenance import (
    sha256_file,
    write_csv_artifact,
    write_json_artifact,
)
from .synth import DEFAULT_SETTING, GaussianScoreModel, generate_scores
from .tables import (
    AlignedScores,
    ScoreTable,
    SettingDescriptor,
    align_tables,
    load_pairs,
    load_score_table,
    normalize_scores,
    score_table_csv_text,
)

FUSE_METHODS = ("avg", "bayes", "pcc_avg", "weighted", "perceptron")


def _load_tables(paths, input_range, normalize: bool) -> list[ScoreTable]:
    lo, hi = input_range
    tables = []
    for path in paths:
        table = load_score_table(path, (lo, hi))
        if normalize:
            table = normalize_scores(table, "affine_to_unit")
        elif table.declared_range != (0.0, 1.0):
            raise ContractError(
                f"{path}: declared range [{lo}, {hi}] is not [0, 1]; pass --normalize"
            )
        tables.append(table)
    return tables


def _digests(paths) -> dict[str, str]:
    return {str(p): sha256_file(p) for p in paths}


# ---------------------------------------------------------------- score


def cmd_score(args) -> int:
    refs = load_embeddings(args.references)
    probes = load_embeddings(args.probes)
    pairs = load_pairs(args.pairs)
    if not pairs:
        raise ContractError(f"{args.pairs}: no comparisons to score")
    table = batch_score(refs, probes, pairs, args.metric, matcher_id=args.matcher_id)
    if args.normalize:
        table = normalize_scores(table, "affine_to_unit")
    inputs = _digests([args.references, args.probes, args.pairs])
    write_csv_artifact(args.out, score_table_csv_text(table), seed=args.seed, inputs=inputs)
    print(f"wrote {len(table)} scores to {args.out}")
    return 0


# ---------------------------------------------------------------- fuse


def cmd_fuse(args) -> int:
    tables = _load_tables(args.inputs, args.input_range, args.normalize)
    test = align_tables(tables)
    out_dir = Path(args.out_dir)
    inputs = _digests(args.inputs)

    val = None
    if args.validation:
        val_tables = _load_tables(args.validation, args.input_range, args.normalize)
        val = align_tables(val_tables)
        if val.matcher_ids != test.matcher_ids:
            raise ContractError(
                f"validation matchers {val.matcher_ids} do not match inputs {test.matcher_ids}"
            )
        overlap = val.keys() & test.keys()
        if overlap:
            shown = ", ".join(map(str, sorted(overlap)[:5]))
            raise LeakageError(
                f"{len(overlap)} pair(s) shared between validation and fused inputs: {shown}"
            )
        inputs.update(_digests(args.validation))

    method = args.method
    fitted = None
    if method in ("avg", "bayes"):
        fused = apply_fusion(method, test)
    elif method == "weighted":
        if not args.weights_file:
            raise ContractError("weighted fusion requires --weights-file")
        weights = load_fuser(args.weights_file)
        if not isinstance(weights, FusionWeights):
            raise ContractError(f"{args.weights_file} does not contain weights")
        fused = apply_fusion(weights, test)
        fitted = weights
        inputs.update(_digests([args.weights_file]))
    elif method == "pcc_avg":
        if val is None:
            raise ContractError("pcc_avg: validation scores required (--validation)")
        fitted = estimate_pcc_weights(val)
        fused = apply_fusion(fitted, test)
    else:  # perceptron
        if val is None:
            raise ContractError("perceptron: validation scores required (--validation)")
        hyper = PerceptronHyper(
            learning_rate=args.learning_rate,
            max_epochs=args.max_epochs,
            tolerance=args.tolerance,
            seed=args.seed,
        )
        fitted = train_perceptron(val, hyper)
        fused = apply_fusion(fitted, test)

    out_csv = out_dir / f"fused_{method}.csv"
    write_csv_artifact(out_csv, score_table_csv_text(fused.table), seed=args.seed, inputs=inputs)
    if fitted is not None:
        write_json_artifact(
            out_dir / f"fuser_{method}.json",
            fuser_to_dict(fitted),
            seed=args.seed,
            inputs=inputs,
        )
    print(f"wrote fused scores ({method}) to {out_csv}")
    return 0


# ---------------------------------------------------------------- eval


def cmd_eval(args) -> int:
    table = load_score_table(args.scores, tuple(args.input_range))
    report = evaluate_table(table)
    curves = build_curves(table)
    inputs = _digests([args.scores])
    out_dir = Path(args.out_dir)
    write_json_artifact(
        out_dir / "report.json", {"metrics": report.as_dict()}, seed=args.seed, inputs=inputs
    )
    write_csv_artifact(out_dir / "curves.csv", curves_csv_text(curves), seed=args.seed, inputs=inputs)
    write_csv_artifact(
        out_dir / "roc.csv", roc_csv_text(roc_from_curves(curves)), seed=args.seed, inputs=inputs
    )
    print(format_report(report, args.precision))
    return 0


# ---------------------------------------------------------------- correlate


def cmd_correlate(args) -> int:
    if len(args.inputs) < 2:
        raise ContractError("need >= 2 matchers to correlate")
    tables = _load_tables(args.inputs, args.input_range, args.normalize)
    aligned = align_tables(tables)
    matrix = correlation_matrix(aligned)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(("matcher_id", *matrix.matcher_ids))
    for mid, row in zip(matrix.matcher_ids, matrix.values):
        writer.writerow((mid, *[repr(v) for v in row]))
    write_csv_artifact(args.out, buf.getvalue(), seed=args.seed, inputs=_digests(args.inputs))
    print(buf.getvalue(), end="")
    return 0


# ---------------------------------------------------------------- synth


def cmd_synth(args) -> int:
    if args.demo:
        config = build_demo(args.demo, args.seed)
        print(f"demo written; run: scorefuse grid --config {config}")
        return 0
    if args.model_file:
        try:
            doc = json.loads(Path(args.model_file).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ParseError(f"{args.model_file}: invalid JSON ({exc.msg})") from None
        try:
            model = GaussianScoreModel(
                mu_nonmated=float(doc["mu_nonmated"]),
                sigma_nonmated=float(doc["sigma_nonmated"]),
                mu_mated=float(doc["mu_mated"]),
                sigma_mated=float(doc["sigma_mated"]),
                n_mated=int(doc["n_mated"]),
                n_nonmated=int(doc["n_nonmated"]),
                seed=int(doc.get("seed", args.seed)),
                clamp=bool(doc.get("clamp", False)),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ParseError(f"{args.model_file}: malformed model ({exc})") from None
        inputs = _digests([args.model_file])
    else:
        model = GaussianScoreModel(
            mu_nonmated=args.mu_nonmated,
            sigma_nonmated=args.sigma_nonmated,
            mu_mated=args.mu_mated,
            sigma_mated=args.sigma_mated,
            n_mated=args.n_mated,
            n_nonmated=args.n_nonmated,
            seed=args.seed,
            clamp=args.clamp,
        )
        inputs = {}
    setting = SettingDescriptor(args.camera, args.distance, args.dataset)
    table = generate_scores(
        model, matcher_id=args.matcher_id, setting=setting, id_tag=args.id_tag
    )
    write_csv_artifact(args.out, score_table_csv_text(table), seed=model.seed, inputs=inputs)
    print(f"wrote {len(table)} synthetic scores to {args.out}")
    return 0


# ---------------------------------------------------------------- grid


def _validate_grid_config(doc: dict, config_path: Path) -> dict:
    """Check the config against the shipped schema (schemas/grid_config.schema.json)."""

    def fail(msg: str):
        raise ParseError(f"{config_path}: {msg}")

    if not isinstance(doc, dict):
        fail("config must be a JSON object")
    if doc.get("schema") != "scorefuse-grid-config/1":
        fail("schema must be 'scorefuse-grid-config/1'")
    for key, typ in (
        ("seed", int),
        ("output_dir", str),
        ("kinds", list),
        ("matchers", list),
        ("settings", list),
        ("score_files", list),
        ("methods", list),
    ):
        if key not in doc or not isinstance(doc[key], typ):
            fail(f"missing or mistyped key {key!r} (expected {typ.__name__})")
    if not doc["matchers"] or len(set(doc["matchers"])) != len(doc["matchers"]):
        fail("matchers must be a nonempty list of unique ids")
    unknown = set(doc["kinds"]) - set(PLAN_KINDS)
    if unknown:
        fail(f"unknown kinds {sorted(unknown)}")
    for entry in doc["settings"]:
        if not isinstance(entry, dict) or not {"camera_id", "distance_m", "dataset_id"} <= entry.keys():
            fail(f"bad setting entry {entry!r}")
    for entry in doc["score_files"]:
        needed = {"matcher_id", "camera_id", "distance_m", "dataset_id", "split", "path"}
        if not isinstance(entry, dict) or not needed <= entry.keys():
            fail(f"bad score_files entry {entry!r}")
        if entry["split"] not in ("train", "validation", "test"):
            fail(f"bad split {entry['split']!r} in score_files")
    method_ids = []
    for entry in doc["methods"]:
        if not isinstance(entry, dict) or not {"method_id", "kind", "matchers"} <= entry.keys():
            fail(f"bad method entry {entry!r}")
        method_ids.append(entry["method_id"])
        extra = set(entry["matchers"]) - set(doc["matchers"])
        if extra:
            fail(f"method {entry['method_id']!r} names unknown matchers {sorted(extra)}")
    if len(set(method_ids)) != len(method_ids):
        fail("method_id values must be unique")
    group_by = doc.get("group_by", ["method"])
    if not isinstance(group_by, list) or not group_by or set(group_by) - set(GROUP_BYS):
        fail(f"group_by must be a nonempty subset of {GROUP_BYS}")
    doc["group_by"] = group_by
    return doc


def _method_from_config(entry: dict, config_dir: Path) -> MethodSpec:
    weights = None
    if entry.get("weights_file"):
        loaded = load_fuser(config_dir / entry["weights_file"])
        if not isinstance(loaded, FusionWeights):
            raise ParseError(f"{entry['weights_file']} does not contain weights")
        weights = loaded
    hyper = None
    if entry.get("hyper"):
        try:
            hyper = PerceptronHyper(**entry["hyper"])
        except TypeError as exc:
            raise ParseError(f"method {entry['method_id']!r}: bad hyper ({exc})") from None
    return MethodSpec(
        method_id=str(entry["method_id"]),
        kind=str(entry["kind"]),
        matcher_ids=tuple(entry["matchers"]),
        weights=weights,
        hyper=hyper,
    )


class _GridData:
    """Score-file index and aligned-table cache for one grid run.

    Tables are loaded and aligned up front (sequentially), so worker threads
    only ever read the cache; load or alignment failures are remembered and
    re-raised for every cell that needs the poisoned (setting, split).
    """

    def __init__(self, doc: dict, config_dir: Path):
        self.config_dir = config_dir
        self.matchers = list(doc["matchers"])
        self.files: dict[tuple[str, SettingDescriptor, str], Path] = {}
        for entry in doc["score_files"]:
            setting = SettingDescriptor(
                str(entry["camera_id"]), float(entry["distance_m"]), str(entry["dataset_id"])
            )
            key = (str(entry["matcher_id"]), setting, str(entry["split"]))
            if key in self.files:
                raise ParseError(f"duplicate score_files entry for {key}")
            self.files[key] = config_dir / str(entry["path"])
        self._aligned: dict[tuple[SettingDescriptor, str], AlignedScores | ScoreFuseError] = {}
        self.digests: dict[str, str] = {}

    def _load(self, setting: SettingDescriptor, split: str) -> AlignedScores:
        tables = []
        for matcher in self.matchers:
            key = (matcher, setting, split)
            if key not in self.files:
                raise ContractError(
                    f"no score file declared for matcher {matcher!r}, "
                    f"setting {setting.key()}, split {split!r}"
                )
            path = self.files[key]
            tables.append(load_score_table(path, (0.0, 1.0)))
            self.digests[str(path)] = sha256_file(path)
        return align_tables(tables)

    def prepare(self, setting: SettingDescriptor, split: str) -> None:
        key = (setting, split)
        if key in self._aligned:
            return
        try:
            self._aligned[key] = self._load(setting, split)
        except ScoreFuseError as exc:
            self._aligned[key] = exc

    def aligned(self, setting: SettingDescriptor, split: str) -> AlignedScores:
        self.prepare(setting, split)
        cached = self._aligned[(setting, split)]
        if isinstance(cached, ScoreFuseError):
            raise cached
        return cached

    def has_split(self, setting: SettingDescriptor, split: str) -> bool:
        return all((m, setting, split) in self.files for m in self.matchers)

    def cell_digests(self, item) -> dict[str, str]:
        """Digests of the score files feeding one plan item."""
        wanted = [(item.train_setting, "validation"), (item.test_setting, "test")]
        if self.has_split(item.train_setting, "train"):
            wanted.append((item.train_setting, "train"))
        out = {}
        for setting, split in wanted:
            for matcher in self.matchers:
                path = self.files.get((matcher, setting, split))
                if path is not None and str(path) in self.digests:
                    out[str(path)] = self.digests[str(path)]
        return out


def cmd_grid(args) -> int:
    config_path = Path(args.config)
    try:
        doc = json.loads(config_path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ParseError(f"{config_path}: invalid JSON ({exc.msg})") from None
    doc = _validate_grid_config(doc, config_path)
    config_dir = config_path.parent
    seed = int(doc["seed"])
    out_dir = config_dir / str(doc["output_dir"])
    enforce_val = bool(doc.get("enforce_validation_setting", True))

    settings = [
        SettingDescriptor(str(e["camera_id"]), float(e["distance_m"]), str(e["dataset_id"]))
        for e in doc["settings"]
    ]
    plan = plan_experiments(settings, doc["kinds"])
    methods = [_method_from_config(entry, config_dir) for entry in doc["methods"]]
    data = _GridData(doc, config_dir)
    config_digest = {str(config_path): sha256_file(config_path)}

    for item in plan.items:
        data.prepare(item.train_setting, "validation")
        data.prepare(item.test_setting, "test")
        if data.has_split(item.train_setting, "train"):
            data.prepare(item.train_setting, "train")

    cells = [(item, method) for item in plan.items for method in methods]
    results: list[ExperimentResult | None] = [None] * len(cells)
    failures: list[dict] = []

    def run_cell(idx: int) -> None:
        item, method = cells[idx]
        try:
            val = data.aligned(item.train_setting, "validation")
            test = data.aligned(item.test_setting, "test")
            train = (
                data.aligned(item.train_setting, "train")
                if data.has_split(item.train_setting, "train")
                else None
            )
            results[idx] = run_experiment(
                item,
                method,
                train,
                val,
                test,
                seed=seed,
                enforce_validation_setting=enforce_val,
            )
        except ScoreFuseError as exc:
            if not args.keep_going:
                raise type(exc)(
                    f"cell {item.key()} method {method.method_id!r}: {exc}"
                ) from exc
            failures.append(
                {
                    "index": idx,
                    "cell": item.key(),
                    "method_id": method.method_id,
                    "error": type(exc).__name__,
                    "exit_code": exc.exit_code,
                    "message": str(exc),
                }
            )

    if args.jobs > 1:
        with ThreadPoolExecutor(max_workers=args.jobs) as pool:
            list(pool.map(run_cell, range(len(cells))))
    else:
        for idx in range(len(cells)):
            run_cell(idx)

    failures.sort(key=lambda f: f["index"])
    ok_results = [r for r in results if r is not None]
    for res in ok_results:
        name = f"result__{res.item.key()}__{res.method_id}.json"
        write_json_artifact(
            out_dir / name,
            result_to_dict(res),
            seed=seed,
            inputs={**config_digest, **data.cell_digests(res.item)},
        )

    all_inputs = {**config_digest, **data.digests}
    failure_rows = [
        {k: f[k] for k in ("cell", "method_id", "error", "message")} for f in failures
    ]
    if ok_results:
        summaries = {gb: aggregate_results(ok_results, gb) for gb in doc["group_by"]}
    else:
        summaries = {}
    write_json_artifact(
        out_dir / "summary.json",
        {"summary": summaries, "failures": failure_rows},
        seed=seed,
        inputs=all_inputs,
    )
    if ok_results:
        primary = summaries[doc["group_by"][0]]
        buf = io.StringIO()
        writer = csv.DictWriter(buf, fieldnames=list(primary[0].keys()), lineterminator="\n")
        writer.writeheader()
        for row in primary:
            writer.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})
        write_csv_artifact(out_dir / "summary.csv", buf.getvalue(), seed=seed, inputs=all_inputs)

    print(f"{len(ok_results)} cell(s) completed, {len(failures)} failed; results in {out_dir}")
    if failures:
        for failure in failure_rows:
            print(
                f"FAILED {failure['cell']} {failure['method_id']}: {failure['message']}",
                file=sys.stderr,
            )
        return failures[0]["exit_code"]
    return 0


# ---------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="scorefuse",
        description="Score-level fusion and verification evaluation toolkit.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("score", help="score embedding pairs into a score CSV")
    p.add_argument("--references", required=True, help="reference embeddings (JSON lines)")
    p.add_argument("--probes", required=True, help="probe embeddings (JSON lines)")
    p.add_argument("--pairs", required=True, help="comparison pairs CSV")
    p.add_argument("--metric", choices=METRICS, required=True)
    p.add_argument("--matcher-id", default=None, help="matcher id for the output table")
    p.add_argument("--normalize", action="store_true", help="affine-map scores into [0, 1]")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(fn=cmd_score)

    p = sub.add_parser("fuse", help="fuse aligned score tables with one rule")
    p.add_argument("--method", choices=FUSE_METHODS, required=True)
    p.add_argument("--inputs", nargs="+", required=True, help="per-matcher score CSVs")
    p.add_argument("--validation", nargs="*", default=[], help="validation CSVs (parametric)")
    p.add_argument("--weights-file", default=None, help="manual weights JSON (weighted)")
    p.add_argument("--input-range", nargs=2, type=float, default=(0.0, 1.0))
    p.add_argument("--normalize", action="store_true")
    p.add_argument("--learning-rate", type=float, default=0.05)
    p.add_argument("--max-epochs", type=int, default=10000)
    p.add_argument("--tolerance", type=float, default=1e-8)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(fn=cmd_fuse)

    p = sub.add_parser("eval", help="compute the metric report for one score CSV")
    p.add_argument("--scores", required=True)
    p.add_argument("--input-range", nargs=2, type=float, default=(0.0, 1.0))
    p.add_argument("--out-dir", required=True)
    p.add_argument("--precision", type=int, default=2, help="decimals in the printed report")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("grid", help="run an experiment grid from a config JSON")
    p.add_argument("--config", required=True)
    p.add_argument("--jobs", type=int, default=1, help="parallel cells (default 1)")
    p.add_argument("--keep-going", action="store_true", help="record cell failures and continue")
    p.set_defaults(fn=cmd_grid)

    p = sub.add_parser("correlate", help="pairwise score correlations across matchers")
    p.add_argument("--inputs", nargs="+", required=True)
    p.add_argument("--input-range", nargs=2, type=float, default=(0.0, 1.0))
    p.add_argument("--normalize", action="store_true")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(fn=cmd_correlate)

    p = sub.add_parser("synth", help="generate synthetic labeled score tables")
    p.add_argument("--out", help="output score CSV")
    p.add_argument("--model-file", default=None, help="Gaussian model JSON")
    p.add_argument("--mu-nonmated", type=float, default=0.3)
    p.add_argument("--sigma-nonmated", type=float, default=0.1)
    p.add_argument("--mu-mated", type=float, default=0.6)
    p.add_argument("--sigma-mated", type=float, default=0.1)
    p.add_argument("--n-mated", type=int, default=1000)
    p.add_argument("--n-nonmated", type=int, default=1000)
    p.add_argument("--clamp", action="store_true", help="clamp samples into [0, 1]")
    p.add_argument("--matcher-id", default="synthetic")
    p.add_argument("--camera", default=DEFAULT_SETTING.camera_id)
    p.add_argument("--distance", type=float, default=DEFAULT_SETTING.distance_m)
    p.add_argument("--dataset", default=DEFAULT_SETTING.dataset_id)
    p.add_argument("--id-tag", default="", help="prefix for generated pair ids")
    p.add_argument("--demo", default=None, metavar="DIR", help="write the demo grid instead")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(fn=cmd_synth)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "synth" and not args.demo and not args.out:
        parser.error("synth requires --out (or --demo DIR)")
    try:
        return args.fn(args)
    except ScoreFuseError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return IO_EXIT_CODE


if __name__ == "__main__":
    sys.exit(main())
