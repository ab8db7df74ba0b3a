"""Command-line interface: ``kerneltest <subcommand> [options]``.

Subcommands
-----------
test       one multivariate test over all features (T=10 by default)
de         one univariate test per feature, BH-adjusted (T=4 by default)
project    per-cell projections on the discriminant axis
pairwise   statistic between every pair of conditions
benchmark  calibration / power on a simulated ZINB scenario
simulate   write a simulated scenario to disk

Every run writes ``run.json`` (resolved configuration, seed, version) into
the output directory.  Exit status: 0 success, 2 invalid input, 3 numerical
failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .inference import bh_adjust
from .ingest import (
    Dataset,
    IngestError,
    load_dataset,
    log_normalize,
    read_labels,
    split_conditions,
    write_dataset,
)
from .kernels import KernelError, KernelSpec, resolve
from .kfda import NumericalError, TruncationError, pairwise_statistics
from .nystrom import nystrom_statistic
from .simulate import (
    BaselineTest,
    KernelTestConfig,
    SimulationError,
    generate_scenario,
    load_preset,
    run_benchmark,
)
from .testing import DEFAULT_T_FEATURE, DEFAULT_T_GLOBAL, de_test, global_test

log = logging.getLogger("kerneltest")

EXIT_INPUT = 2
EXIT_NUMERIC = 3
THREADS_ENV = "KERNELTEST_THREADS"

RESULT_COLUMNS = ["feature", "d2", "df", "pvalue", "padj", "method"]


def _fmt(x) -> str:
    if x is None or (isinstance(x, float) and not np.isfinite(x)):
        return "NA"
    return format(float(x), ".17g")


def _add_common(p: argparse.ArgumentParser, t_default: int | None, data: bool = True):
    if data:
        p.add_argument("--matrix", required=True, help="cells x features CSV/TSV")
        p.add_argument("--labels", required=True, help="cell_id,condition CSV/TSV")
        p.add_argument("--log-normalize", action="store_true", help="apply log(1+x) first")
        p.add_argument("--order", nargs=2, metavar=("COND1", "COND2"),
                       help="condition order (default: lexicographic)")
    p.add_argument("--kernel", default="gauss", choices=["gauss", "zi-gauss", "linear"])
    p.add_argument("--bandwidth", default="median", help="'median' or a positive float")
    p.add_argument("--dropout-file", help="zi-gauss only: CSV cell_id,pi of known dropout rates")
    p.add_argument("--truncation", "-T", type=int, default=t_default)
    p.add_argument("--method", default="asymptotic", choices=["asymptotic", "permutation"])
    p.add_argument("--permutations", "-B", type=int, default=1000)
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=None,
                   help=f"worker threads (default: ${THREADS_ENV} or 1)")
    p.add_argument("--out-dir", default=".", help="output directory")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="kerneltest", description=__doc__.split("\n")[0])
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("test", help="global multivariate test")
    _add_common(p, DEFAULT_T_GLOBAL)
    p.add_argument("--landmarks", type=int, default=None,
                   help="use the Nystrom approximation with this many landmarks")

    p = sub.add_parser("de", help="per-feature tests")
    _add_common(p, DEFAULT_T_FEATURE)
    p.add_argument("--features", help="optional feature metadata (feature,category[,dropout])")

    p = sub.add_parser("project", help="discriminant-axis projections")
    _add_common(p, DEFAULT_T_GLOBAL)

    p = sub.add_parser("pairwise", help="statistics between all pairs of conditions")
    _add_common(p, DEFAULT_T_GLOBAL)

    p = sub.add_parser("benchmark", help="calibration and power on simulated data")
    _add_common(p, DEFAULT_T_FEATURE, data=False)
    p.add_argument("--preset", default="desk", help="preset name or TOML path")
    p.add_argument("--replicates", type=int, default=None,
                   help="replicate count (default: the preset's, 100 for desk)")
    p.add_argument("--tests", default="kfda",
                   help="comma list of kfda, welch, ks (kfda uses --kernel/--truncation)")
    p.add_argument("--cells", type=int, default=None, help="override cells per condition")
    p.add_argument("--full", action="store_true",
                   help="paper-scale run: 'paper' preset (500 replicates, overnight)")
    p.add_argument("--dump-pvalues", help="write the raw p-value matrices (.npz)")

    p = sub.add_parser("simulate", help="write a simulated dataset")
    p.add_argument("--preset", default="desk")
    p.add_argument("--cells", type=int, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=None)
    p.add_argument("--out-dir", default=".")
    return parser


def _threads(args) -> int:
    if args.threads is not None:
        return max(1, args.threads)
    return max(1, int(os.environ.get(THREADS_ENV, "1")))


def _kernel(args, d: Dataset | None = None) -> KernelSpec:
    bw = args.bandwidth
    if bw != "median":
        try:
            bw = float(bw)
        except ValueError:
            raise KernelError(f"bandwidth must be 'median' or a number, got {bw!r}") from None
    pi = None
    if getattr(args, "dropout_file", None):
        if args.kernel != "zi-gauss":
            raise KernelError("--dropout-file only applies to the zi-gauss kernel")
        mapping = read_labels(args.dropout_file)
        if d is None:
            raise KernelError("--dropout-file needs a dataset")
        try:
            pi = np.array([float(mapping[c]) for c in d.cell_ids])
        except KeyError as exc:
            raise IngestError(f"cell {exc} missing from dropout file") from None
    return KernelSpec(args.kernel, bw, pi)


def _load(args, two_sample: bool = True) -> Dataset:
    d = load_dataset(args.matrix, args.labels, two_sample=two_sample, min_cells=2)
    if args.log_normalize:
        d = log_normalize(d)
    return d


def _ordered_kernel(kernel: KernelSpec, d: Dataset, order) -> KernelSpec:
    """Reorder per-cell dropout rates to the pooled (condition 1 first) order."""
    if kernel.zero_inflation is None:
        return kernel
    s1, s2 = split_conditions(d, order)
    pos = {c: i for i, c in enumerate(d.cell_ids)}
    idx = [pos[c] for c in s1.cell_ids + s2.cell_ids]
    return replace(kernel, zero_inflation=kernel.zero_inflation[idx])


def _write_results(path: Path, results, extra: dict[str, list[str]] | None = None):
    def key(item):
        _, r = item
        missing = not np.isfinite(r.pvalue)
        return (missing, 0.0 if missing else r.pvalue, r.feature)

    extra = extra or {}
    rows = sorted(enumerate(results), key=key)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, delimiter="\t", lineterminator="\n")
        w.writerow(RESULT_COLUMNS + ["flag"] + list(extra))
        for i, r in rows:
            w.writerow([r.feature, _fmt(r.d2), r.df, _fmt(r.pvalue), _fmt(r.padj), r.method,
                        ";".join(r.warnings)] + [col[i] for col in extra.values()])


def _write_projections(path: Path, cells, conds, proj):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["cell_id", "condition", "projection"])
        for c, k, v in zip(cells, conds, proj):
            w.writerow([c, k, _fmt(v)])


def _write_log(out: Path, command: str, config: dict):
    record = {"command": command, "version": __version__, "config": config}
    (out / "run.json").write_text(json.dumps(record, indent=2, sort_keys=True, default=str) + "\n")


def _base_config(args) -> dict:
    cfg = {k: v for k, v in vars(args).items() if k not in ("verbose",)}
    cfg["threads"] = _threads(args)
    return cfg


def cmd_test(args) -> int:
    d = _load(args)
    kernel = _ordered_kernel(_kernel(args, d), d, args.order)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    cfg = _base_config(args)
    if args.landmarks:
        s1, s2 = split_conditions(d, args.order)
        x = np.vstack([s1.values, s2.values])
        stat = nystrom_statistic(x, s1.n, kernel, args.truncation, args.landmarks, args.seed)
        from .inference import asymptotic_pvalue

        result = asymptotic_pvalue(stat)
        result.method = "asymptotic-nystrom"
        cells = conds = proj = None
    else:
        result, cells, conds = global_test(d, kernel, args.truncation, args.method,
                                           args.permutations, args.seed, args.order,
                                           args.alpha, _threads(args))
        proj = result.projections
    result.padj = float(bh_adjust([result.pvalue])[0])
    for w in result.warnings:
        log.warning(w)
    _write_results(out / "results.tsv", [result])
    if proj is not None:
        _write_projections(out / "projections.csv", cells, conds, proj)
    s1, s2 = split_conditions(d, args.order)
    cfg["resolved_kernel"] = _describe(resolve(np.vstack([s1.values, s2.values]), kernel, s1.n))
    cfg["conditions"] = [s1.condition, s2.condition]
    _write_log(out, "test", cfg)
    print(f"GLOBAL d2={result.d2:.6g} df={result.df} p={result.pvalue:.6g} ({result.method})")
    return 0


def _describe(spec: KernelSpec) -> dict:
    return {"family": spec.family, "bandwidth": spec.bandwidth}


def _read_feature_meta(path) -> dict[str, list[str]]:
    with open(path, newline="", encoding="utf-8") as fh:
        delim = "\t" if str(path).endswith((".tsv", ".txt")) else ","
        rows = list(csv.reader(fh, delimiter=delim))
    header, body = rows[0], rows[1:]
    return {h: [r[i] for r in body] for i, h in enumerate(header)}


def cmd_de(args) -> int:
    d = _load(args)
    kernel = _ordered_kernel(_kernel(args, d), d, args.order)
    extra = {}
    if args.features:
        meta = _read_feature_meta(args.features)
        names = meta.get("feature")
        if names != d.feature_names:
            raise IngestError("feature metadata does not match the matrix columns")
        if "category" in meta:
            extra["category"] = meta["category"]
            d = replace(d, feature_categories=meta["category"])
        if "dropout" in meta and args.kernel == "zi-gauss" and kernel.zero_inflation is None:
            d = replace(d, feature_dropout=np.array([float(v) for v in meta["dropout"]]))
    results = de_test(d, kernel, args.truncation, args.method, args.permutations,
                      args.seed, args.order, _threads(args))
    bad = [r.feature for r in results if not np.isfinite(r.pvalue)]
    if bad:
        log.warning("%d feature(s) could not be tested (NA rows): %s", len(bad),
                    ", ".join(bad[:10]) + (" ..." if len(bad) > 10 else ""))
    if d.n < 100 and args.method == "asymptotic":
        log.warning("small sample (n=%d < 100): permutation p-values recommended", d.n)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    _write_results(out / "de_results.tsv", results, extra)
    cfg = _base_config(args)
    s1, s2 = split_conditions(d, args.order)
    cfg["conditions"] = [s1.condition, s2.condition]
    cfg["bandwidth_scope"] = "per-feature"
    _write_log(out, "de", cfg)
    n_sig = sum(1 for r in results if r.padj is not None and r.padj <= args.alpha)
    print(f"{len(results)} features tested, {n_sig} with padj <= {args.alpha}")
    return 0


def cmd_project(args) -> int:
    d = _load(args)
    kernel = _ordered_kernel(_kernel(args, d), d, args.order)
    result, cells, conds = global_test(d, kernel, args.truncation, "asymptotic",
                                       order=args.order)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    _write_projections(out / "projections.csv", cells, conds, result.projections)
    cfg = _base_config(args)
    cfg["conditions"] = sorted(set(conds), key=conds.index)
    _write_log(out, "project", cfg)
    return 0


def cmd_pairwise(args) -> int:
    d = _load(args, two_sample=False)
    if args.dropout_file:
        raise KernelError("--dropout-file is not supported for pairwise runs")
    tags, mat = pairwise_statistics(d.values, d.labels, _kernel(args), args.truncation)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "pairwise.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["condition", *tags])
        for tag, row in zip(tags, mat):
            w.writerow([tag, *(_fmt(v) for v in row)])
    cfg = _base_config(args)
    cfg["conditions"] = tags
    _write_log(out, "pairwise", cfg)
    return 0


def _benchmark_tests(args):
    tests = []
    for name in [t.strip() for t in args.tests.split(",") if t.strip()]:
        if name == "kfda":
            bw = args.bandwidth if args.bandwidth == "median" else float(args.bandwidth)
            tests.append(KernelTestConfig(args.kernel, args.truncation, bw))
        elif name in ("welch", "ks"):
            tests.append(BaselineTest(name))
        else:
            raise SimulationError(f"unknown test {name!r}")
    if not tests:
        raise SimulationError("no tests selected")
    return tests


def cmd_benchmark(args) -> int:
    preset = "paper" if args.full and args.preset == "desk" else args.preset
    spec = load_preset(preset)
    replicates = args.replicates or spec.replicates
    if args.cells:
        spec = spec.with_sizes(args.cells, args.cells)
    tests = _benchmark_tests(args)
    dump = {} if args.dump_pvalues else None
    reports = run_benchmark(spec, tests, replicates, args.alpha, args.seed,
                            _threads(args), dump)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    tsv = "".join(r.to_tsv() if i == 0 else r.to_tsv().split("\n", 1)[1]
                  for i, r in enumerate(reports))
    (out / "benchmark.tsv").write_text(tsv, encoding="utf-8")
    summary = "\n".join(r.summary() for r in reports) + "\n"
    (out / "summary.txt").write_text(summary, encoding="utf-8")
    if dump is not None:
        np.savez(args.dump_pvalues, categories=np.array(spec.layout()),
                 **{k: v for k, v in dump.items()})
    cfg = _base_config(args)
    cfg.update(preset=spec.name, replicates=replicates,
               n_per_condition=list(spec.n_per_condition), genes=dict(spec.genes))
    _write_log(out, "benchmark", cfg)
    sys.stdout.write(summary)
    return 0


def cmd_simulate(args) -> int:
    spec = load_preset(args.preset)
    if args.cells:
        spec = spec.with_sizes(args.cells, args.cells)
    d = generate_scenario(spec, args.seed)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_dataset(d, out / "matrix.csv", out / "labels.csv")
    with open(out / "features.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["feature", "category", "dropout"])
        for name, cat, pi in zip(d.feature_names, d.feature_categories, d.feature_dropout):
            w.writerow([name, cat, _fmt(pi)])
    cfg = _base_config(args)
    cfg.update(preset=spec.name, n_per_condition=list(spec.n_per_condition))
    _write_log(out, "simulate", cfg)
    return 0


COMMANDS = {
    "test": cmd_test,
    "de": cmd_de,
    "project": cmd_project,
    "pairwise": cmd_pairwise,
    "benchmark": cmd_benchmark,
    "simulate": cmd_simulate,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (NumericalError, TruncationError, np.linalg.LinAlgError) as exc:
        log.error("numerical failure: %s", exc)
        return EXIT_NUMERIC
    except (IngestError, KernelError, SimulationError, OSError, ValueError) as exc:
        log.error("%s", exc)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
