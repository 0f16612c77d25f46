"""Command-line surface: build similarity matrices, verify curricula, run
experiment suites, aggregate reports, and generate synthetic data.

Exit codes: 0 success, 1 verification/statistical failure, 2 usage or
input error.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import os
import sys

import numpy as np

from . import curriculum, data, experiments, similarity

EXIT_OK = 0
EXIT_FAIL = 1
EXIT_USAGE = 2


class UsageError(Exception):
    pass


def _effective_rank(eigvals):
    # exponential of the spectral entropy of the normalized eigenvalues
    lam = np.clip(np.asarray(eigvals, dtype=float), 0.0, None)
    p = lam / lam.sum()
    nz = p[p > 0.0]
    return float(np.exp(-np.sum(nz * np.log(nz))))


def cmd_build_sim(args):
    if not os.path.exists(args.input):
        raise UsageError(f"input file not found: {args.input}")
    if args.kind in ("embedding", "attribute"):
        table = similarity.load_embeddings(args.input, expected_dim=args.dim)
        sim = similarity.build_cosine_similarity(table,
                                                 clamp_negative=not args.no_clamp)
        if args.kind == "attribute":
            sim = similarity.SimilarityMatrix(
                entries=sim.entries, class_names=sim.class_names,
                source="attribute-cosine", clamped_entries=sim.clamped_entries)
    elif args.kind == "hierarchy":
        graph = similarity.load_hierarchy(args.input)
        sim = similarity.simrank(graph, decay=args.decay, tol=args.tol,
                                 max_iter=args.max_iter)
    else:
        raise UsageError(f"unknown similarity kind {args.kind!r}")
    similarity.save_similarity(sim, args.output)
    spectrum = similarity.eigenspectrum(sim)
    top5 = ", ".join(f"{v:.6f}" for v in spectrum[:5])
    print(f"wrote {args.output}: C={sim.num_classes} source={sim.source}")
    print(f"clamped entries: {sim.clamped_entries}")
    print(f"top-5 eigenvalues: {top5}")
    print(f"effective rank: {_effective_rank(spectrum):.3f}")
    return EXIT_OK


def cmd_verify(args):
    if not os.path.exists(args.sim):
        raise UsageError(f"similarity file not found: {args.sim}")
    try:
        sim = similarity.load_similarity(args.sim)
        schedule = curriculum.init_targets(sim, args.epsilon)
    except (similarity.SimilarityError, curriculum.CurriculumError) as exc:
        print(f"verification failed before stepping: {exc}")
        return EXIT_FAIL
    report = curriculum.verify_curriculum(schedule, args.horizon)
    print(report.summary())
    return EXIT_OK if report.passed else EXIT_FAIL


def _parse_floats(text):
    return [float(x) for x in text.replace(",", " ").split()]


def _parse_ints(text):
    return [int(x) for x in text.replace(",", " ").split()]


def load_config_file(path):
    """Parse the key=value experiment config into (configs, paths dict)."""
    parser = configparser.ConfigParser()
    read = parser.read(path)
    if not read:
        raise UsageError(f"config file not found: {path}")
    if "paths" not in parser or "grid" not in parser:
        raise UsageError(f"{path}: need [paths] and [grid] sections")
    paths = dict(parser["paths"])
    grid = parser["grid"]
    training = parser["training"] if "training" in parser else {}

    encodings = grid.get("encodings", "SL").split()
    epsilons = _parse_floats(grid.get("epsilons", "0.9 0.99 0.999"))
    drs = _parse_floats(grid.get("drs", "1.0"))
    seeds = tuple(_parse_ints(grid.get("seeds", "0 1 2 3")))

    common = dict(
        seeds=seeds,
        epochs=int(training.get("epochs", 30)),
        batch_size=int(training.get("batch_size", 16)),
        lr=float(training.get("lr", 0.1)),
        lr_decay=float(training.get("lr_decay", 1.0)),
        lam=float(training.get("lambda", 1e-4)),
        architecture=training.get("architecture", "linear"),
        hidden=int(training.get("hidden", 64)),
    )
    configs = []
    try:
        for dr in drs:
            for enc in encodings:
                if enc == "LCL":
                    for eps in epsilons:
                        configs.append(experiments.ExperimentConfig(
                            encoding="LCL", epsilon=eps, dr=dr, **common))
                elif enc == "LS":
                    configs.append(experiments.ExperimentConfig(
                        encoding="LS", alpha=float(training.get("alpha", 0.1)),
                        dr=dr, **common))
                elif enc == "KD":
                    configs.append(experiments.ExperimentConfig(
                        encoding="KD",
                        kd_temperature=float(training.get("kd_temperature", 1.0)),
                        dr=dr, **common))
                else:
                    configs.append(experiments.ExperimentConfig(
                        encoding=enc, dr=dr, **common))
    except experiments.ExperimentError as exc:
        raise UsageError(f"{path}: {exc}") from exc
    if not configs:
        raise UsageError(f"{path}: empty grid")
    return configs, paths


def cmd_run(args):
    configs, paths = load_config_file(args.config)
    for key in ("train", "test"):
        if key not in paths:
            raise UsageError(f"{args.config}: [paths] needs `{key}`")
        if not os.path.exists(paths[key]):
            raise UsageError(f"missing data file: {paths[key]}")
    train = data.load_dataset(paths["train"])
    test = data.load_dataset(paths["test"])
    sim = None
    needs_sim = any(c.encoding == "LCL" for c in configs)
    if needs_sim:
        if "similarity" not in paths:
            raise UsageError(f"{args.config}: LCL configs need [paths] similarity")
        if not os.path.exists(paths["similarity"]):
            raise UsageError(f"missing similarity file: {paths['similarity']}")
        sim = similarity.load_similarity(paths["similarity"])
    out_dir = args.out_dir or paths.get("out_dir", "results")
    results, agg, rank = experiments.run_suite(
        configs, train, test, sim=sim, out_dir=out_dir, jobs=args.jobs,
        debug_verify=args.debug_verify_curriculum)
    print(f"{len(results)} trials -> {out_dir}/raw_results.csv")
    print(f"{'config_id':<44s} {'n':>2s} {'top1':>8s} {'std':>8s} {'top5':>8s}")
    for row in agg:
        print(f"{row.config_id:<44s} {row.n_trials:>2d} "
              f"{row.top1_mean:>8.4f} {row.top1_std:>8.4f} {row.top5_mean:>8.4f}")
    if rank is not None:
        print(rank.report())
    return EXIT_OK


def _read_raw_csv(path):
    with open(path, encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        rows = list(reader)
    missing = set(experiments.RAW_HEADER) - set(reader.fieldnames or [])
    if missing:
        raise UsageError(f"{path}: missing columns {sorted(missing)}")
    return rows


def _method_label(row):
    if row["encoding"] == "LCL" and row["epsilon"]:
        return f"LCL(eps={float(row['epsilon']):g})"
    if row["encoding"] == "LS" and row["alpha"]:
        return f"LS(alpha={float(row['alpha']):g})"
    if row["config_id"].endswith("_m2"):
        return "DML2"
    if row["encoding"] == "DML":
        return "DML1"
    return row["encoding"]


def cmd_report(args):
    rows = []
    for path in args.raw:
        if not os.path.exists(path):
            raise UsageError(f"raw CSV not found: {path}")
        rows.extend(_read_raw_csv(path))
    if not rows:
        raise UsageError("no raw result rows")
    groups = {}
    for row in rows:
        groups.setdefault(row["config_id"], []).append(row)
    out_dir = args.out_dir
    os.makedirs(out_dir, exist_ok=True)
    agg_path = os.path.join(out_dir, "aggregate.csv")
    with open(agg_path, "w", encoding="utf-8", newline="\n") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(experiments.AGG_HEADER)
        for config_id in sorted(groups):
            rs = groups[config_id]
            top1 = np.array([float(r["top1"]) for r in rs])
            top5 = np.array([float(r["top5"]) for r in rs])
            w.writerow([config_id, rs[0]["encoding"], rs[0]["epsilon"],
                        rs[0]["alpha"], rs[0]["dr"], len(rs),
                        repr(top1.mean()), repr(top1.std(ddof=0)),
                        repr(top5.mean()), repr(top5.std(ddof=0))])
    print(f"wrote {agg_path} ({len(groups)} configs)")
    methods = sorted({_method_label(r) for r in rows})
    settings = sorted({(r["dr"], r["seed"]) for r in rows})
    rank_path = os.path.join(out_dir, "rank_report.txt")
    if len(methods) < 2 or len(settings) < 2:
        msg = "rank test skipped: need >= 2 methods and >= 2 settings"
        print(msg)
        with open(rank_path, "w", encoding="utf-8") as fh:
            fh.write(msg + "\n")
        return EXIT_OK
    table = np.full((len(settings), len(methods)), np.nan)
    for r in rows:
        i = settings.index((r["dr"], r["seed"]))
        j = methods.index(_method_label(r))
        table[i, j] = float(r["top1"])
    if not np.all(np.isfinite(table)):
        msg = "rank test skipped: incomplete method x setting score table"
        print(msg)
        with open(rank_path, "w", encoding="utf-8") as fh:
            fh.write(msg + "\n")
        return EXIT_OK
    rank = experiments.friedman_iman_davenport(table, methods)
    print(rank.report())
    with open(rank_path, "w", encoding="utf-8") as fh:
        fh.write(rank.report() + "\n")
    return EXIT_OK


def cmd_gen_data(args):
    spec = data.SyntheticSpec(
        num_superclusters=args.superclusters,
        classes_per_supercluster=args.classes_per_supercluster,
        dim=args.dim, train_per_class=args.train_per_class,
        test_per_class=args.test_per_class, intra_spread=args.intra_spread,
        inter_spread=args.inter_spread, noise_sigma=args.noise_sigma,
        seed=args.seed)
    train, test, embeddings = data.generate_synthetic(spec)
    os.makedirs(args.out_dir, exist_ok=True)
    train_path = os.path.join(args.out_dir, "train.csv")
    test_path = os.path.join(args.out_dir, "test.csv")
    emb_path = os.path.join(args.out_dir, "embeddings.txt")
    data.save_dataset(train, train_path)
    data.save_dataset(test, test_path)
    with open(emb_path, "w", encoding="utf-8", newline="\n") as fh:
        for name, row in zip(embeddings.class_names, embeddings.vectors):
            fh.write(name + " " + " ".join(repr(float(x)) for x in row) + "\n")
    print(f"wrote {train_path} ({train.num_examples} rows), "
          f"{test_path} ({test.num_examples} rows), {emb_path}")
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(
        prog="lcl", description="label-similarity curriculum learning toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("build-sim", help="build a class-similarity matrix")
    p.add_argument("--kind", choices=["embedding", "attribute", "hierarchy"],
                   required=True)
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", dest="output", required=True)
    p.add_argument("--dim", type=int, default=None,
                   help="expected embedding dimension")
    p.add_argument("--no-clamp", action="store_true",
                   help="error on negative cosines instead of clamping to 0")
    p.add_argument("--decay", type=float, default=0.8)
    p.add_argument("--tol", type=float, default=1e-6)
    p.add_argument("--max-iter", type=int, default=100)
    p.set_defaults(func=cmd_build_sim)

    p = sub.add_parser("verify", help="check the curriculum axioms")
    p.add_argument("--sim", required=True, help="similarity CSV")
    p.add_argument("--epsilon", type=float, required=True)
    p.add_argument("--horizon", type=int, default=200)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("run", help="run an experiment suite from a config file")
    p.add_argument("config", help="key=value config file")
    p.add_argument("--out-dir", default=None)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--debug-verify-curriculum", action="store_true")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("report", help="aggregate raw CSVs and run the rank test")
    p.add_argument("raw", nargs="+", help="raw result CSV paths")
    p.add_argument("--out-dir", default=".")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("gen-data", help="generate the synthetic cluster task")
    p.add_argument("--superclusters", type=int, default=4)
    p.add_argument("--classes-per-supercluster", type=int, default=5)
    p.add_argument("--dim", type=int, default=32)
    p.add_argument("--train-per-class", type=int, default=50)
    p.add_argument("--test-per-class", type=int, default=50)
    p.add_argument("--intra-spread", type=float, default=1.0)
    p.add_argument("--inter-spread", type=float, default=4.0)
    p.add_argument("--noise-sigma", type=float, default=0.5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", default=".")
    p.set_defaults(func=cmd_gen_data)
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else EXIT_OK
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (similarity.SimilarityError, curriculum.CurriculumError,
            data.DataError, experiments.ExperimentError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
