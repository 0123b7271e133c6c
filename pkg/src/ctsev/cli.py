"""Command-line interface: ``ctsev <command> ...``.

Commands
--------
phantom    write a labelled synthetic corpus (scans, lung masks, manifest)
segment    infection masks and per-slice left/right rates for scans
featurize  80-column feature CSV from per-slice rate files
train      fit a classifier (or the three-member ensemble) on a feature CSV
predict    classify the rows of a feature CSV with a saved model
wam        weighted-average severity class from rate files
evaluate   confusion matrices and macro precision/recall/F1 for predictions

Exit codes: 0 success, 1 usage or parameter error, 2 data error, 3 internal
invariant violation.
"""
from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .classifiers import (build_ensemble, load_model, save_model, train_ert, train_gboost, train_knn, train_logreg,
                          train_svm)
from .config import THREADS_ENV, RunConfig, resolve
from .errors import (CtsevError, DegenerateHistogramError, EmptyScanError, GeometryError, InvalidParameterError,
                     InvariantViolation, ModelFormatError, PhantomSpecError, ScanLoadError)
from .evaluation import (evaluate, format_confusion, format_table, stratified_k_fold, write_confusion_csv,
                         write_metrics_csv, write_per_class_csv)
from .features import (feature_vector_from_rates, read_feature_csv, read_rates_csv,
                       retained_pairs, write_feature_csv, write_rates_csv)
from .imageio import IMAGE_SUFFIXES, write_mask
from .infection import process_scan
from .lung import ClassicalMaskSource, ExternalMaskSource, load_scan, natural_key
from .phantom import corpus_specs, write_corpus
from .wam import wam_from_pairs

log = logging.getLogger("ctsev")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_INVARIANT = 0, 1, 2, 3

RATES_SUFFIX = ".rates.csv"
MODEL_CHOICES = ("ensemble", "ert", "gboost", "svm", "knn", "logreg")


class UsageError(CtsevError):
    pass


# ---------------------------------------------------------------------------
# helpers


def _is_scan_dir(path: Path) -> bool:
    return any(p.suffix.lower() in IMAGE_SUFFIXES for p in path.iterdir() if p.is_file())


def expand_scan_dirs(paths) -> list[Path]:
    """Scan directories named directly, or every scan subdirectory of a root."""
    out = []
    for p in map(Path, paths):
        if not p.is_dir():
            raise ScanLoadError(f"scan directory not found: {p}")
        if _is_scan_dir(p):
            out.append(p)
        else:
            subs = sorted((d for d in p.iterdir() if d.is_dir()), key=lambda d: natural_key(d.name))
            if not subs:
                raise ScanLoadError(f"no slice images in {p}")
            out.extend(subs)
    return out


def expand_rate_files(paths) -> list[Path]:
    out = []
    for p in map(Path, paths):
        if p.is_dir():
            out.extend(sorted(p.glob(f"*{RATES_SUFFIX}"), key=lambda f: natural_key(f.name)))
        elif p.is_file():
            out.append(p)
        else:
            raise ScanLoadError(f"rates file not found: {p}")
    if not out:
        raise ScanLoadError("no rate files given")
    return out


def patient_id_of(rates_path: Path) -> str:
    name = rates_path.name
    return name[: -len(RATES_SUFFIX)] if name.endswith(RATES_SUFFIX) else rates_path.stem


def read_labels(path) -> dict[str, int]:
    """``patient_id -> label`` from any CSV with those two columns."""
    try:
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            if not reader.fieldnames or "patient_id" not in reader.fieldnames or "label" not in reader.fieldnames:
                raise ScanLoadError(f"{path}: needs patient_id and label columns")
            return {r["patient_id"]: int(r["label"]) for r in reader if r["label"] != ""}
    except (OSError, ValueError) as exc:
        raise ScanLoadError(f"cannot read labels from {path}: {exc}") from exc


def read_predictions(path) -> dict[str, int]:
    try:
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            if not reader.fieldnames or "predicted" not in reader.fieldnames:
                raise ScanLoadError(f"{path}: needs patient_id and predicted columns")
            return {r["patient_id"]: int(r["predicted"]) for r in reader}
    except (OSError, ValueError) as exc:
        raise ScanLoadError(f"cannot read predictions from {path}: {exc}") from exc


def read_ids(path) -> list[str]:
    """The ``patient_id`` column of any CSV."""
    try:
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            if not reader.fieldnames or "patient_id" not in reader.fieldnames:
                raise ScanLoadError(f"{path}: needs a patient_id column")
            return [r["patient_id"] for r in reader]
    except OSError as exc:
        raise ScanLoadError(f"cannot read patient ids from {path}: {exc}") from exc


def select_fold(y, cfg: RunConfig, fold, folds, part: str) -> np.ndarray:
    """Row indices of the training or test side of one stratified fold."""
    n = len(y) if y is not None else 0
    if fold is None:
        return np.arange(n)
    if y is None:
        raise UsageError("--fold needs a labelled feature CSV")
    if not 0 <= fold < folds:
        raise UsageError(f"--fold must lie in [0, {folds})")
    train, test = stratified_k_fold(y, folds, cfg["seed"])[fold]
    return train if part == "train" else test


def _out_dir_for(path: Path) -> Path:
    return path if path.suffix == "" else path.parent


# ---------------------------------------------------------------------------
# commands


def cmd_phantom(args, cfg: RunConfig) -> int:
    entries = corpus_specs(cfg["phantom.per_class"], seed=cfg["seed"],
                           n_slices=(cfg["phantom.slices_min"], cfg["phantom.slices_max"]),
                           size=cfg["phantom.size"], noise=cfg["phantom.noise"],
                           vessel_density=cfg["phantom.vessel_density"])
    out = Path(args.out)
    manifest = write_corpus(out, entries, threads=cfg["threads"])
    cfg.echo(out)
    print(f"wrote {len(entries)} phantom scans; manifest {manifest}")
    return EXIT_OK


def _mask_source(args, cfg: RunConfig, patient_id: str):
    if args.masks is None:
        if cfg["lung.source"] == "external":
            raise UsageError("lung.source=external needs --masks (or use --set lung.source=classical)")
        return ClassicalMaskSource(cfg["lung.air_cutoff"])
    root = Path(args.masks)
    per_patient = root / patient_id
    return ExternalMaskSource(per_patient if per_patient.is_dir() else root)


def cmd_segment(args, cfg: RunConfig) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.masks is not None:
        cfg.set("lung.source", "external")
    cfg.echo(out)
    gate, params = cfg.gate_params(), cfg.infection_params()
    for scan_dir in expand_scan_dirs(args.scans):
        scan = load_scan(scan_dir)
        source = _mask_source(args, cfg, scan.patient_id)
        debug = Path(args.debug_dir) / scan.patient_id if args.debug_dir else None
        results = process_scan(scan, source, gate, params, threads=cfg["threads"], debug_dir=debug)
        write_rates_csv(out / f"{scan.patient_id}{RATES_SUFFIX}", results)
        if args.write_masks:
            mdir = out / scan.patient_id
            mdir.mkdir(exist_ok=True)
            for r, name in zip(results, scan.names):
                write_mask(mdir / (Path(name).stem + ".png"), r.infection_mask)
        kept = sum(r.retained for r in results)
        log.info("%s: %d slices, %d retained", scan.patient_id, len(results), kept)
    return EXIT_OK


def cmd_featurize(args, cfg: RunConfig) -> int:
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    labels = read_labels(args.labels) if args.labels else None
    ids, rows, ys, excluded = [], [], [], []
    for path in expand_rate_files(args.rates):
        pid = patient_id_of(path)
        pairs = retained_pairs(read_rates_csv(path))
        if not pairs:
            excluded.append((pid, "no retained slices"))
            continue
        if labels is not None and pid not in labels:
            excluded.append((pid, "no label"))
            continue
        ids.append(pid)
        rows.append(feature_vector_from_rates(pairs))
        if labels is not None:
            ys.append(labels[pid])
    write_feature_csv(out, ids, np.array(rows).reshape(-1, 80), ys if labels is not None else None)
    excl_path = Path(args.exclusions) if args.exclusions else out.with_name(out.stem + ".exclusions.csv")
    with open(excl_path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["patient_id", "reason"])
        w.writerows(excluded)
    for pid, why in excluded:
        log.warning("excluded %s: %s", pid, why)
    cfg.echo(_out_dir_for(out))
    print(f"wrote {len(ids)} feature rows to {out}; {len(excluded)} excluded (see {excl_path})")
    return EXIT_OK


def train_named(kind: str, X, y, cfg: RunConfig):
    threads = cfg["threads"]
    if kind == "ert":
        return train_ert(X, y, cfg.ert_params(), threads=threads)
    if kind == "gboost":
        return train_gboost(X, y, cfg.gb_params())
    if kind == "svm":
        return train_svm(X, y, cfg.svm_params(), threads=threads)
    if kind == "knn":
        return train_knn(X, y, cfg["knn.k"])
    if kind == "logreg":
        return train_logreg(X, y, cfg.logreg_params())
    if kind == "ensemble":
        members = {k: train_named(k, X, y, cfg) for k in ("gboost", "ert", "svm")}
        return build_ensemble(members["gboost"], members["ert"], members["svm"], cfg.priority())
    raise UsageError(f"unknown model kind {kind!r}")


def cmd_train(args, cfg: RunConfig) -> int:
    ids, X, y = read_feature_csv(args.features)
    if y is None:
        raise ScanLoadError(f"{args.features} has no label column")
    rows = select_fold(y, cfg, args.fold, args.folds, "train")
    model = train_named(args.model, X[rows], y[rows], cfg)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    digest = save_model(model, out)
    cfg.echo(out.parent)
    print(f"trained {args.model} on {len(rows)} scans; {out} sha256={digest}")
    return EXIT_OK


def cmd_predict(args, cfg: RunConfig) -> int:
    model = load_model(args.model)
    ids, X, y = read_feature_csv(args.features)
    rows = select_fold(y, cfg, args.fold, args.folds, "test")
    Xs = X[rows]
    pred = model.predict(Xs)
    scores = model.predict_scores(Xs)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["patient_id", "predicted", "score_kind", "score_1", "score_2", "score_3", "score_4"])
        for i, r in enumerate(rows):
            w.writerow([ids[r], int(pred[i]), model.score_kind, *(repr(float(s)) for s in scores[i])])
    cfg.echo(_out_dir_for(out))
    print(f"wrote {len(rows)} predictions to {out}")
    return EXIT_OK


def cmd_wam(args, cfg: RunConfig) -> int:
    weights = cfg.wam_weights()
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    results = []
    for path in expand_rate_files(args.rates):
        pairs = retained_pairs(read_rates_csv(path))
        pid = patient_id_of(path)
        if not pairs:
            log.warning("excluded %s: no retained slices", pid)
            continue
        cls, score = wam_from_pairs(pairs, weights)
        results.append((pid, int(cls), score))
    with open(out, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["patient_id", "predicted", "wam_score"])
        for pid, cls, score in results:
            w.writerow([pid, cls, repr(float(score))])
    cfg.echo(_out_dir_for(out))
    print(f"wrote {len(results)} WAM classes to {out}")
    return EXIT_OK


def cmd_evaluate(args, cfg: RunConfig) -> int:
    labels = read_labels(args.labels)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    only = read_ids(args.ids) if args.ids else None
    reports, matrices = {}, {}
    for spec in args.predictions:
        name, _, path = spec.rpartition("=")
        name = name or Path(path).stem
        pred = read_predictions(path)
        if only is not None:
            absent = [pid for pid in only if pid not in pred]
            if absent:
                raise ScanLoadError(f"{path}: no prediction for {len(absent)} listed patients, e.g. {absent[0]}")
            pred = {pid: pred[pid] for pid in only}
        missing = [pid for pid in pred if pid not in labels]
        if missing:
            raise ScanLoadError(f"{path}: no label for {len(missing)} patients, e.g. {missing[0]}")
        pids = list(pred)
        cm, rep = evaluate([labels[p] for p in pids], [pred[p] for p in pids])
        reports[name], matrices[name] = rep, cm
        write_confusion_csv(out / f"confusion_{name}.csv", cm)
        write_per_class_csv(out / f"per_class_{name}.csv", rep)
    write_metrics_csv(out / "metrics.csv", reports)
    text = format_table(reports, verbose=args.verbose > 0)
    text += "".join("\n" + format_confusion(matrices[n], n) for n in matrices)
    (out / "metrics.txt").write_text(text)
    cfg.echo(out)
    print(text, end="")
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument parsing


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key=value configuration file")
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override one configuration key (repeatable)")
    common.add_argument("--seed", type=int, help="random seed (config key 'seed')")
    common.add_argument("--threads", type=int, help=f"worker cap; also read from ${THREADS_ENV}")
    common.add_argument("-v", "--verbose", action="count", default=0)
    common.add_argument("-q", "--quiet", action="store_true")

    parser = argparse.ArgumentParser(prog="ctsev", description="CT severity pipeline on 2-D slice stacks.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("phantom", parents=[common], help="generate a labelled phantom corpus")
    p.add_argument("--out", required=True, help="corpus root directory")
    p.add_argument("--per-class", type=int, help="scans per severity class (config phantom.per_class)")
    p.add_argument("--size", type=int, help="slice size in pixels (config phantom.size)")
    p.set_defaults(func=cmd_phantom)

    p = sub.add_parser("segment", parents=[common], help="segment infection and write per-slice rates")
    p.add_argument("scans", nargs="+", help="scan directories, or roots holding one directory per scan")
    p.add_argument("--out", required=True, help="output directory for <patient>.rates.csv files")
    p.add_argument("--masks", help="lung mask directory (or root with one subdirectory per patient)")
    p.add_argument("--write-masks", action="store_true", help="also write infection masks")
    p.add_argument("--debug-dir", help="write intermediate images per retained slice")
    p.set_defaults(func=cmd_segment)

    p = sub.add_parser("featurize", parents=[common], help="build the feature CSV from rate files")
    p.add_argument("rates", nargs="+", help="rate CSV files or directories holding them")
    p.add_argument("--out", required=True, help="feature CSV path")
    p.add_argument("--labels", help="CSV with patient_id and label columns (e.g. a phantom manifest)")
    p.add_argument("--exclusions", help="exclusions report path (default: next to --out)")
    p.set_defaults(func=cmd_featurize)

    for name, func, helptext in (("train", cmd_train, "train a model"),
                                 ("predict", cmd_predict, "predict with a saved model")):
        p = sub.add_parser(name, parents=[common], help=helptext)
        p.add_argument("features", help="feature CSV")
        p.add_argument("--out", required=True, help="model file" if name == "train" else "predictions CSV")
        if name == "train":
            p.add_argument("--model", choices=MODEL_CHOICES, default="ensemble")
        else:
            p.add_argument("--model", required=True, help="model file written by train")
        p.add_argument("--fold", type=int, help=("hold out this stratified fold" if name == "train"
                                                 else "predict only this stratified fold"))
        p.add_argument("--folds", type=int, default=4, help="number of stratified folds (default 4)")
        p.set_defaults(func=func)

    p = sub.add_parser("wam", parents=[common], help="weighted-average severity class from rate files")
    p.add_argument("rates", nargs="+", help="rate CSV files or directories holding them")
    p.add_argument("--out", required=True, help="output CSV (patient_id, predicted, wam_score)")
    p.set_defaults(func=cmd_wam)

    p = sub.add_parser("evaluate", parents=[common], help="metrics for one or more prediction files")
    p.add_argument("--labels", required=True, help="CSV with patient_id and label columns")
    p.add_argument("--predictions", nargs="+", required=True, metavar="[NAME=]CSV",
                   help="prediction CSVs; NAME defaults to the file stem")
    p.add_argument("--ids", help="CSV whose patient_id column restricts every prediction set, "
                                 "e.g. a predict output to compare on the same hold-out")
    p.add_argument("--out", required=True, help="report directory")
    p.set_defaults(func=cmd_evaluate)
    return parser


def _configure(args) -> RunConfig:
    pairs = list(args.set)
    if getattr(args, "per_class", None) is not None:
        pairs.append(f"phantom.per_class={args.per_class}")
    if getattr(args, "size", None) is not None:
        pairs.append(f"phantom.size={args.size}")
    return resolve(args.config, pairs, args.seed, args.threads)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    level = logging.WARNING if args.quiet else (logging.DEBUG if args.verbose > 1 else logging.INFO)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        cfg = _configure(args)
        return args.func(args, cfg)
    except InvariantViolation as exc:
        print(f"ctsev: internal invariant violated: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    except (UsageError, InvalidParameterError) as exc:
        print(f"ctsev: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ScanLoadError, GeometryError, EmptyScanError, ModelFormatError, PhantomSpecError,
            DegenerateHistogramError, OSError) as exc:
        print(f"ctsev: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
