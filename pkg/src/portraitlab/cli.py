"""Batch front-end: extraction, training, analysis, classification, reports.

Exit codes: 0 success, 2 configuration error, 3 data error. All artifacts are
deterministic for a fixed (config, inputs, seed).
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import comp, dataset, fuzzy, learn, portrait, quality
from .imgcore import DecodeError, decode_image

log = logging.getLogger("portraitlab")


class ConfigError(Exception):
    pass


class DataError(Exception):
    pass


def _parse_groups(spec: str) -> tuple[str, ...]:
    groups = tuple(g.strip() for g in spec.split(",") if g.strip())
    bad = [g for g in groups if g not in dataset.GROUPS]
    if bad:
        raise ConfigError(f"unknown feature groups: {bad}")
    return groups


def _load_aux_models(pairs: list[str]) -> dict[str, fuzzy.AuxModel]:
    models = {}
    for pair in pairs:
        if "=" not in pair:
            raise ConfigError(f"--aux-model expects kind=path, got {pair!r}")
        kind, path = pair.split("=", 1)
        if kind not in ("emotion", "originality", "memorability", "splicing"):
            raise ConfigError(f"unknown aux model kind: {kind}")
        try:
            models[kind] = fuzzy.load_aux_model(path)
        except (OSError, ValueError) as exc:
            raise DataError(f"cannot load aux model {kind}: {exc}") from exc
    return models


def _extract_one(entry, registry, groups, lighting_model, aux_models,
                 spectrum_ref, use_semantics):
    """Feature blocks for one manifest entry; raises on any failure."""
    img = decode_image(entry.image_path)
    blocks = {}
    if "compositional" in groups:
        blocks["compositional"] = comp.compositional_block(img, lighting_model)
    if "quality" in groups:
        blocks["quality"] = quality.quality_block(
            img, splicing_model=aux_models.get("splicing"))
    if "portrait" in groups:
        if not entry.annotation_path:
            raise DataError(f"{entry.id}: portrait features need an annotation")
        ann = portrait.load_annotation(entry.annotation_path)
        blocks["portrait"] = portrait.portrait_block(img, ann)
    if "semantics" in groups and use_semantics and entry.semantic_vector_path:
        blocks["semantics"] = dataset.load_semantic_vector(entry.semantic_vector_path)
    if "fuzzy" in groups:
        named = {}
        if "compositional" in blocks:
            comp_names = [n for g, n in registry.entries if g == "compositional"]
            named = dict(zip(comp_names, blocks["compositional"]))
        vec, warnings = fuzzy.fuzzy_block(
            named,
            {k: aux_models.get(k) for k in ("emotion", "originality", "memorability")},
            spectrum_ref, img)
        for wmsg in warnings:
            log.debug("%s: %s", entry.id, wmsg)
        blocks["fuzzy"] = vec
    return blocks


def cmd_extract(args) -> int:
    entries = dataset.load_manifest(args.manifest)
    if not entries:
        raise DataError("manifest is empty")
    groups = _parse_groups(args.groups)
    registry = dataset.build_registry()
    aux_models = _load_aux_models(args.aux_model)
    lighting_model = None
    if args.lighting_model:
        lighting_model = comp.load_lighting_model(args.lighting_model)

    spectrum_ref = None
    if "fuzzy" in groups:
        corpus = []
        for e in entries:
            try:
                corpus.append(decode_image(e.image_path))
            except (OSError, DecodeError):
                pass
        if not corpus:
            raise DataError("no decodable images for the spectrum reference")
        spectrum_ref = fuzzy.build_spectrum_reference(corpus)

    def work(entry):
        try:
            return entry, _extract_one(entry, registry, groups, lighting_model,
                                       aux_models, spectrum_ref,
                                       args.semantic_vectors), None
        except Exception as exc:  # failure policy: drop and log, never zero-fake
            return entry, None, exc

    if args.workers > 1:
        with ThreadPoolExecutor(max_workers=args.workers) as pool:
            results = list(pool.map(work, entries))
    else:
        results = [work(e) for e in entries]

    kept, blocks = [], {}
    diagnostics = []
    for entry, block, exc in results:  # commit rows in manifest order
        if exc is not None:
            diagnostics.append(f"{entry.id}: {exc}")
            log.warning("dropping %s: %s", entry.id, exc)
            continue
        kept.append(entry)
        blocks[entry.id] = block
    if not kept:
        raise DataError("no rows produced")

    matrix, scores, flags = dataset.assemble_matrix(kept, blocks, registry)
    os.makedirs(args.out, exist_ok=True)
    dataset.save_matrix(matrix, scores, os.path.join(args.out, "features.csv"))
    with open(os.path.join(args.out, "extract_diagnostics.txt"), "w") as f:
        for line in diagnostics + flags:
            f.write(line + "\n")
    print(f"extracted {matrix.n} rows x {matrix.d} features "
          f"({len(diagnostics)} dropped)")
    return 0


def cmd_train_lighting(args) -> int:
    entries = dataset.load_manifest(args.manifest)
    corpus = []
    for e in entries:
        try:
            corpus.append(decode_image(e.image_path))
        except (OSError, DecodeError) as exc:
            log.warning("skipping %s: %s", e.id, exc)
    if len(corpus) < comp.LIGHTING_CLUSTERS:
        raise DataError("need at least 5 decodable images to train the lighting model")
    model = comp.train_lighting_model(corpus, seed=args.seed)
    os.makedirs(args.out, exist_ok=True)
    out_path = os.path.join(args.out, "lighting_model.txt")
    comp.save_lighting_model(model, out_path)
    print(f"wrote {out_path}")
    return 0


def cmd_train_aux(args) -> int:
    os.makedirs(args.out, exist_ok=True)
    if args.kind == "splicing":
        entries = dataset.load_manifest(args.manifest)
        images = []
        for e in entries:
            try:
                images.append(decode_image(e.image_path))
            except (OSError, DecodeError) as exc:
                log.warning("skipping %s: %s", e.id, exc)
        if len(images) < 5:
            raise DataError("need at least 5 images to synthesize a splicing corpus")
        feats, labels = quality.make_splicing_corpus(images, seed=args.seed)
        registry = [f"spam_{i}" for i in range(feats.shape[1])]
        model = fuzzy.train_aux(feats, labels, "classifier", registry, seed=args.seed)
    else:
        if not args.labels:
            raise ConfigError("--labels is required for non-splicing aux models")
        matrix, _ = dataset.load_matrix(args.matrix)
        labels = np.array([float(l) for l in open(args.labels).read().split()])
        if labels.shape[0] != matrix.n:
            raise DataError("label count must match the feature matrix rows")
        comp_cols = [i for i, n in enumerate(matrix.registry)
                     if n.startswith("compositional:")]
        if not comp_cols:
            raise DataError("aux models consume the compositional block; none present")
        kind = "classifier" if args.kind == "emotion" else "regressor"
        model = fuzzy.train_aux(matrix.values[:, comp_cols], labels, kind,
                                [matrix.registry[i] for i in comp_cols],
                                seed=args.seed)
    out_path = os.path.join(args.out, f"aux_{args.kind}.json")
    fuzzy.save_aux_model(model, out_path)
    print(f"wrote {out_path}")
    return 0


def cmd_analyze(args) -> int:
    matrix, scores = dataset.load_matrix(args.matrix)
    os.makedirs(args.out, exist_ok=True)
    folds = learn.make_folds(matrix.ids, k=5, seed=args.seed)

    # (a) per-group Spearman over the fold plan
    group_rows = []
    for group in dataset.GROUPS:
        cols = [i for i, n in enumerate(matrix.registry) if n.startswith(group + ":")]
        if not cols:
            continue
        sub = learn.FeatureMatrix(registry=[matrix.registry[i] for i in cols],
                                  values=matrix.values[:, cols], ids=list(matrix.ids))
        mean, std = learn.group_correlation(sub, scores, folds,
                                            grid_size=args.grid_size)
        group_rows.append((group, mean, std))
    with open(os.path.join(args.out, "group_correlation.csv"), "w") as f:
        f.write("group,spearman_mean,spearman_std\n")
        for g, m, s in group_rows:
            f.write(f"{g},{m:.9g},{s:.9g}\n")

    # (b) LASSO entry order on all features
    std_matrix, st = learn.standardize(matrix)
    path = learn.lasso_path(std_matrix, scores, grid_size=args.grid_size)
    li = learn._select_lambda_cv(matrix.values, scores, matrix.registry,
                                 path.lambda_grid, seed=args.seed)
    coefs = path.coefficients[li]
    order = [(int(path.entry_order[j]), -abs(coefs[j]), j)
             for j in range(matrix.d) if path.entry_order[j] >= 0]
    order.sort()
    with open(os.path.join(args.out, "lasso_ranking.csv"), "w") as f:
        f.write("rank,feature,entry_index,weight\n")
        for rank, (ei, _, j) in enumerate(order, 1):
            f.write(f"{rank},{matrix.registry[j]},{ei},{coefs[j]:.9g}\n")

    # (c) per-feature Spearman averaged over the 5 test partitions
    part = folds.partition(matrix.ids)
    with open(os.path.join(args.out, "feature_correlation.csv"), "w") as f:
        f.write("feature,spearman_mean,spearman_std\n")
        for j, name in enumerate(matrix.registry):
            rhos = []
            for p in range(5):
                mask = part == p
                if mask.sum() >= 2:
                    rhos.append(learn.spearman(matrix.values[mask, j], scores[mask]))
            rhos = np.array(rhos)
            f.write(f"{name},{rhos.mean():.9g},{rhos.std(ddof=1):.9g}\n")

    # (d) correlation vs active-feature-count curve over the lambda grid
    curve = _correlation_curve(matrix, scores, folds, args.grid_size)
    with open(os.path.join(args.out, "correlation_curve.csv"), "w") as f:
        f.write("active_features_mean,spearman_mean\n")
        for nact, rho in curve:
            f.write(f"{nact:.9g},{rho:.9g}\n")
    print(f"analysis written to {args.out}")
    return 0


def _correlation_curve(matrix, scores, folds, grid_size):
    part = folds.partition(matrix.ids)
    k = int(part.max()) + 1
    per_fold = []
    grid = None
    for f_idx in range(k):
        tr = part != f_idx
        te = ~tr
        st = learn.fit_standardization(matrix.values[tr])
        fm = learn.FeatureMatrix(registry=list(matrix.registry),
                                 values=st.apply(matrix.values[tr]),
                                 ids=[str(i) for i in range(int(tr.sum()))])
        path = learn.lasso_path(fm, scores[tr], grid_size=grid_size,
                                lambda_grid=grid)
        if grid is None:
            grid = path.lambda_grid
        preds = st.apply(matrix.values[te]) @ path.coefficients.T + path.intercepts
        rhos = [learn.spearman(preds[:, li], scores[te]) for li in range(len(grid))]
        nact = (path.coefficients != 0).sum(axis=1)
        per_fold.append((np.array(nact), np.array(rhos)))
    nact_mean = np.mean([nf for nf, _ in per_fold], axis=0)
    rho_mean = np.mean([rf for _, rf in per_fold], axis=0)
    return list(zip(nact_mean, rho_mean))


def cmd_classify(args) -> int:
    matrix, scores = dataset.load_matrix(args.matrix)
    os.makedirs(args.out, exist_ok=True)
    labels = np.where(scores > (args.threshold if args.threshold is not None
                                else scores.mean()), 1.0, -1.0)
    threshold = args.threshold if args.threshold is not None else float(scores.mean())
    folds = learn.make_folds(matrix.ids, k=5, seed=args.seed)
    part = folds.partition(matrix.ids)

    c_grid = learn.DEFAULT_C_GRID
    if args.c_grid:
        c_grid = tuple(float(c) for c in args.c_grid.split(","))

    fold_rows = []
    for f_idx in range(5):
        test = part == f_idx
        train = dataset.delta_filter(scores, threshold, args.delta, ~test)
        if len(set(labels[train])) < 2:
            raise DataError(f"fold {f_idx}: training labels are single-class")
        st = learn.fit_standardization(matrix.values[train])
        model = learn.svm_train_cv(st.apply(matrix.values[train]), labels[train],
                                   kernel="rbf", c_grid=c_grid, cv=10,
                                   seed=args.seed, standardization=None)
        pred, _ = learn.svm_predict(model, st.apply(matrix.values[test]))
        truth = labels[test]
        acc = float((pred == truth).mean())
        tp = int(((pred == 1) & (truth == 1)).sum())
        tn = int(((pred == -1) & (truth == -1)).sum())
        fp = int(((pred == 1) & (truth == -1)).sum())
        fn = int(((pred == -1) & (truth == 1)).sum())
        fold_rows.append((f_idx, acc, model.C, tp, tn, fp, fn))

    accs = np.array([r[1] for r in fold_rows])
    with open(os.path.join(args.out, "classification.csv"), "w") as f:
        f.write("fold,accuracy,C,tp,tn,fp,fn\n")
        for row in fold_rows:
            f.write(f"{row[0]},{row[1]:.9g},{row[2]:.9g},{row[3]},{row[4]},{row[5]},{row[6]}\n")
        f.write(f"mean,{accs.mean():.9g},,,,,\n")
        f.write(f"std,{accs.std(ddof=1):.9g},,,,,\n")
    print(f"mean accuracy {accs.mean():.4f} +/- {accs.std(ddof=1):.4f} "
          f"(delta={args.delta}, threshold={threshold:.4g})")
    return 0


def cmd_report(args) -> int:
    expected = ["group_correlation.csv", "lasso_ranking.csv",
                "feature_correlation.csv", "correlation_curve.csv"]
    available = [n for n in expected if os.path.exists(os.path.join(args.analysis, n))]
    if not available:
        raise DataError(f"no analysis outputs found in {args.analysis}")
    os.makedirs(args.out, exist_ok=True)
    lines = ["# Portrait aesthetics analysis report", ""]
    for name in available:
        lines.append(f"## {name}")
        lines.append("")
        with open(os.path.join(args.analysis, name)) as f:
            rows = [r.rstrip("\n").split(",") for r in f if r.strip()]
        header, body = rows[0], rows[1:]
        lines.append("| " + " | ".join(header) + " |")
        lines.append("|" + "---|" * len(header))
        for r in body[:50]:
            lines.append("| " + " | ".join(r) + " |")
        if len(body) > 50:
            lines.append(f"| ... {len(body) - 50} more rows ... |")
        lines.append("")
    report_path = os.path.join(args.out, "report.md")
    with open(report_path, "w") as f:
        f.write("\n".join(lines) + "\n")
    # plot data files: x,y columns for the curve
    curve_src = os.path.join(args.analysis, "correlation_curve.csv")
    if os.path.exists(curve_src):
        with open(curve_src) as f, \
                open(os.path.join(args.out, "correlation_curve.dat"), "w") as out:
            next(f)
            for line in f:
                out.write(line.replace(",", " "))
    print(f"wrote {report_path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="portraitlab",
                                description="Portrait aesthetics pipeline")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, manifest=False, matrix=False):
        sp.add_argument("--out", required=True)
        sp.add_argument("--seed", type=int, required=True)
        if manifest:
            sp.add_argument("--manifest", required=True)
        if matrix:
            sp.add_argument("--matrix", required=True)

    sp = sub.add_parser("extract", help="extract the feature matrix")
    common(sp, manifest=True)
    sp.add_argument("--workers", type=int, default=1)
    sp.add_argument("--groups", default=",".join(dataset.GROUPS))
    sp.add_argument("--lighting-model")
    sp.add_argument("--aux-model", action="append", default=[],
                    metavar="KIND=PATH")
    sp.add_argument("--semantic-vectors", action="store_true",
                    help="ingest per-entry semantic vector files")
    sp.set_defaults(func=cmd_extract)

    sp = sub.add_parser("train-lighting", help="train the lighting pattern model")
    common(sp, manifest=True)
    sp.set_defaults(func=cmd_train_lighting)

    sp = sub.add_parser("train-aux", help="train an auxiliary model")
    common(sp, manifest=False)
    sp.add_argument("--kind", required=True,
                    choices=["emotion", "originality", "memorability", "splicing"])
    sp.add_argument("--manifest", help="image manifest (splicing kind)")
    sp.add_argument("--matrix", help="feature matrix CSV (other kinds)")
    sp.add_argument("--labels", help="whitespace-separated label file")
    sp.set_defaults(func=cmd_train_aux)

    sp = sub.add_parser("analyze", help="feature importance analysis")
    common(sp, matrix=True)
    sp.add_argument("--grid-size", type=int, default=100)
    sp.set_defaults(func=cmd_analyze)

    sp = sub.add_parser("classify", help="5-fold SVM classification")
    common(sp, matrix=True)
    sp.add_argument("--delta", type=float, default=0.0)
    sp.add_argument("--threshold", type=float)
    sp.add_argument("--c-grid", help="comma-separated C values")
    sp.set_defaults(func=cmd_classify)

    sp = sub.add_parser("report", help="render analysis outputs")
    sp.add_argument("--analysis", required=True)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code not in (0, None) else 0
    try:
        if getattr(args, "command", None) == "train-aux" and args.kind == "splicing" \
                and not args.manifest:
            raise ConfigError("--manifest is required for splicing models")
        if getattr(args, "command", None) == "train-aux" and args.kind != "splicing" \
                and not args.matrix:
            raise ConfigError("--matrix is required for this aux model kind")
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (DataError, DecodeError, OSError, ValueError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
