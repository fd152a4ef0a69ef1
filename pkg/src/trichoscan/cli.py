"""Command-line interface.

Subcommands: analyze, synth, train-eval, sweep, appendix, stats. Report paths
write JSON/CSV plus rendered PNG figures (disable with --no-figures). Exit
codes: 0 success, 1 internal error, 2 input/detection error.
"""

from __future__ import annotations

import argparse
import json
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .image import GrayImage
from .metadata import ExifError, load_pgm, save_pgm, load_capture_meta
from .fiducial import FiducialError, PaperLayout, generate_dictionary
from .imaging import ImagingError
from .density import DensityError
from .synth import SynthError, SceneParams, render_scene, appendix_study
from .stats import (StatsError, kruskal_wallis, mann_whitney_bonferroni,
                    vif, stratified_ols)
from .pipeline import analyze_scene
from .ml import (DatasetError, PreprocessError, GbdtError, MetricsError,
                 PipelineError, read_dataset_csv, GbdtParams,
                 loocv_classify, loocv_regress, sweep as run_sweep)
from .ml.dataset import SampleRecord, append_dataset_row, CLASSIFY_FEATURES
from .ml.metrics import roc_points, pr_points, confusion_matrix
from .ml.pipeline import even_thresholds
from .reporting import write_json_report, write_csv
from . import plots

INPUT_ERRORS = (ExifError, FiducialError, ImagingError, DensityError, SynthError,
                StatsError, DatasetError, PreprocessError, GbdtError, MetricsError,
                PipelineError, FileNotFoundError)


def _outdir(args) -> Path:
    out = Path(args.outdir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _layout(args) -> PaperLayout:
    if args.layout:
        return PaperLayout.from_json(args.layout)
    return PaperLayout()


def cmd_analyze(args) -> int:
    out = _outdir(args)
    layout = _layout(args)
    dictionary = generate_dictionary(args.marker_seed)
    config = {"layout": layout.__dict__, "marker_seed": args.marker_seed,
              "nnd_px": args.nnd_px}

    def one(path_str):
        path = Path(path_str)
        img = load_pgm(path)
        meta = load_capture_meta(path)
        sink = None
        if args.dump_stages:
            def sink(name, stage_img, _stem=path.stem):
                save_pgm(stage_img, out / f"{_stem}.stage.{name}.pgm")
        result = analyze_scene(img, meta, layout, dictionary, stage_sink=sink)
        return path, result

    paths = list(args.images)
    if args.workers > 1 and len(paths) > 1:
        with ThreadPoolExecutor(max_workers=args.workers) as pool:
            results = list(pool.map(one, paths))
    else:
        results = [one(p) for p in paths]

    for path, result in results:
        record = result.record_dict()
        report = dict(record)
        report["image"] = path.name
        report["marker_threshold"] = result.marker_threshold
        report["trichome_threshold"] = result.trichome_threshold
        report["n_rejected"] = result.trichomes.n_rejected
        report["fences_applied"] = result.trichomes.fences_applied
        write_json_report(out / f"{path.stem}.analysis.json", report,
                          seed=args.seed, config=config)
        print(f"{path.name}: nnd_mm={record['nnd_mm']:.4f} "
              f"n_points={record['n_points']} opening_px={record['opening_px']:.1f}")
        if args.append:
            if args.nitrate_ppm is None:
                raise DatasetError("--append requires --nitrate-ppm")
            nnd_feature = record["nnd_px"] if args.nnd_px else record["nnd_mm"]
            append_dataset_row(args.append, SampleRecord(
                plant_id=args.plant_id, compound_leaf_id=args.compound_leaf_id,
                leaflet_id=args.leaflet_id, nnd_mm=nnd_feature,
                resolution_px=float(record["resolution"]),
                exposure_time_s=record["exposure_time"], iso=float(record["iso"]),
                nitrate_ppm=args.nitrate_ppm))
    return 0


def cmd_synth(args) -> int:
    out = _outdir(args)
    layout = _layout(args)
    base = SceneParams(
        lam=args.lam, tilt_h=args.tilt_h, tilt_v=args.tilt_v,
        distance_mm=args.distance_mm, illum_gradient=args.illum_gradient,
        noise_sigma=args.noise_sigma, seed=args.seed, layout=layout,
        marker_seed=args.marker_seed)
    names = (["scene"] if args.count == 1
             else [f"scene_{i:03d}" for i in range(args.count)])
    rng = np.random.default_rng(args.seed)
    for i, name in enumerate(names):
        params = base if args.count == 1 else replace(
            base,
            seed=args.seed + i,
            tilt_h=float(rng.uniform(-12.52, 10.62)) if args.sample_poses else base.tilt_h,
            tilt_v=float(rng.uniform(-9.04, 8.13)) if args.sample_poses else base.tilt_v,
            distance_mm=float(rng.uniform(79.0, 218.0)) if args.sample_poses else base.distance_mm,
        )
        img, exif_blob, truth = render_scene(params)
        save_pgm(img, out / f"{name}.pgm")
        (out / f"{name}.exif").write_bytes(exif_blob)
        write_json_report(out / f"{name}.truth.json", truth.to_json_dict(),
                          seed=params.seed, config={"params": str(params)})
        print(f"{name}: {img.width}x{img.height}, {len(truth.points_mm)} points, "
              f"true_nnd_mm={truth.true_nnd_mm}")
    return 0


def _resolve_threshold(spec_str, ds):
    if spec_str == "q3":
        leaf_vals = np.array(sorted(set(ds.leaf_nitrate().values())))
        return float(np.percentile(leaf_vals, 75.0))
    return float(spec_str)


def cmd_train_eval(args) -> int:
    out = _outdir(args)
    ds = read_dataset_csv(args.dataset)
    params = GbdtParams(min_samples_leaf=args.min_samples_leaf)
    if args.mode == "classify":
        threshold = _resolve_threshold(args.threshold, ds)
        config = {"mode": "classify", "threshold": threshold,
                  "n_images": args.n_images, "positive_below": args.positive_below,
                  "min_samples_leaf": args.min_samples_leaf}
        res = loocv_classify(ds, threshold, n_images=args.n_images, seed=args.seed,
                             positive_below=args.positive_below, gbdt_params=params,
                             collect_shap=True, track_learning_curve=True)
        write_json_report(out / "metrics.json", {
            "threshold_ppm": threshold,
            "n_images": args.n_images,
            "metrics": res.metrics,
            "n_folds": len(res.folds),
            "skipped_groups": list(res.skipped),
        }, seed=args.seed, config=config)
        y = res.truths()
        probs = res.probs()
        preds = np.array([f.label_pred for f in res.folds])
        cm = confusion_matrix(y, preds)
        write_csv(out / "confusion.csv", ["", "pred_0", "pred_1"],
                  [["true_0", int(cm[0, 0]), int(cm[0, 1])],
                   ["true_1", int(cm[1, 0]), int(cm[1, 1])]])
        rocp = roc_points(y, probs)
        prp = pr_points(y, probs)
        write_csv(out / "roc_points.csv", ["fpr", "tpr", "threshold"], rocp)
        write_csv(out / "pr_points.csv", ["recall", "precision", "threshold"], prp)
        write_csv(out / "shap_summary.csv", ["feature", "mean_abs_contribution"],
                  list(zip(CLASSIFY_FEATURES, res.shap_mean_abs)))
        write_csv(out / "learning_curve.csv", ["round", "train_pr_auc"],
                  [(i + 1, v) for i, v in enumerate(res.learning_curve)])
        if not args.no_figures:
            plots.save_roc_curve(rocp, out / "roc.png", res.metrics["roc_auc"])
            plots.save_pr_curve(prp, out / "pr.png", res.metrics["pr_auc"])
            plots.save_confusion_matrix(cm, out / "confusion.png")
            plots.save_shap_summary(CLASSIFY_FEATURES, res.shap_mean_abs,
                                    out / "shap_summary.png")
            plots.save_learning_curve(res.learning_curve, out / "learning_curve.png")
        m = res.metrics
        print(f"classify: threshold={threshold:.1f} ppm, n_images={args.n_images}, "
              f"precision={m['precision']:.3f} recall={m['recall']:.3f} "
              f"f1={m['f1']:.3f} roc_auc={m['roc_auc']:.3f} pr_auc={m['pr_auc']:.3f}")
    else:
        config = {"mode": "regress", "min_samples_leaf": args.min_samples_leaf}
        res = loocv_regress(ds, seed=args.seed, gbdt_params=params)
        write_json_report(out / "metrics.json", {
            "rmse": res.rmse, "r2": res.r2, "pearson_r": res.pearson_r,
            "n_folds": res.n_folds, "skipped_groups": list(res.skipped),
        }, seed=args.seed, config=config)
        write_csv(out / "predictions.csv", ["observed_nnd_mm", "predicted_nnd_mm"],
                  list(zip(res.truths, res.predictions)))
        if not args.no_figures:
            plots.save_regression_scatter(res.truths, res.predictions,
                                          out / "regression_scatter.png")
        print(f"regress: rmse={res.rmse:.4f} r2={res.r2:.3f} r={res.pearson_r:.3f}")
    return 0


def cmd_sweep(args) -> int:
    out = _outdir(args)
    ds = read_dataset_csv(args.dataset)
    if args.thresholds:
        thresholds = [float(t) for t in args.thresholds.split(",")]
    else:
        lo, hi = (float(v) for v in args.threshold_range.split(":"))
        thresholds = even_thresholds(lo, hi, args.n_thresholds)
    n_images_list = [int(v) for v in args.n_images.split(",")]
    params = GbdtParams(min_samples_leaf=args.min_samples_leaf)
    config = {"thresholds": thresholds, "n_images": n_images_list,
              "positive_below": args.positive_below,
              "min_samples_leaf": args.min_samples_leaf}
    report = run_sweep(ds, thresholds, n_images_list, seed=args.seed,
                       positive_below=args.positive_below, gbdt_params=params)
    rows = []
    for c in report.cells:
        if c.degenerate:
            rows.append([c.threshold_ppm, c.n_images, "", "", "", "", "", 1, c.reason])
        else:
            m = c.metrics
            rows.append([c.threshold_ppm, c.n_images, m["precision"], m["recall"],
                         m["f1"], m["roc_auc"], m["pr_auc"], 0, ""])
    write_csv(out / "sweep.csv",
              ["threshold_ppm", "n_images", "precision", "recall", "f1",
               "roc_auc", "pr_auc", "degenerate", "reason"], rows)
    write_json_report(out / "sweep.json", {
        "mroc": {str(k): v for k, v in report.mroc.items()},
        "mpr": {str(k): v for k, v in report.mpr.items()},
        "n_degenerate": report.n_degenerate,
        "thresholds": thresholds,
        "n_images": n_images_list,
    }, seed=args.seed, config=config)
    if not args.no_figures:
        for key, name in (("roc_auc", "sweep_roc.png"), ("pr_auc", "sweep_pr.png")):
            grid = [[(report.cell(t, n).metrics or {}).get(key, np.nan)
                     if not report.cell(t, n).degenerate else np.nan
                     for t in thresholds] for n in n_images_list]
            plots.save_sweep_heatmap(thresholds, n_images_list, grid,
                                     out / name, key.replace("_", "-").upper())
    for n in n_images_list:
        print(f"n_images={n}: mROC={report.mroc[n]} mPR={report.mpr[n]}")
    return 0


def cmd_appendix(args) -> int:
    out = _outdir(args)
    report = appendix_study(lam=args.lam, replicates=args.replicates,
                            seed=args.seed, damage=not args.no_damage)
    write_csv(out / "appendix.csv",
              ["replicate", "n_before", "n_after", "nnd_before", "nnd_after",
               "rate_count", "rate_nnd"],
              [[r.replicate, r.n_before, r.n_after, r.nnd_before, r.nnd_after,
                r.rate_count, r.rate_nnd] for r in report.rows])
    write_json_report(out / "appendix.json", report.summary_dict(),
                      seed=args.seed,
                      config={"lambda": args.lam, "replicates": args.replicates,
                              "damage": not args.no_damage})
    if not args.no_figures:
        plots.save_change_rate_comparison(
            [r.rate_count for r in report.rows],
            [r.rate_nnd for r in report.rows], out / "change_rates.png")
        from .synth import poisson_points
        example = poisson_points(args.lam, (0, 0, 1000, 1000), args.seed)
        plots.save_point_damage_example(example, out / "points_example.png")
    print(f"appendix: median count rate={report.median_rate_count:.4f} "
          f"median nnd rate={report.median_rate_nnd:.4f} p={report.p_value}")
    return 0


def cmd_stats(args) -> int:
    out = _outdir(args)
    ds = read_dataset_csv(args.dataset)
    payload = {}
    levels = sorted(set(v for v in ds.column(args.group_column) if v)) \
        if args.group_column in ("fertilizer_level",) else []
    if levels and len(levels) >= 2:
        leaf_vals = {}
        for r in ds.records:
            leaf_vals[r.compound_leaf_id] = (getattr(r, args.group_column), r.nitrate_ppm)
        groups = {lvl: [v for g, v in leaf_vals.values() if g == lvl] for lvl in levels}
        samples = [np.array(groups[lvl]) for lvl in levels]
        if all(len(s) >= 2 for s in samples) and len(levels) >= 2:
            if len(levels) >= 2:
                kw = kruskal_wallis(samples) if len(levels) >= 2 else None
                payload["kruskal_wallis"] = {
                    "h": kw.statistic, "p": kw.p_value,
                    "groups": {lvl: len(groups[lvl]) for lvl in levels}}
            pairs = []
            names = []
            for i in range(len(levels)):
                for j in range(i + 1, len(levels)):
                    pairs.append((samples[i], samples[j]))
                    names.append(f"{levels[i]} vs {levels[j]}")
            adjusted = mann_whitney_bonferroni(pairs)
            payload["pairwise_mann_whitney"] = [
                {"pair": name, "u": r.statistic, "p": r.p_value, "adjusted_p": ap}
                for name, (r, ap) in zip(names, adjusted)]
        else:
            payload["group_tests"] = "skipped: groups too small"
    else:
        payload["group_tests"] = f"skipped: no usable {args.group_column} column"

    tables = []
    if args.include_iso in ("both", "with"):
        feats = ["nnd_mm", "resolution_px", "exposure_time_s", "iso"]
        vals, flags = vif(ds.features(feats))
        payload["vif_with_iso"] = {f: {"vif": float(v), "capped": bool(fl)}
                                   for f, v, fl in zip(feats, vals, flags)}
        tables.append(("with ISO", feats, list(vals)))
    if args.include_iso in ("both", "without"):
        feats = ["nnd_mm", "resolution_px", "exposure_time_s"]
        vals, flags = vif(ds.features(feats))
        payload["vif_without_iso"] = {f: {"vif": float(v), "capped": bool(fl)}
                                      for f, v, fl in zip(feats, vals, flags)}
        tables.append(("without ISO", feats, list(vals)))
    payload["stratified_ols"] = stratified_ols(
        ds.column("nitrate_ppm"), ds.column("nnd_mm"), ds.column("resolution_px"))
    write_json_report(out / "stats.json", payload, seed=args.seed,
                      config={"group_column": args.group_column,
                              "include_iso": args.include_iso})
    if not args.no_figures and tables:
        plots.save_vif_bars(tables, out / "vif.png")
    print("stats report written:", out / "stats.json")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="trichoscan",
        description="Trichome density measurement and fertilization analysis. "
                    "Scene files are <name>.pgm plus <name>.exif (raw TIFF blob) "
                    "or <name>.meta.json (exposure_time_s, iso, width, height).")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--outdir", default=".", help="output directory")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--no-figures", action="store_true",
                       help="skip PNG figure rendering")
        p.add_argument("--layout", default=None,
                       help="paper layout JSON (marker_side_mm, paper_side_mm, "
                            "opening_side_mm, marker_margin_mm)")
        p.add_argument("--marker-seed", type=int, default=0,
                       help="marker dictionary seed")

    p = sub.add_parser("analyze", help="measure trichome density in images")
    common(p)
    p.add_argument("images", nargs="+", help="input .pgm images")
    p.add_argument("--append", default=None, metavar="CSV",
                   help="append a dataset row per image")
    p.add_argument("--plant-id", default="plant0")
    p.add_argument("--compound-leaf-id", default="leaf0")
    p.add_argument("--leaflet-id", default="leaflet0")
    p.add_argument("--nitrate-ppm", type=float, default=None)
    p.add_argument("--nnd-px", action="store_true",
                   help="store the NND feature in pixels instead of mm")
    p.add_argument("--dump-stages", action="store_true",
                   help="write intermediate stage images as PGM")
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("synth", help="render synthetic ground-truth scenes")
    common(p)
    p.add_argument("--lambda", dest="lam", type=float, default=150.0)
    p.add_argument("--tilt-h", type=float, default=0.0)
    p.add_argument("--tilt-v", type=float, default=0.0)
    p.add_argument("--distance-mm", type=float, default=140.0)
    p.add_argument("--illum-gradient", type=float, default=0.2)
    p.add_argument("--noise-sigma", type=float, default=2.0)
    p.add_argument("--count", type=int, default=1, help="number of scenes")
    p.add_argument("--sample-poses", action="store_true",
                   help="draw tilt/distance per scene from the capture envelope")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train-eval", help="train and evaluate on a dataset CSV")
    common(p)
    p.add_argument("dataset")
    p.add_argument("--mode", choices=("classify", "regress"), default="classify")
    p.add_argument("--threshold", default="q3",
                   help="nitrate threshold in ppm, or 'q3' for the third "
                        "quartile of per-leaf values")
    p.add_argument("--n-images", type=int, default=25)
    p.add_argument("--positive-below", action="store_true",
                   help="flip label polarity (positive = below threshold)")
    p.add_argument("--min-samples-leaf", type=int, default=20)
    p.set_defaults(func=cmd_train_eval)

    p = sub.add_parser("sweep", help="threshold x n_images evaluation grid")
    common(p)
    p.add_argument("dataset")
    p.add_argument("--threshold-range", default="1600:1900",
                   help="LO:HI ppm range for evenly spaced thresholds")
    p.add_argument("--n-thresholds", type=int, default=10)
    p.add_argument("--thresholds", default=None,
                   help="explicit comma-separated thresholds (overrides range)")
    p.add_argument("--n-images", default="1,5,25",
                   help="comma-separated measurement counts")
    p.add_argument("--positive-below", action="store_true")
    p.add_argument("--min-samples-leaf", type=int, default=20)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("appendix", help="NND-vs-count damage robustness study")
    common(p)
    p.add_argument("--lambda", dest="lam", type=float, default=1000.0)
    p.add_argument("--replicates", type=int, default=200)
    p.add_argument("--no-damage", action="store_true",
                   help="control run without the half-plane damage")
    p.set_defaults(func=cmd_appendix)

    p = sub.add_parser("stats", help="nonparametric tests and VIF diagnostics")
    common(p)
    p.add_argument("dataset")
    p.add_argument("--group-column", default="fertilizer_level")
    p.add_argument("--include-iso", choices=("both", "with", "without"),
                   default="both", help="which VIF tables to compute")
    p.set_defaults(func=cmd_stats)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    # config file provides flag defaults; explicit flags override
    argv = list(sys.argv[1:] if argv is None else argv)
    if "--config" in argv:
        i = argv.index("--config")
        config_path = argv[i + 1]
        del argv[i:i + 2]
        defaults = json.loads(Path(config_path).read_text())
        for action in parser._subparsers._group_actions[0].choices.values():
            action.set_defaults(**{k: v for k, v in defaults.items()
                                   if any(a.dest == k for a in action._actions)})
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except INPUT_ERRORS as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except Exception as e:  # noqa: BLE001 - CLI boundary
        print(f"internal error: {type(e).__name__}: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
