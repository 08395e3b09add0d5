"""The ``xplain`` command line.

Subcommands: scan, split, train, evaluate, grid, explain, compare-xai.
Exit codes: 0 success, 2 config error, 3 data error, 4 runtime error,
5 gradients unavailable (activation maps against a remote model).

Every writing command takes ``--out`` and never writes outside it; each
output directory gets exactly one run manifest, and pointing the same
command at that manifest (``--config manifest.json``) replays the run.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__, config as cfgmod, dataset, imaging
from .errors import (
    ConfigError,
    DataError,
    GradientsUnavailable,
    XplainError,
)
from .evalbench import evaluate
from .explain import (
    comparison_sheet,
    grad_cam,
    kernel_shap,
    lime_explain,
    render,
    render_array,
    segment_superpixels,
)
from .figures import history_figure
from .gateway import ENV_MODEL_URL, native_handle, remote_handle
from .grids import run_grid
from .manifest import now_iso, write_manifest
from .nnet import (
    OptimizerSpec,
    build_desknet,
    load_checkpoint,
    save_checkpoint,
    source_from_partition,
    train,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_RUNTIME = 4
EXIT_NO_GRADIENTS = 5


def _add_config_flags(p: argparse.ArgumentParser, with_training: bool = True):
    p.add_argument("--config", help="YAML config file or a previous run manifest")
    p.add_argument("--data", help="corpus root: one folder per class")
    p.add_argument("--seed", type=int, default=None, help="run seed (default $XPLAIN_SEED or 0)")
    p.add_argument("--split-seed", type=int, default=None, dest="split_seed")
    p.add_argument("--balanced", action="store_const", const=True, default=None,
                   help="truncate train lists to the smallest class")
    p.add_argument("--batch-size", type=int, default=None, dest="batch_size")
    p.add_argument("--resize", type=int, default=None, help="pre-crop resize (square)")
    p.add_argument("--crop", type=int, default=None, help="center-crop size (square)")
    if with_training:
        p.add_argument("--head-version", type=int, default=None, dest="head_version",
                       help="classifier head variant 0..8 (0 = plain softmax)")
        p.add_argument("--lr", type=float, default=None)
        p.add_argument("--optimizer", choices=("sgd", "adam"), default=None)
        p.add_argument("--epochs", type=int, default=None)
        p.add_argument("--augmentation", choices=("none", "aug1", "aug2"), default=None)


def _resolved(args, with_training: bool = True) -> dict:
    file_cfg = cfgmod.load_config_file(args.config) if args.config else {}
    keys = ["data", "seed", "split_seed", "balanced", "batch_size", "resize", "crop"]
    if with_training:
        keys += ["head_version", "lr", "optimizer", "epochs", "augmentation"]
    overrides = {k: getattr(args, k, None) for k in keys}
    return cfgmod.resolve_config(file_cfg, overrides)


def _require_out(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _scan(root) -> dataset.LabeledCorpus:
    if not root:
        raise ConfigError("no dataset root configured (--data)")
    if not Path(root).is_dir():
        raise DataError(f"dataset root {root} does not exist")
    return dataset.scan_corpus(root)


# --- scan / split -----------------------------------------------------------


def cmd_scan(args) -> int:
    corpus = _scan(args.data)
    summary = {
        "root": str(args.data),
        "classes": corpus.classes,
        "counts": corpus.counts,
        "total": len(corpus.items),
    }
    print(json.dumps(summary, indent=2, sort_keys=True))
    if args.out:
        started = now_iso()
        out = _require_out(args)
        path = out / "corpus.json"
        path.write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
        write_manifest(out, "scan", {"data": str(args.data)}, {}, [path], started)
    return EXIT_OK


def cmd_split(args) -> int:
    started = now_iso()
    cfg = _resolved(args, with_training=False)
    corpus = _scan(cfg["data"])
    plan = dataset.make_split(corpus, cfg["split_seed"], cfg["balanced"])
    out = _require_out(args)
    path = out / "split.json"
    dataset.save_split_manifest(path, corpus, plan)
    write_manifest(out, "split", cfg,
                   {"split_seed": cfg["split_seed"]}, [path], started)
    print(f"split written to {path}: train={len(plan.train)} val={len(plan.val)} "
          f"test={len(plan.test)} (balanced={cfg['balanced']})")
    return EXIT_OK


# --- train / evaluate ---------------------------------------------------------


def cmd_train(args) -> int:
    started = now_iso()
    cfg = _resolved(args)
    exp = cfgmod.experiment_from_config(cfg)
    corpus = _scan(exp.dataset_root)
    plan = dataset.make_split(corpus, exp.split_seed, exp.balanced)
    pre = exp.preprocess_spec()
    train_src = source_from_partition(corpus, plan.train, pre,
                                      batch_size=exp.batch_size, shuffle=True,
                                      augment=exp.augmentation_spec(), seed=exp.seed)
    val_src = source_from_partition(corpus, plan.val, pre, batch_size=exp.batch_size)

    net = build_desknet((3, *exp.crop), corpus.num_classes,
                        head_version=exp.head_version, seed=exp.seed)
    opt = OptimizerSpec(exp.optimizer, exp.learning_rate)

    def log(stats):
        print(f"epoch {stats.epoch:3d}  train_loss={stats.train_loss:.4f} "
              f"train_acc={stats.train_acc:.3f}  val_loss={stats.val_loss:.4f} "
              f"val_acc={stats.val_acc:.3f}")

    history, best_params = train(net, train_src, val_src, opt, exp.epochs,
                                 seed=exp.seed, log=log)

    out = _require_out(args)
    ckpt = out / "checkpoint.xck"
    save_checkpoint(ckpt, net, class_names=corpus.classes, seed=exp.seed,
                    step_count=len(history.epochs), preprocess=pre, params=best_params)
    hist_csv = out / "history.csv"
    history.to_csv(hist_csv)
    hist_png = out / "history.png"
    history_figure(history, hist_png)
    write_manifest(out, "train", cfg,
                   {"seed": exp.seed, "split_seed": exp.split_seed},
                   [ckpt, hist_csv, hist_png], started)
    print(f"best epoch {history.best_epoch}; checkpoint at {ckpt}")
    return EXIT_OK


def _load_model(spec: str, timeout: float = 30.0):
    """Returns (handle, preprocess_spec). ``spec`` is a checkpoint path, a URL,
    or empty to use $XPLAIN_MODEL_URL."""
    if not spec:
        spec = os.environ.get(ENV_MODEL_URL, "")
        if not spec:
            raise ConfigError(f"no --model given and {ENV_MODEL_URL} is unset")
    if spec.startswith("remote:"):
        spec = spec[len("remote:"):]
    if spec.startswith(("http://", "https://")):
        handle = remote_handle(spec, timeout=timeout)
        c, h, w = handle.input_shape
        pre = imaging.PreprocessSpec(
            resize=(max(1, round(h * 256 / 224)), max(1, round(w * 256 / 224))),
            crop=(h, w),
        )
        return handle, pre
    path = Path(spec)
    if not path.is_file():
        raise DataError(f"model checkpoint {path} does not exist")
    net, meta = load_checkpoint(path)
    pre = meta["preprocess"] or imaging.PreprocessSpec(crop=net.input_shape[1:])
    handle = native_handle(net, meta["class_names"], constants=pre.constants,
                           model_id=path.name)
    return handle, pre


def cmd_evaluate(args) -> int:
    started = now_iso()
    cfg = _resolved(args, with_training=False)
    handle, pre = _load_model(args.model)
    corpus = _scan(cfg["data"])
    if corpus.classes != list(handle.class_names):
        print(f"note: corpus classes {corpus.classes} differ from model "
              f"classes {list(handle.class_names)}; using corpus order", file=sys.stderr)
    plan = dataset.make_split(corpus, cfg["split_seed"], cfg["balanced"])
    test_src = source_from_partition(corpus, plan.test, pre, batch_size=cfg["batch_size"])
    cm, report = evaluate(handle, test_src.batches(0))

    out = _require_out(args)
    metrics_path = out / "metrics.json"
    payload = {
        "model": handle.model_id,
        "classes": corpus.classes,
        "confusion": cm.counts.tolist(),
        **report.to_dict(),
    }
    metrics_path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    confusion_path = out / "confusion.csv"
    with open(confusion_path, "w") as fh:
        fh.write("true\\pred," + ",".join(corpus.classes) + "\n")
        for name, row in zip(corpus.classes, cm.counts):
            fh.write(name + "," + ",".join(str(v) for v in row) + "\n")
    write_manifest(out, "evaluate", cfg, {"split_seed": cfg["split_seed"]},
                   [metrics_path, confusion_path], started,
                   extra={"model": args.model or ""})
    print(f"accuracy={report.accuracy:.4f} macro_f1={report.macro_f1:.4f} "
          f"({cm.total} test images)")
    return EXIT_OK


def cmd_grid(args) -> int:
    started = now_iso()
    cfg = _resolved(args)
    exp = cfgmod.experiment_from_config(cfg)
    _scan(exp.dataset_root)
    out = _require_out(args)
    report = run_grid(exp, args.grid, out, progress=print)
    artifacts = [out / n for n in ("report.csv", "report.json", "report.md", "report.png")]
    artifacts += sorted((out / "cells").glob("*.json"))
    write_manifest(out, "grid", cfg,
                   {"seed": exp.seed, "split_seed": exp.split_seed}, artifacts, started,
                   extra={"grid": args.grid})
    ok = sum(1 for r in report.rows if r["status"] == "ok")
    print(f"grid {args.grid}: {ok}/{len(report.rows)} cells ok; reports under {out}")
    return EXIT_OK


# --- explain ------------------------------------------------------------------


def _parse_target(value: str):
    if value is None or value == "top":
        return None
    try:
        return int(value)
    except ValueError as exc:
        raise ConfigError(f"--class must be 'top' or an integer, got {value!r}") from exc


def _explain_one(handle, img_unit, sp, method, args, target):
    common = dict(seed=args.seed if args.seed is not None else cfgmod.default_seed(),
                  target_class=target)
    if method == "lime":
        return lime_explain(handle, img_unit, sp, num_samples=args.samples,
                            num_features=args.features,
                            kernel_width=args.kernel_width,
                            ridge_lambda=args.ridge_lambda, **common)
    if method == "shap":
        return kernel_shap(handle, img_unit, sp, num_samples=args.samples, **common)
    return grad_cam(handle, img_unit, target_class=target, conv_layer=args.conv_layer)


def cmd_explain(args) -> int:
    started = now_iso()
    handle, pre = _load_model(args.model)
    try:
        raw = imaging.load_image(args.image)
    except XplainError:
        raise
    img_unit = imaging.preprocess_unit(raw, pre)
    target = _parse_target(args.target_class)
    seed = args.seed if args.seed is not None else cfgmod.default_seed()

    methods = ["lime", "shap", "gradcam"] if args.method == "all" else [args.method]
    if "gradcam" in methods and not handle.has_gradients:
        raise GradientsUnavailable(
            "activation maps need a native checkpoint; this model is remote. "
            "Re-run with --method lime or --method shap, or point --model at a checkpoint."
        )

    sp = segment_superpixels(img_unit, target_segments=args.segments, seed=seed)
    out = _require_out(args)
    artifacts = []
    entries = []
    panels_by_method = {}
    original_hwc = img_unit.data.transpose(1, 2, 0)

    for method in methods:
        result = _explain_one(handle, img_unit, sp, method, args, target)
        entries.append(result.to_dict())
        if method == "lime":
            for style in ("lime_superpixels", "lime_posneg"):
                path = out / f"{style}.png"
                arr = render(result, img_unit, style, path)
                artifacts.append(path)
                panels_by_method.setdefault("LIME", []).append((style.split("_", 1)[1], arr))
        elif method == "shap":
            path = out / "shap_redblue.png"
            arr = render(result, img_unit, "shap_redblue", path)
            artifacts.append(path)
            panels_by_method["SHAP"] = [("original", original_hwc), ("red/blue", arr)]
            # additional classes in descending predicted probability
            if args.shap_classes > 1 and target is None:
                from .gateway import predict_unit

                probs = predict_unit(handle, img_unit.data[None])[0]
                ranked = list(np.argsort(probs)[::-1])[1 : args.shap_classes]
                for rank, cls in enumerate(ranked, start=2):
                    extra = _explain_one(handle, img_unit, sp, "shap", args, int(cls))
                    entries.append(extra.to_dict())
                    name = handle.class_names[int(cls)]
                    path = out / f"shap_redblue_rank{rank}_{name}.png"
                    render(extra, img_unit, "shap_redblue", path)
                    artifacts.append(path)
        else:
            path = out / "cam_overlay.png"
            arr = render(result, img_unit, "cam_overlay", path)
            artifacts.append(path)
            panels_by_method["Grad-CAM"] = [("original", original_hwc), ("overlay", arr)]

    if args.method == "all":
        sheet = out / "comparison_sheet.png"
        rows = [(name, panels_by_method[name]) for name in ("LIME", "SHAP", "Grad-CAM")]
        comparison_sheet(rows, sheet, suptitle=f"model: {handle.model_id}")
        artifacts.append(sheet)

    sidecar = out / "explanation.json"
    sidecar.write_text(json.dumps({
        "image": str(args.image),
        "model": handle.model_id,
        "class_names": list(handle.class_names),
        "segments": sp.num_segments,
        "entries": entries,
    }, indent=2, sort_keys=True) + "\n")
    artifacts.append(sidecar)

    cfg_echo = {
        "image": str(args.image), "model": args.model or "", "method": args.method,
        "class": args.target_class or "top", "segments": args.segments,
        "samples": args.samples, "features": args.features,
        "kernel_width": args.kernel_width, "ridge_lambda": args.ridge_lambda,
        "conv_layer": args.conv_layer, "seed": seed,
    }
    write_manifest(out, "explain", cfg_echo, {"seed": seed}, artifacts, started)
    print(f"wrote {len(artifacts)} artifacts under {out}")
    return EXIT_OK


def cmd_compare_xai(args) -> int:
    started = now_iso()
    if not args.model:
        raise ConfigError("give at least one --model")
    seed = args.seed if args.seed is not None else cfgmod.default_seed()
    out = _require_out(args)

    rows = {"LIME": [], "SHAP": [], "Grad-CAM": []}
    summary = []
    artifacts = []
    for spec in args.model:
        handle, pre = _load_model(spec)
        raw = imaging.load_image(args.image)
        img_unit = imaging.preprocess_unit(raw, pre)
        sp = segment_superpixels(img_unit, target_segments=args.segments, seed=seed)
        lime_res = lime_explain(handle, img_unit, sp, num_samples=args.samples, seed=seed)
        shap_res = kernel_shap(handle, img_unit, sp, num_samples=args.samples, seed=seed)
        rows["LIME"].append((handle.model_id, render_array(lime_res, img_unit, "lime_posneg")))
        rows["SHAP"].append((handle.model_id, render_array(shap_res, img_unit, "shap_redblue")))
        model_summary = {
            "model": handle.model_id,
            "lime": lime_res.to_dict(),
            "kernel_shap": shap_res.to_dict(),
        }
        if handle.has_gradients:
            cam_res = grad_cam(handle, img_unit)
            rows["Grad-CAM"].append((handle.model_id,
                                     render_array(cam_res, img_unit, "cam_overlay")))
            model_summary["grad_cam"] = cam_res.to_dict()
        else:
            print(f"note: {handle.model_id} is remote; skipping its activation map",
                  file=sys.stderr)
        summary.append(model_summary)

    sheet = out / "comparison.png"
    comparison_sheet([(k, v) for k, v in rows.items() if v], sheet,
                     suptitle=f"image: {Path(args.image).name}")
    artifacts.append(sheet)
    sidecar = out / "comparison.json"
    sidecar.write_text(json.dumps({"image": str(args.image), "models": summary},
                                  indent=2, sort_keys=True) + "\n")
    artifacts.append(sidecar)
    write_manifest(out, "compare-xai",
                   {"image": str(args.image), "models": list(args.model),
                    "segments": args.segments, "samples": args.samples, "seed": seed},
                   {"seed": seed}, artifacts, started)
    print(f"comparison sheet at {sheet}")
    return EXIT_OK


# --- parser -------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="xplain",
        description="train, benchmark and explain desk-scale image classifiers",
    )
    parser.add_argument("--version", action="version", version=f"xplain {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("scan", help="inventory a class-folder corpus")
    p.add_argument("--data", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_scan)

    p = sub.add_parser("split", help="write a seeded 80/10/10 split manifest")
    _add_config_flags(p, with_training=False)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("train", help="train the native network on a corpus")
    _add_config_flags(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="test-split metrics for a model")
    _add_config_flags(p, with_training=False)
    p.add_argument("--model", help="checkpoint path or remote URL (default $XPLAIN_MODEL_URL)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("grid", help="run an experiment grid")
    _add_config_flags(p)
    p.add_argument("--grid", required=True, choices=("hyper", "heads", "aug"))
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_grid)

    p = sub.add_parser("explain", help="attribution images for one input")
    p.add_argument("--image", required=True)
    p.add_argument("--model", help="checkpoint path or remote URL (default $XPLAIN_MODEL_URL)")
    p.add_argument("--method", choices=("lime", "shap", "gradcam", "all"), default="all")
    p.add_argument("--class", dest="target_class", default="top",
                   help="'top' or an explicit class index")
    p.add_argument("--segments", type=int, default=50)
    p.add_argument("--samples", type=int, default=1000)
    p.add_argument("--features", type=int, default=10)
    p.add_argument("--kernel-width", type=float, default=0.25, dest="kernel_width")
    p.add_argument("--ridge-lambda", type=float, default=1.0, dest="ridge_lambda")
    p.add_argument("--conv-layer", default=None, dest="conv_layer")
    p.add_argument("--shap-classes", type=int, default=1, dest="shap_classes",
                   help="explain this many classes in descending predicted probability")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_explain)

    p = sub.add_parser("compare-xai", help="side-by-side attribution panels across models")
    p.add_argument("--image", required=True)
    p.add_argument("--model", action="append", default=None)
    p.add_argument("--segments", type=int, default=50)
    p.add_argument("--samples", type=int, default=1000)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_compare_xai)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except GradientsUnavailable as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NO_GRADIENTS
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except XplainError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except Exception as exc:  # noqa: BLE001 - exit-code contract for scripts
        print(f"unexpected error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    raise SystemExit(main())
