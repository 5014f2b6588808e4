"""Command-line entry point.

Commands: generate, sample, train, cv, cam, verify.  Global flags:
--config PATH, --seed N, --threads N, --precision {f32,f64}.  Exit codes:
0 success, 1 usage, 2 validation/parse failure, 3 numeric failure.

Numeric libraries are imported lazily so that --threads can cap the BLAS
worker pools before they initialize.  All command outputs are deterministic
functions of (config, input files, seed); wall-clock timestamps appear only
in the run log file.
"""

from __future__ import annotations

import argparse
import os
import sys

from .config import (MODEL_CHOICES, PRECISION_CHOICES, RunConfig, TASK_CHOICES,
                     load_config)
from .errors import NumericError, ParseError, ValidationError

_THREAD_VARS = ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS",
                "NUMEXPR_NUM_THREADS", "VECLIB_MAXIMUM_THREADS")


def _apply_threads(n: int) -> None:
    if n > 0:
        for var in _THREAD_VARS:
            os.environ[var] = str(n)


def _log_line(out_dir: str, message: str) -> None:
    """Timestamped log entry (the one place timestamps are allowed)."""
    import datetime

    os.makedirs(out_dir, exist_ok=True)
    stamp = datetime.datetime.now().isoformat(timespec="seconds")
    with open(os.path.join(out_dir, "run.log"), "a") as fh:
        fh.write(f"{stamp} {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="scnn",
        description="Spherical CNNs for two-hemisphere cortical measure "
                    "classification: cohort generation, surface sampling, "
                    "training, cross-validation, activation maps.")
    parser.add_argument("--config", help="key=value config file")
    parser.add_argument("--seed", type=int, help="override config seed")
    parser.add_argument("--threads", type=int,
                        help="cap BLAS/OpenMP worker threads")
    parser.add_argument("--precision", choices=PRECISION_CHOICES,
                        help="floating-point width for models and training")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="write a synthetic cohort + manifest")
    p.add_argument("--out", help="output directory (default: config out_dir)")

    p = sub.add_parser("sample", help="resample surface files onto the grid")
    p.add_argument("surfaces", nargs="+", help="SRFM binary or .txt surfaces")
    p.add_argument("--out", help="output directory")

    p = sub.add_parser("train", help="train one split and save a checkpoint")
    p.add_argument("--manifest", help="cohort manifest (default: config)")
    p.add_argument("--out", help="output directory")
    p.add_argument("--task", choices=TASK_CHOICES)
    p.add_argument("--model", choices=MODEL_CHOICES)

    p = sub.add_parser("cv", help="stratified k-fold cross-validation")
    p.add_argument("--manifest", help="cohort manifest (default: config)")
    p.add_argument("--out", help="output directory")
    p.add_argument("--task", choices=TASK_CHOICES)
    p.add_argument("--model", choices=MODEL_CHOICES)
    p.add_argument("--both", action="store_true",
                   help="run spherical and planar and write a comparison table")
    p.add_argument("--oracle", action="store_true",
                   help="dry run: ground-truth labels as probabilities")

    p = sub.add_parser("cam", help="class activation maps for one subject")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--subject", required=True, help="subject id from the manifest")
    p.add_argument("--manifest", help="cohort manifest (default: config)")
    p.add_argument("--out", help="output directory")
    p.add_argument("--class-index", type=int, default=1,
                   help="FC output class to map (default 1 = positive class)")

    p = sub.add_parser("verify", help="run the numeric property suite")
    p.add_argument("--smoke", action="store_true",
                   help="b=2 sizes only; finishes in seconds")
    p.add_argument("--sabotage", action="store_true",
                   help="flip one rotation-table sign to prove the checks bite")
    return parser


def _resolve_config(args) -> RunConfig:
    from dataclasses import replace

    cfg = load_config(args.config) if args.config else RunConfig()
    updates = {}
    for key in ("seed", "threads", "precision"):
        v = getattr(args, key, None)
        if v is not None:
            updates[key] = v
    for key in ("task", "model"):
        v = getattr(args, key, None)
        if v is not None:
            updates[key] = v
    if getattr(args, "manifest", None):
        updates["manifest"] = args.manifest
    if getattr(args, "out", None):
        updates["out_dir"] = args.out
    return replace(cfg, **updates) if updates else cfg


def _manifest_paths(cfg: RunConfig):
    if not cfg.manifest:
        raise ValidationError("a manifest is required (--manifest or config)")
    base = cfg.data_dir or os.path.dirname(os.path.abspath(cfg.manifest))
    return cfg.manifest, base


# ---------------------------------------------------------------------------
# commands

def cmd_generate(cfg: RunConfig, args) -> int:
    from .cohort import generate_cohort, write_manifest

    out = cfg.out_dir
    try:
        os.makedirs(out, exist_ok=True)
        probe = os.path.join(out, ".write_probe")
        with open(probe, "w"):
            pass
        os.remove(probe)
    except OSError as e:
        raise ValidationError(f"output directory {out!r} is not writable: {e}") from e
    spec = cfg.to_cohort_spec()
    records = generate_cohort(spec, out)
    write_manifest(records, os.path.join(out, "manifest.csv"))
    _log_line(out, f"generate: {len(records)} subjects, b={spec.bandwidth}, "
                   f"seed={spec.seed}")
    print(f"generated {len(records)} subjects at bandwidth {spec.bandwidth} "
          f"-> {out}/manifest.csv")
    return 0


def cmd_sample(cfg: RunConfig, args) -> int:
    from .cohort import save_sphere_signal
    from .cortex import import_text_surface, load_surface, sample_to_grid

    out = cfg.out_dir
    os.makedirs(out, exist_ok=True)
    for path in args.surfaces:
        surface = (import_text_surface(path) if path.endswith(".txt")
                   else load_surface(path))
        signal = sample_to_grid(surface, cfg.bandwidth, k=cfg.sample_k,
                                channel=cfg.sample_channel)
        stem = os.path.splitext(os.path.basename(path))[0]
        dest = os.path.join(out, stem + ".sphs")
        save_sphere_signal(signal, dest)
        print(f"sampled {path} ({len(surface)} vertices) -> {dest}")
    return 0


def cmd_train(cfg: RunConfig, args) -> int:
    import numpy as np

    from .cohort import load_dataset, read_manifest, task_records
    from .evaluate import roc_auc, stratified_kfold
    from .layers import save_checkpoint
    from .train import accuracy, history_csv, predict_batched, train

    manifest, base = _manifest_paths(cfg)
    records = task_records(read_manifest(manifest), cfg.task)
    ds, records = load_dataset(records, base, cfg.task)
    plan = stratified_kfold(records, k=cfg.folds, seed=cfg.seed)
    test_idx = np.flatnonzero(plan.assignment == 0)
    val_idx = np.flatnonzero(plan.assignment == 1)
    train_idx = np.flatnonzero((plan.assignment != 0) & (plan.assignment != 1))
    model = cfg.build_model(0)
    best, history = train(model, ds.subset(train_idx), ds.subset(val_idx),
                          cfg.to_train_config())
    out = cfg.out_dir
    os.makedirs(out, exist_ok=True)
    save_checkpoint(best, os.path.join(out, "model.ckpt"))
    with open(os.path.join(out, "history.csv"), "w") as fh:
        fh.write(history_csv(history))
    best_val = max(h.val_acc for h in history)
    lines = [f"task,{cfg.task}", f"model,{cfg.model}",
             f"best_val_acc,{best_val!r}"]
    test_probs = predict_batched(best, ds.subset(test_idx))
    test_labels = ds.labels[test_idx]
    lines.append(f"test_acc,{accuracy(test_probs, test_labels)!r}")
    if len(np.unique(test_labels)) == 2:
        lines.append(f"test_auc,{roc_auc(test_probs[:, 1], test_labels).auc!r}")
    with open(os.path.join(out, "train_metrics.csv"), "w") as fh:
        fh.write("metric,value\n" + "\n".join(lines) + "\n")
    _log_line(out, f"train: {cfg.model}/{cfg.task} best_val_acc={best_val}")
    print(f"trained {cfg.model} on {cfg.task}: best val acc {best_val:.4f} "
          f"-> {out}/model.ckpt")
    return 0


def cmd_cv(cfg: RunConfig, args) -> int:
    from dataclasses import replace

    from .cohort import read_manifest
    from .evaluate import (comparison_table, cross_validate, write_metrics_csv,
                           write_probabilities_csv, write_roc_csv, write_roc_svg)

    manifest, base = _manifest_paths(cfg)
    records = read_manifest(manifest)
    kinds = ("spherical", "planar") if args.both else (cfg.model,)
    results = {}
    for kind in kinds:
        sub = replace(cfg, model=kind)
        out = os.path.join(cfg.out_dir, kind)
        os.makedirs(out, exist_ok=True)

        def progress(i, k, val_acc, _kind=kind):
            print(f"[{_kind}] fold {i + 1}/{k} best val acc {val_acc:.4f}",
                  flush=True)

        res = cross_validate(records, base, cfg.task, sub.build_model,
                             sub.to_train_config(), k=cfg.folds, seed=cfg.seed,
                             oracle=args.oracle, progress=progress)
        write_metrics_csv(res, os.path.join(out, "metrics.csv"))
        write_probabilities_csv(res, os.path.join(out, "probabilities.csv"))
        write_roc_csv(res.roc, os.path.join(out, "roc.csv"))
        write_roc_svg(res.roc, os.path.join(out, "roc.svg"),
                      title=f"{cfg.task} {kind}")
        results[kind] = res
        _log_line(cfg.out_dir, f"cv: {kind}/{cfg.task} auc={res.roc.auc}")
        print(f"[{kind}] {cfg.task}: AUC {res.roc.auc:.4f} ACC {res.acc:.4f} "
              f"SEN {res.sen:.4f} SPE {res.spe:.4f}")
    if len(results) > 1:
        table = comparison_table(results)
        with open(os.path.join(cfg.out_dir, "comparison.txt"), "w") as fh:
            fh.write(table)
        print(table, end="")
    return 0


def cmd_cam(cfg: RunConfig, args) -> int:
    import numpy as np

    from .cohort import load_sphere_signal, read_manifest, save_sphere_signal
    from .cohort import default_sites
    from .evaluate import cam_to_signal, compute_cam, write_cam_png
    from .grid import grid_alphas, grid_betas, sphere_angle
    from .layers import load_checkpoint

    if not os.path.exists(args.checkpoint):
        raise ValidationError(f"checkpoint {args.checkpoint!r} does not exist")
    model = load_checkpoint(args.checkpoint)
    manifest, base = _manifest_paths(cfg)
    records = {r.subject_id: r for r in read_manifest(manifest)}
    if args.subject not in records:
        raise ValidationError(f"subject {args.subject!r} not in manifest")
    rec = records[args.subject]
    left = load_sphere_signal(os.path.join(base, rec.left_path))
    right = load_sphere_signal(os.path.join(base, rec.right_path))
    cam_l, cam_r = compute_cam(model, left.values, right.values,
                               args.class_index)
    out = cfg.out_dir
    os.makedirs(out, exist_ok=True)
    sites = default_sites()
    for cam, hemi in ((cam_l, "left"), (cam_r, "right")):
        stem = os.path.join(out, f"cam_{rec.subject_id}_{hemi}")
        save_sphere_signal(cam_to_signal(cam, hemi), stem + ".sphs")
        write_cam_png(cam, stem + ".png")
        ai, bi = np.unravel_index(np.argmax(cam.values), cam.values.shape)
        alpha = grid_alphas(cam.bandwidth)[ai]
        beta = grid_betas(cam.bandwidth)[bi]
        peak = np.array([np.sin(beta) * np.cos(alpha),
                         np.sin(beta) * np.sin(alpha), np.cos(beta)])
        dists = [np.degrees(sphere_angle(peak, np.asarray(s.center)))
                 for s in sites if s.hemisphere == hemi]
        print(f"{hemi}: argmax at alpha={alpha:.3f} beta={beta:.3f}; "
              f"nearest default site {min(dists):.1f} deg -> {stem}.png")
    return 0


def cmd_verify(cfg: RunConfig, args) -> int:
    from . import verify as vf

    report = vf.run_suite(smoke=args.smoke, sabotage=args.sabotage)
    failed = 0
    for check in report:
        status = "PASS" if check.passed else "FAIL"
        print(f"{status} {check.name}: max err {check.error:.3e} "
              f"(tol {check.tolerance:.1e})")
        failed += 0 if check.passed else 1
    if failed:
        print(f"{failed} of {len(report)} checks failed")
        return 3
    print(f"all {len(report)} checks passed")
    return 0


_COMMANDS = {
    "generate": cmd_generate,
    "sample": cmd_sample,
    "train": cmd_train,
    "cv": cmd_cv,
    "cam": cmd_cam,
    "verify": cmd_verify,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return 0 if e.code == 0 else 1
    try:
        cfg = _resolve_config(args)
        _apply_threads(cfg.threads)
        return _COMMANDS[args.command](cfg, args)
    except (ValidationError, ParseError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except NumericError as e:
        print(f"numeric failure: {e}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
