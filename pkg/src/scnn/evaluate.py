"""Stratified cross-validation, ROC/threshold metrics, activation maps.

Protocol: subjects are stratified by (class, gender, age-tercile within the
class x gender cell), each stratum is shuffled with the plan seed, and
subjects are dealt round-robin to k folds with one continuing cursor across
strata.  The continuing cursor keeps every per-fold class count within one
subject of the exact proportional share.  The cross-validation loop holds
out fold i as the test set and fold (i+1) mod k as the validation set used
for model selection; the positive-class probabilities of every test fold are
aggregated before computing the ROC curve, AUC, and the threshold-0.5
accuracy / sensitivity / specificity.

Class activation maps: the gamma = 0 slice of the post-ReLU final trunk
maps, each (alpha, beta) value multiplied by the pooling layer's normalized
sin(beta) weight, channels combined with the fully-connected weights feeding
the requested class from the hemisphere's feature block.
"""

from __future__ import annotations

import os
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from . import autodiff as ad
from .cohort import TASKS, load_dataset, save_sphere_signal, task_records
from .errors import UndefinedMetricError, ValidationError
from .grid import SphereSignal, wgap_weights
from .layers import Model, model_forward
from .train import ArrayDataset, TrainConfig, accuracy, predict_batched, train

_CLASS_ORDER = ("CN", "MCI-s", "MCI-p", "AD")


# ---------------------------------------------------------------------------
# fold planning

@dataclass
class FoldPlan:
    k: int
    assignment: np.ndarray          # fold index per subject (manifest order)
    summary: list                   # per-fold dict: size, class/gender counts, age mean

    def fold_sizes(self) -> np.ndarray:
        return np.bincount(self.assignment, minlength=self.k)


def stratified_kfold(records: list, k: int = 10, seed: int = 0) -> FoldPlan:
    """Deal subjects to k folds, stratified by class, gender and age tercile."""
    if k < 2:
        raise ValidationError(f"k must be >= 2, got {k}")
    n = len(records)
    if n == 0:
        raise ValidationError("empty manifest")
    ages = np.array([r.age for r in records])
    strata: dict = {}
    for cell_class in _CLASS_ORDER:
        for cell_gender in ("F", "M"):
            cell = [i for i, r in enumerate(records)
                    if r.label == cell_class and r.gender == cell_gender]
            if not cell:
                continue
            cell_ages = ages[cell]
            lo, hi = np.quantile(cell_ages, [1 / 3, 2 / 3])
            for i in cell:
                terc = 0 if ages[i] <= lo else (1 if ages[i] <= hi else 2)
                strata.setdefault((cell_class, cell_gender, terc), []).append(i)
    rng = np.random.default_rng(seed)
    assignment = np.full(n, -1, dtype=np.intp)
    cursor = 0
    for key in sorted(strata, key=lambda t: (_CLASS_ORDER.index(t[0]), t[1], t[2])):
        members = np.asarray(strata[key], dtype=np.intp)
        members = members[rng.permutation(len(members))]
        for i in members:
            assignment[i] = cursor % k
            cursor += 1
    summary = []
    for f in range(k):
        idx = np.flatnonzero(assignment == f)
        summary.append({
            "size": int(len(idx)),
            "classes": {c: int(sum(records[i].label == c for i in idx))
                        for c in _CLASS_ORDER
                        if any(r.label == c for r in records)},
            "genders": {g: int(sum(records[i].gender == g for i in idx))
                        for g in ("F", "M")},
            "age_mean": float(ages[idx].mean()) if len(idx) else float("nan"),
        })
    return FoldPlan(k=k, assignment=assignment, summary=summary)


# ---------------------------------------------------------------------------
# metrics

@dataclass
class RocResult:
    points: np.ndarray              # (n, 2) of (fpr, tpr), (0,0) .. (1,1)
    auc: float
    probs: np.ndarray               # the aggregated scores the curve was built from


def roc_auc(probs, labels) -> RocResult:
    """ROC by threshold sweep over unique scores; trapezoidal AUC.

    The trapezoid rule over tie groups equals the Mann-Whitney statistic with
    ties counted one half.
    """
    probs = np.asarray(probs, dtype=np.float64)
    labels = np.asarray(labels)
    npos = int((labels == 1).sum())
    nneg = int((labels == 0).sum())
    if npos == 0 or nneg == 0:
        raise UndefinedMetricError("ROC needs at least one subject of each class")
    order = np.argsort(-probs, kind="stable")
    sorted_labels = labels[order]
    sorted_probs = probs[order]
    tp = np.cumsum(sorted_labels == 1)
    fp = np.cumsum(sorted_labels == 0)
    # keep only the last index of each tie group (thresholds at unique scores)
    last = np.flatnonzero(np.diff(sorted_probs) != 0)
    keep = np.concatenate([last, [len(sorted_probs) - 1]])
    tpr = np.concatenate([[0.0], tp[keep] / npos])
    fpr = np.concatenate([[0.0], fp[keep] / nneg])
    auc = float(np.sum(np.diff(fpr) * (tpr[1:] + tpr[:-1])) / 2.0)
    return RocResult(points=np.column_stack([fpr, tpr]), auc=auc, probs=probs)


def confusion_metrics(probs, labels, threshold: float = 0.5) -> tuple:
    """(accuracy, sensitivity, specificity) predicting positive at p >= threshold."""
    probs = np.asarray(probs, dtype=np.float64)
    labels = np.asarray(labels)
    npos = int((labels == 1).sum())
    nneg = int((labels == 0).sum())
    if npos == 0 or nneg == 0:
        raise UndefinedMetricError(
            "sensitivity/specificity need at least one subject of each class")
    pred = probs >= threshold
    tp = int(np.sum(pred & (labels == 1)))
    tn = int(np.sum(~pred & (labels == 0)))
    acc = (tp + tn) / len(labels)
    sen = tp / npos
    spe = tn / nneg
    return acc, sen, spe


# ---------------------------------------------------------------------------
# cross-validation

@dataclass
class CvResult:
    task: str
    subject_ids: list
    labels: np.ndarray
    probs: np.ndarray
    plan: FoldPlan
    roc: RocResult
    acc: float
    sen: float
    spe: float
    fold_val_acc: list = field(default_factory=list)
    histories: list = field(default_factory=list)


def cross_validate(records: list, base_dir: str, task: str, builder,
                   config: TrainConfig, k: int = 10, seed: int = 0,
                   oracle: bool = False, progress=None) -> CvResult:
    """Full k-fold protocol.  builder(fold) -> fresh Model per fold; oracle
    mode skips training and uses the ground-truth label as the probability
    (plumbing dry-run)."""
    recs = task_records(records, task)
    ds, recs = load_dataset(recs, base_dir, task)
    plan = stratified_kfold(recs, k=k, seed=seed)
    n = len(recs)
    probs = np.full(n, np.nan)
    fold_val_acc: list = []
    histories: list = []
    for i in range(k):
        test_idx = np.flatnonzero(plan.assignment == i)
        val_idx = np.flatnonzero(plan.assignment == (i + 1) % k)
        train_idx = np.flatnonzero((plan.assignment != i)
                                   & (plan.assignment != (i + 1) % k))
        if oracle:
            probs[test_idx] = ds.labels[test_idx]
            fold_val_acc.append(1.0)
            continue
        val_labels = ds.labels[val_idx]
        if len(np.unique(val_labels)) < 2:
            warnings.warn(f"fold {i}: validation set has a single class; "
                          "accuracy-based selection still applies")
        model = builder(i)
        best, history = train(model, ds.subset(train_idx), ds.subset(val_idx),
                              replace(config, seed=config.seed + i))
        histories.append(history)
        fold_val_acc.append(max(h.val_acc for h in history))
        probs[test_idx] = predict_batched(best, ds.subset(test_idx))[:, 1]
        if progress is not None:
            progress(i, k, fold_val_acc[-1])
    roc = roc_auc(probs, ds.labels)
    acc, sen, spe = confusion_metrics(probs, ds.labels)
    return CvResult(task=task, subject_ids=[r.subject_id for r in recs],
                    labels=ds.labels, probs=probs, plan=plan, roc=roc,
                    acc=acc, sen=sen, spe=spe, fold_val_acc=fold_val_acc,
                    histories=histories)


# ---------------------------------------------------------------------------
# class activation maps

@dataclass
class CamMap:
    class_index: int
    bandwidth: int
    values: np.ndarray              # (2b, 2b) over (alpha, beta), gamma=0 slice

    def __post_init__(self):
        b = self.bandwidth
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.shape != (2 * b, 2 * b):
            raise ValidationError(
                f"CAM values must be ({2*b}, {2*b}), got {self.values.shape}")
        if not np.all(np.isfinite(self.values)):
            raise ValidationError("CAM values must be finite")


def compute_cam(model: Model, left, right, class_index: int) -> tuple:
    """Per-hemisphere class activation maps for one subject.

    left/right are (C, 2b, 2b) sampled inputs.  Returns (left CamMap,
    right CamMap) at the trunk output bandwidth.
    """
    if model.arch["kind"] != "spherical":
        raise ValidationError("activation maps require the spherical model")
    n_classes = model.tensors["fc.weight"].shape[0]
    if not 0 <= class_index < n_classes:
        raise ValidationError(f"class index {class_index} out of range")
    left = np.asarray(left)[None]
    right = np.asarray(right)[None]
    out = model_forward(model, left, right, train=False, want_maps=True)
    b_out = model.arch["trunk_bandwidths"][-1]
    w_beta = wgap_weights(b_out)
    c = model.arch["channels"][-1]
    fcw = model.tensors["fc.weight"]
    cams = []
    for maps, block in ((out["left_maps"], fcw[class_index, :c]),
                        (out["right_maps"], fcw[class_index, c:2 * c])):
        sliced = ad.val(maps)[0, :, :, :, 0]          # (C, alpha, beta)
        corrected = sliced * w_beta[None, None, :]
        cams.append(CamMap(class_index, b_out,
                           np.einsum("c,cab->ab", block, corrected)))
    return cams[0], cams[1]


def population_average_cam(model: Model, lefts, rights, class_index: int) -> tuple:
    """Pointwise mean of per-subject maps over a subject subset."""
    lefts = np.asarray(lefts)
    rights = np.asarray(rights)
    if len(lefts) == 0:
        raise ValidationError("empty subject subset")
    acc_l = acc_r = 0.0
    for lv, rv in zip(lefts, rights):
        cl, cr = compute_cam(model, lv, rv, class_index)
        acc_l = acc_l + cl.values
        acc_r = acc_r + cr.values
    b = model.arch["trunk_bandwidths"][-1]
    return (CamMap(class_index, b, acc_l / len(lefts)),
            CamMap(class_index, b, acc_r / len(lefts)))


def cam_to_signal(cam: CamMap, hemisphere: str) -> SphereSignal:
    """CAM as a sphere-signal (transposed to the (beta, alpha) file layout)."""
    return SphereSignal(bandwidth=cam.bandwidth, values=cam.values.T[None],
                        hemisphere=hemisphere)


# ---------------------------------------------------------------------------
# report writers (all byte-deterministic)

def write_probabilities_csv(result: CvResult, path: str) -> None:
    lines = ["subject_id,label,probability,fold"]
    for sid, lab, p, f in zip(result.subject_ids, result.labels, result.probs,
                              result.plan.assignment):
        lines.append(f"{sid},{int(lab)},{float(p)!r},{int(f)}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def write_metrics_csv(result: CvResult, path: str) -> None:
    lines = ["metric,value",
             f"task,{result.task}",
             f"n,{len(result.labels)}",
             f"n_pos,{int((result.labels == 1).sum())}",
             f"n_neg,{int((result.labels == 0).sum())}",
             f"auc,{result.roc.auc!r}",
             f"acc,{result.acc!r}",
             f"sen,{result.sen!r}",
             f"spe,{result.spe!r}"]
    for i, va in enumerate(result.fold_val_acc):
        lines.append(f"fold{i}_val_acc,{float(va)!r}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def write_roc_csv(roc: RocResult, path: str) -> None:
    lines = ["fpr,tpr"] + [f"{float(p[0])!r},{float(p[1])!r}" for p in roc.points]
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def write_roc_svg(roc: RocResult, path: str, title: str = "ROC") -> None:
    """Minimal standalone vector plot: unit box, diagonal reference, curve."""
    x0, y0, side = 60.0, 40.0, 340.0

    def sx(v):
        return f"{x0 + v * side:.3f}"

    def sy(v):
        return f"{y0 + (1.0 - v) * side:.3f}"

    pts = " ".join(f"{sx(p[0])},{sy(p[1])}" for p in roc.points)
    svg = [
        '<svg xmlns="http://www.w3.org/2000/svg" width="440" height="440" '
        'viewBox="0 0 440 440">',
        '<rect x="60" y="40" width="340" height="340" fill="none" '
        'stroke="black" stroke-width="1"/>',
        f'<line x1="{sx(0)}" y1="{sy(0)}" x2="{sx(1)}" y2="{sy(1)}" '
        'stroke="gray" stroke-dasharray="6,4" stroke-width="1"/>',
        f'<polyline points="{pts}" fill="none" stroke="crimson" stroke-width="2"/>',
        f'<text x="70" y="30" font-family="monospace" font-size="14">'
        f'{title} AUC={roc.auc:.4f}</text>',
        '<text x="200" y="410" font-family="monospace" font-size="12">FPR</text>',
        '<text x="15" y="215" font-family="monospace" font-size="12">TPR</text>',
        "</svg>",
    ]
    with open(path, "w") as fh:
        fh.write("\n".join(svg) + "\n")


_CMAP_ANCHORS = (
    (0.00, (0, 0, 4)),
    (0.25, (87, 16, 110)),
    (0.50, (188, 55, 84)),
    (0.75, (249, 142, 9)),
    (1.00, (252, 255, 164)),
)


def _colormap(norm: np.ndarray) -> np.ndarray:
    """Map [0,1] values to RGB bytes by piecewise-linear anchor interpolation."""
    rgb = np.zeros(norm.shape + (3,), dtype=np.float64)
    for (t0, c0), (t1, c1) in zip(_CMAP_ANCHORS, _CMAP_ANCHORS[1:]):
        mask = (norm >= t0) & (norm <= t1)
        frac = np.zeros_like(norm)
        frac[mask] = (norm[mask] - t0) / (t1 - t0)
        for ch in range(3):
            rgb[..., ch][mask] = c0[ch] + frac[mask] * (c1[ch] - c0[ch])
    return np.clip(np.round(rgb), 0, 255).astype(np.uint8)


def write_cam_png(cam: CamMap, path: str, upscale: int = 16) -> None:
    """Color-mapped raster (rows = beta from north, columns = alpha),
    linearly normalized over the map's own min..max range."""
    from PIL import Image

    vals = cam.values.T                       # (beta, alpha)
    lo, hi = float(vals.min()), float(vals.max())
    norm = np.zeros_like(vals) if hi == lo else (vals - lo) / (hi - lo)
    rgb = _colormap(norm)
    rgb = np.repeat(np.repeat(rgb, upscale, axis=0), upscale, axis=1)
    Image.fromarray(rgb, mode="RGB").save(path, format="PNG")


def comparison_table(results: dict) -> str:
    """Side-by-side metric table for several models on the same task."""
    names = list(results)
    header = "metric     " + "".join(f"{n:>12}" for n in names)
    rows = [header]
    for metric in ("auc", "acc", "sen", "spe"):
        vals = []
        for n in names:
            r = results[n]
            v = r.roc.auc if metric == "auc" else getattr(r, metric)
            vals.append(f"{v:12.4f}")
        rows.append(f"{metric.upper():<11}" + "".join(vals))
    return "\n".join(rows) + "\n"
