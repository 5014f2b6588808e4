"""Synthetic two-hemisphere cohorts with class-dependent regional atrophy.

Each subject's per-hemisphere thickness field is

    base mean
    + band-limited smooth random field (degrees 1..8)
    - sum over atrophy sites of
        depth * class_multiplier * (1 + subject jitter) * exp(-(angle/radius)^2)
    + i.i.d. Gaussian noise,

optionally warped by a small random ZYZ misregistration rotation shared by
both hemispheres, then clamped to >= 0.5 mm.  The rotation is applied
analytically (smooth-field coefficients rotated per degree, site centers
rotated in R^3), so there is no resampling error.

The four diagnostic classes carry depth multipliers CN 0, MCI-s 0.35,
MCI-p 0.65, AD 1.0: the stable/progressive MCI contrast is a harder version
of the AD/CN contrast by construction.  Demographics (age mean/std and
male/female counts per class) default to:

    CN    151 subjects, age 75.64 (5.25), 74M/77F
    MCI-s 114 subjects, age 74.90 (7.33), 72M/42F
    MCI-p 136 subjects, age 74.69 (6.95), 85M/51F
    AD    188 subjects, age 75.18 (7.50), 99M/89F

Per-subject randomness comes from seed-sequence children spawned from the
cohort seed, so subject i's data depends only on (seed, i): parallel and
sequential generation produce identical cohorts.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import ParseError, ValidationError
from .grid import (EulerZYZ, SphereGrid, SphereSignal, euler_to_matrix,
                   small_random_rotation, sphere_angle)
from .spectral import rotate_s2_coeffs, sht_inverse_arr

SIGNAL_MAGIC = b"SPHS"
SIGNAL_VERSION = 1
_HEMIS = ("left", "right")

CLASSES = ("CN", "MCI-s", "MCI-p", "AD")
TABLE_COUNTS = {"CN": 151, "MCI-s": 114, "MCI-p": 136, "AD": 188}
# class -> (age mean, age std, male count, female count)
DEMOGRAPHICS = {
    "CN": (75.64, 5.25, 74, 77),
    "MCI-s": (74.90, 7.33, 72, 42),
    "MCI-p": (74.69, 6.95, 85, 51),
    "AD": (75.18, 7.50, 99, 89),
}
CLASS_MULTIPLIERS = {"CN": 0.0, "MCI-s": 0.35, "MCI-p": 0.65, "AD": 1.0}
AGE_RANGE = (55.0, 95.0)
CLAMP_MIN = 0.5
FIELD_MAX_DEGREE = 8


def _unit(v) -> tuple:
    a = np.asarray(v, dtype=np.float64)
    return tuple(a / np.linalg.norm(a))


@dataclass(frozen=True)
class AtrophySite:
    hemisphere: str
    center: tuple          # unit 3-vector
    radius: float          # angular radius (radians)
    depth: float           # millimeters

    def __post_init__(self):
        if self.hemisphere not in _HEMIS:
            raise ValidationError(f"hemisphere must be one of {_HEMIS}")
        if not 0.0 < self.radius < np.pi:
            raise ValidationError(f"site radius must be in (0, pi), got {self.radius}")
        if self.depth < 0:
            raise ValidationError(f"site depth must be >= 0, got {self.depth}")
        c = np.asarray(self.center, dtype=np.float64)
        if c.shape != (3,) or abs(np.linalg.norm(c) - 1.0) > 1e-6:
            raise ValidationError("site center must be a unit 3-vector")


def default_sites() -> tuple:
    """One medial-temporal-like and one parietal-like site per hemisphere."""
    mt_l = _unit((-0.45, -0.55, -0.70))
    mt_r = _unit((0.45, -0.55, -0.70))
    par_l = _unit((-0.50, 0.45, 0.74))
    par_r = _unit((0.50, 0.45, 0.74))
    return (
        AtrophySite("left", mt_l, 0.50, 0.80),
        AtrophySite("right", mt_r, 0.50, 0.80),
        AtrophySite("left", par_l, 0.40, 0.50),
        AtrophySite("right", par_r, 0.40, 0.50),
    )


@dataclass(frozen=True)
class CohortSpec:
    counts: dict = field(default_factory=lambda: dict(TABLE_COUNTS))
    bandwidth: int = 16
    base_mean: float = 2.5
    field_amplitude: float = 0.2
    sites: tuple = field(default_factory=default_sites)
    class_multipliers: dict = field(default_factory=lambda: dict(CLASS_MULTIPLIERS))
    noise_std: float = 0.1
    depth_jitter_std: float = 0.1
    misreg_std: float = 0.05
    seed: int = 0

    def __post_init__(self):
        for cls, n in self.counts.items():
            if cls not in CLASSES:
                raise ValidationError(f"unknown class {cls!r}")
            if n < 0:
                raise ValidationError(f"count for {cls} must be >= 0")
        if self.noise_std < 0:
            raise ValidationError("noise std must be >= 0")
        if self.field_amplitude < 0:
            raise ValidationError("field amplitude must be >= 0")
        if self.misreg_std < 0:
            raise ValidationError("misregistration std must be >= 0")

    def total(self) -> int:
        return sum(self.counts.values())


@dataclass
class SubjectRecord:
    subject_id: str
    label: str
    age: float
    gender: str            # "M" or "F"
    left_path: str
    right_path: str
    fold: int | None = None


# ---------------------------------------------------------------------------
# sphere-signal files

def save_sphere_signal(signal: SphereSignal, path: str) -> None:
    """Magic "SPHS", version u32, hemisphere byte, channels u32, bandwidth
    u32, f64 little-endian values in (channel, beta, alpha) order."""
    with open(path, "wb") as fh:
        fh.write(SIGNAL_MAGIC)
        fh.write(struct.pack("<I", SIGNAL_VERSION))
        fh.write(struct.pack("<B", _HEMIS.index(signal.hemisphere)))
        fh.write(struct.pack("<II", signal.channels, signal.bandwidth))
        fh.write(np.ascontiguousarray(signal.values, dtype="<f8").tobytes())


def load_sphere_signal(path: str) -> SphereSignal:
    with open(path, "rb") as fh:
        raw = fh.read()
    off = 0

    def need(n: int) -> bytes:
        nonlocal off
        if off + n > len(raw):
            raise ParseError("signal file truncated", offset=off)
        piece = raw[off:off + n]
        off += n
        return piece

    if need(4) != SIGNAL_MAGIC:
        raise ParseError("bad signal magic", offset=0)
    version = struct.unpack("<I", need(4))[0]
    if version != SIGNAL_VERSION:
        raise ParseError(f"unsupported signal version {version}", offset=4)
    hemi = struct.unpack("<B", need(1))[0]
    if hemi not in (0, 1):
        raise ParseError(f"bad hemisphere byte {hemi}", offset=8)
    channels, b = struct.unpack("<II", need(8))
    vals = np.frombuffer(need(8 * channels * 4 * b * b), dtype="<f8")
    if off != len(raw):
        raise ParseError(f"{len(raw) - off} trailing bytes", offset=off)
    return SphereSignal(bandwidth=b, values=vals.reshape(channels, 2 * b, 2 * b).copy(),
                        hemisphere=_HEMIS[hemi])


# ---------------------------------------------------------------------------
# manifest files

def write_manifest(records: list, path: str) -> None:
    lines = ["subject_id,label,age,gender,left_path,right_path,fold"]
    for r in records:
        fold = "" if r.fold is None else str(r.fold)
        lines.append(f"{r.subject_id},{r.label},{r.age!r},{r.gender},"
                     f"{r.left_path},{r.right_path},{fold}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_manifest(path: str) -> list:
    with open(path) as fh:
        lines = [ln.rstrip("\n") for ln in fh]
    if not lines or lines[0] != "subject_id,label,age,gender,left_path,right_path,fold":
        raise ParseError("bad manifest header", offset=0)
    records = []
    for i, ln in enumerate(lines[1:], 2):
        if not ln.strip():
            continue
        parts = ln.split(",")
        if len(parts) != 7:
            raise ParseError(f"line {i}: expected 7 fields, got {len(parts)}", offset=i)
        sid, label, age, gender, lp, rp, fold = parts
        if label not in CLASSES:
            raise ParseError(f"line {i}: unknown label {label!r}", offset=i)
        try:
            age_v = float(age)
        except ValueError as e:
            raise ParseError(f"line {i}: bad age {age!r}", offset=i) from e
        if age_v <= 0:
            raise ParseError(f"line {i}: age must be positive", offset=i)
        if gender not in ("M", "F"):
            raise ParseError(f"line {i}: bad gender {gender!r}", offset=i)
        records.append(SubjectRecord(sid, label, age_v, gender, lp, rp,
                                     int(fold) if fold else None))
    return records


# ---------------------------------------------------------------------------
# generation

def demographic_sampler(spec: CohortSpec, cls: str, rng) -> tuple:
    """(age, gender) draw: truncated-normal age, Bernoulli gender by class ratio."""
    if cls not in DEMOGRAPHICS:
        raise ValidationError(f"unknown class {cls!r}")
    mean, std, males, females = DEMOGRAPHICS[cls]
    if std == 0:
        age = mean
    else:
        age = rng.normal(mean, std)
        while not AGE_RANGE[0] <= age <= AGE_RANGE[1]:
            age = rng.normal(mean, std)
    gender = "M" if rng.random() < males / (males + females) else "F"
    return float(age), gender


def _random_field_coeffs(rng, b: int, amplitude: float) -> list:
    """Symmetric random coefficients for degrees 1..min(8, b-1).

    Per-coefficient variance amplitude^2 * 4pi / 80 gives the full-degree
    field a spatial variance of amplitude^2 (80 coefficients for l = 1..8).
    """
    n_coeffs = sum(2 * l + 1 for l in range(1, FIELD_MAX_DEGREE + 1))
    sigma = amplitude * np.sqrt(4.0 * np.pi / n_coeffs)
    blocks = [np.zeros((1, 1), dtype=np.complex128)]
    for l in range(1, min(FIELD_MAX_DEGREE, b - 1) + 1):
        blk = np.zeros((1, 2 * l + 1), dtype=np.complex128)
        blk[0, l] = rng.normal(0.0, sigma)
        for m in range(1, l + 1):
            re = rng.normal(0.0, sigma / np.sqrt(2))
            im = rng.normal(0.0, sigma / np.sqrt(2))
            blk[0, l + m] = re + 1j * im
            blk[0, l - m] = (-1) ** m * (re - 1j * im)
        blocks.append(blk)
    return blocks


def generate_subject(spec: CohortSpec, cls: str, seed_seq) -> tuple:
    """(left SphereSignal, right SphereSignal, age, gender) for one subject.

    seed_seq is a numpy SeedSequence; it is split into four independent
    streams (demographics, smooth field, site jitter/misregistration, noise)
    so that, e.g., truncated-age resampling cannot shift the field draws:
    with zero site depth the signals are bit-identical whatever the class.
    """
    b = spec.bandwidth
    grid = SphereGrid(b)
    pts = grid.points()
    demo_rng, field_rng, site_rng, noise_rng = map(np.random.default_rng,
                                                   seed_seq.spawn(4))
    age, gender = demographic_sampler(spec, cls, demo_rng)
    coeffs = {h: _random_field_coeffs(field_rng, b, spec.field_amplitude)
              for h in _HEMIS}
    jitter = (site_rng.normal(0.0, spec.depth_jitter_std)
              if spec.depth_jitter_std > 0 else 0.0)
    rot = small_random_rotation(site_rng, spec.misreg_std)
    rmat = euler_to_matrix(rot)
    mult = spec.class_multipliers[cls]
    signals = {}
    for hemi in _HEMIS:
        rotated = rotate_s2_coeffs(coeffs[hemi], rot)
        smooth = sht_inverse_arr(rotated, b).real[0]
        values = spec.base_mean + smooth
        for site in spec.sites:
            if site.hemisphere != hemi:
                continue
            center = rmat @ np.asarray(site.center)
            angle = sphere_angle(pts, center)
            scale = site.depth * mult * max(0.0, 1.0 + jitter)
            values = values - scale * np.exp(-((angle / site.radius) ** 2))
        if spec.noise_std > 0:
            values = values + noise_rng.normal(0.0, spec.noise_std, size=values.shape)
        values = np.maximum(values, CLAMP_MIN)
        signals[hemi] = SphereSignal(bandwidth=b, values=values[None],
                                     hemisphere=hemi)
    return signals["left"], signals["right"], age, gender


def generate_cohort(spec: CohortSpec, out_dir: str) -> list:
    """Write per-subject signal files under out_dir and return the records.

    Paths stored in the records are relative to out_dir.
    """
    import os

    os.makedirs(out_dir, exist_ok=True)
    order = [cls for cls in CLASSES for _ in range(spec.counts.get(cls, 0))]
    children = np.random.SeedSequence(spec.seed).spawn(len(order))
    records = []
    for i, (cls, child) in enumerate(zip(order, children)):
        left, right, age, gender = generate_subject(spec, cls, child)
        sid = f"S{i:04d}"
        lp, rp = f"{sid}_L.sphs", f"{sid}_R.sphs"
        save_sphere_signal(left, os.path.join(out_dir, lp))
        save_sphere_signal(right, os.path.join(out_dir, rp))
        records.append(SubjectRecord(sid, cls, age, gender, lp, rp))
    return records


def site_mean(values: np.ndarray, bandwidth: int, center, radius: float) -> float:
    """Mean of a (2b, 2b) sampled field over grid points within `radius` of
    `center` — the non-learned oracle statistic for separability checks."""
    pts = SphereGrid(bandwidth).points()
    mask = sphere_angle(pts, np.asarray(center, dtype=np.float64)) <= radius
    if not mask.any():
        raise ValidationError("no grid points inside the site")
    return float(np.asarray(values).reshape(2 * bandwidth, 2 * bandwidth)[mask].mean())


# ---------------------------------------------------------------------------
# dataset assembly

TASKS = {
    "ad-vs-cn": ("CN", "AD"),
    "mcip-vs-mcis": ("MCI-s", "MCI-p"),
}


def task_records(records: list, task: str) -> list:
    """Manifest records restricted to the task's two classes (negative, positive)."""
    if task not in TASKS:
        raise ValidationError(f"unknown task {task!r} (have {sorted(TASKS)})")
    neg, pos = TASKS[task]
    return [r for r in records if r.label in (neg, pos)]


def load_dataset(records: list, base_dir: str, task: str):
    """ArrayDataset over the task's records; label 1 is the positive class."""
    import os

    from .train import ArrayDataset

    neg, pos = TASKS[task]
    recs = task_records(records, task)
    if not recs:
        raise ValidationError(f"no subjects for task {task!r}")
    lefts, rights, labels = [], [], []
    for r in recs:
        ls = load_sphere_signal(os.path.join(base_dir, r.left_path))
        rs = load_sphere_signal(os.path.join(base_dir, r.right_path))
        lefts.append(ls.values)
        rights.append(rs.values)
        labels.append(1 if r.label == pos else 0)
    return ArrayDataset(np.stack(lefts), np.stack(rights), np.asarray(labels)), recs
