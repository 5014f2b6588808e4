"""Numeric self-checks behind ``scnn verify``.

Each check exercises one load-bearing identity of the engine against an
independent reference and reports its worst measured error next to the
tolerance it must beat:

* constant-signal normalization of the sphere transform,
* sphere / rotation-group transform roundtrips on band-limited signals,
* orthogonality of the cached rotation tables the transforms are built from,
* rotation equivariance of both convolution layers against coefficient-space
  rotation by independently computed rotation matrices,
* reverse-mode gradients against central differences,
* the ROC area against a direct pairwise comparison count.

``sabotage=True`` flips the sign of one cached rotation-table entry for the
duration of the run.  Every check that compares those tables against an
independent reference must then fail — orthogonality, equivariance, and the
real-signal roundtrips (the flip breaks the conjugate pairing that keeps
synthesized signals real).  Checks that are self-consistent under the flip
(gradients versus finite differences of the same forward pass, ROC counting,
degree-zero normalization) still pass.  That asymmetry proves the suite is
wired to the production tables and fails loudly when they are wrong.
"""

from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True)
class CheckResult:
    name: str
    error: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.error <= self.tolerance


def _rand_s2_coeffs(rng, shape, degrees):
    """Random coefficients of a real band-limited sphere signal."""
    import numpy as np

    blocks = []
    for l in range(degrees):
        blk = np.zeros(shape + (2 * l + 1,), dtype=np.complex128)
        blk[..., l] = rng.normal(size=shape)
        for m in range(1, l + 1):
            re = rng.normal(size=shape)
            im = rng.normal(size=shape)
            blk[..., l + m] = re + 1j * im
            blk[..., l - m] = (-1) ** m * (re - 1j * im)
        blocks.append(blk)
    return blocks


def _rand_so3_blocks(rng, shape, degrees):
    """Random coefficient blocks of a real band-limited rotation signal."""
    import numpy as np

    blocks = []
    for l in range(degrees):
        n = 2 * l + 1
        blk = rng.normal(size=shape + (n, n)) + 1j * rng.normal(size=shape + (n, n))
        m = np.arange(-l, l + 1)
        ph = np.where((m[:, None] - m[None, :]) % 2 == 0, 1.0, -1.0)
        blocks.append(0.5 * (blk + ph * np.conj(blk[..., ::-1, ::-1])))
    return blocks


def _block_err(got, want):
    import numpy as np

    return max(float(np.max(np.abs(g - w))) for g, w in zip(got, want))


def _run_checks(smoke: bool):
    import numpy as np

    from . import layers as ly
    from . import spectral as sp
    from .evaluate import roc_auc
    from .grid import random_rotation
    from .train import finite_diff_check
    from .wigner import wigner_d_tables

    b = 2 if smoke else 8
    trials = 1 if smoke else 3
    rng = np.random.default_rng(20_240 + b)
    results = []

    # constant normalization: analysis of 1 puts sqrt(4 pi) in degree zero
    ones = np.ones((1, 1, 2 * b, 2 * b))
    blocks = sp.sht_forward_arr(ones, b, b)
    err = abs(float(blocks[0][0, 0, 0].real) - np.sqrt(4 * np.pi))
    err += abs(float(blocks[0][0, 0, 0].imag))
    for blk in blocks[1:]:
        err = max(err, float(np.max(np.abs(blk))))
    results.append(CheckResult("constant normalization", err, 1e-12))

    # transform roundtrips on synthesized band-limited signals
    c2 = _rand_s2_coeffs(rng, (2, 1), b)
    back = sp.sht_forward_arr(sp.sht_inverse_arr(c2, b).real, b, b)
    results.append(CheckResult("sphere transform roundtrip",
                               _block_err(back, c2), 1e-9))
    c3 = _rand_so3_blocks(rng, (2, 1), b)
    back3 = sp.so3_forward_arr(sp.so3_inverse_arr(c3, b).real, b, b)
    results.append(CheckResult("rotation transform roundtrip",
                               _block_err(back3, c3), 1e-9))

    # cached rotation tables must be orthogonal row by row
    err = 0.0
    for l, tab in enumerate(wigner_d_tables(b, b)):
        eye = np.eye(2 * l + 1)
        gram = np.einsum("jmn,jmk->jnk", tab, tab)
        err = max(err, float(np.max(np.abs(gram - eye))))
    results.append(CheckResult("rotation table orthogonality", err, 1e-9))

    # layer equivariance: rotate-then-convolve == convolve-then-rotate
    def rel(a, ref):
        return float(np.linalg.norm(a - ref) / max(np.linalg.norm(ref), 1e-300))

    ci, co = 2, 3
    err2 = err3 = 0.0
    for _ in range(trials):
        e = random_rotation(rng)
        coeffs = _rand_s2_coeffs(rng, (1, ci), b)
        f = sp.sht_inverse_arr(coeffs, b).real
        kern = [rng.normal(size=(co, ci, 2 * l + 1))
                + 1j * rng.normal(size=(co, ci, 2 * l + 1)) for l in range(b)]
        bias = rng.normal(size=co)
        out = np.asarray(ly.s2_conv(kern, bias, f, b))
        f_rot = sp.sht_inverse_arr(sp.rotate_s2_coeffs(coeffs, e), b).real
        out_rot = np.asarray(ly.s2_conv(kern, bias, f_rot, b))
        want = sp.so3_inverse_arr(
            sp.rotate_so3_blocks(sp.so3_forward_arr(out, b, b), e), b).real
        err2 = max(err2, rel(out_rot, want))

        xb = _rand_so3_blocks(rng, (1, ci), b)
        x = sp.so3_inverse_arr(xb, b).real
        kern3 = [rng.normal(size=(co, ci, 2 * l + 1, 2 * l + 1))
                 + 1j * rng.normal(size=(co, ci, 2 * l + 1, 2 * l + 1))
                 for l in range(b)]
        out = np.asarray(ly.so3_conv(kern3, bias, x, b))
        x_rot = sp.so3_inverse_arr(sp.rotate_so3_blocks(xb, e), b).real
        out_rot = np.asarray(ly.so3_conv(kern3, bias, x_rot, b))
        want = sp.so3_inverse_arr(
            sp.rotate_so3_blocks(sp.so3_forward_arr(out, b, b), e), b).real
        err3 = max(err3, rel(out_rot, want))
    results.append(CheckResult("sphere conv equivariance", err2, 1e-6))
    results.append(CheckResult("rotation conv equivariance", err3, 1e-6))

    # reverse-mode gradients vs central differences on a tiny full model
    if smoke:
        model = ly.build_spherical_model(5, input_bandwidth=2,
                                         trunk_bandwidths=(1, 1, 1),
                                         channels=(2, 2, 2))
        max_entries = 60
    else:
        model = ly.build_spherical_model(5, input_bandwidth=4,
                                         trunk_bandwidths=(2, 2, 2),
                                         channels=(2, 3, 4))
        max_entries = 300
    nb = 2 * model.arch["input_bandwidth"]
    batch = (rng.normal(size=(2, 1, nb, nb)), rng.normal(size=(2, 1, nb, nb)),
             np.array([0, 1]))
    err = finite_diff_check(model, batch, max_entries=max_entries)
    results.append(CheckResult("gradient consistency", err, 1e-5))

    # ROC area against the pairwise comparison count (ties count half)
    err = 0.0
    for _ in range(5 if smoke else 20):
        n = 40
        labels = (rng.random(n) < 0.5).astype(int)
        if labels.min() == labels.max():
            labels[0] = 1 - labels[0]
        probs = np.round(rng.random(n), 2)     # force some ties
        pos = probs[labels == 1]
        neg = probs[labels == 0]
        diff = pos[:, None] - neg[None, :]
        pairwise = (np.sum(diff > 0) + 0.5 * np.sum(diff == 0)) / diff.size
        err = max(err, abs(roc_auc(probs, labels).auc - pairwise))
    results.append(CheckResult("roc area pairwise identity", err, 1e-12))
    return results


def run_suite(smoke: bool = False, sabotage: bool = False):
    """Run all checks; returns a list of CheckResult."""
    from . import wigner

    if sabotage:
        wigner.set_sabotage(True)
    try:
        return _run_checks(smoke)
    finally:
        if sabotage:
            wigner.set_sabotage(False)
