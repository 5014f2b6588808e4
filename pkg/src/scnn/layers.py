"""Network layers, model assembly, parameter counting and checkpoints.

The two-hemisphere classifier applies one shared trunk to the left and right
sphere signals and concatenates the pooled features:

    trunk:  SphereConv -> BN -> ReLU -> GroupConv -> BN -> ReLU
            -> GroupConv -> BN -> ReLU -> weighted global average pooling
    head:   concat(left, right) -> fully connected -> softmax

The sphere/group convolutions are computed spectrally.  With hats denoting
transforms from :mod:`scnn.spectral` and real inputs:

* sphere layer: ``out_hat_l = (8 pi^2 / (2l+1)) * conj(f_hat_l) (x) psi_hat_l``
  (outer product over (m, n)), equal to the correlation
  ``g(R) = int f(x) psi(R^{-1} x) dOmega`` evaluated on the rotation grid;
* group layer:  ``out_hat_l = f_hat_l @ psi_hat_l^dagger``, equal to
  ``g(R) = int f(Q) psi(R^{-1} Q) dQ``.

Kernels are parameterized directly by their spectra (free complex
coefficients per degree below the layer's output bandwidth).  Each forward
pass symmetrizes the raw coefficients so the effective kernel is real in the
spatial domain; initialization draws already-symmetric spectra with per-degree
variance chosen to keep signal variance roughly constant through the layer.

The planar reference model mirrors the trunk with stride-2 3x3 zero-padded
convolutions on the raw sampled matrices, 2D batch norm, and uniform global
average pooling, with channel counts doubled.
"""

from __future__ import annotations

import io
import json
import struct

import numpy as np

from . import autodiff as ad
from .autodiff import Var
from .errors import ParseError, ValidationError
from .grid import grid_betas, wgap_weights
from .spectral import (sht_forward_arr, so3_forward_arr, so3_inverse_arr)

CHECKPOINT_MAGIC = b"SCNN"
CHECKPOINT_VERSION = 1
BN_EPS = 1e-5
BN_MOMENTUM = 0.1

_DTYPE_CODES = {0: np.float64, 1: np.complex128, 2: np.float32, 3: np.complex64}
_DTYPE_TO_CODE = {np.dtype(v): k for k, v in _DTYPE_CODES.items()}


# ---------------------------------------------------------------------------
# kernel symmetrization (real spatial realization)

def _sym_s2(kernel, l: int):
    """Project sphere-kernel coefficients onto the real-signal subspace:
    psi(l,-m) = (-1)^m conj(psi(l,m))."""
    m = np.arange(-l, l + 1)
    phase = np.where(m % 2 == 0, 1.0, -1.0)
    mirrored = ad.mul(ad.conj(ad.flip(kernel, (-1,))), phase)
    return ad.scale(ad.add(kernel, mirrored), 0.5)


def _sym_so3(kernel, l: int):
    """Same projection for group kernels: psi(l,-m,-n) = (-1)^(m-n) conj(psi(l,m,n))."""
    m = np.arange(-l, l + 1)
    phase = np.where((m[:, None] - m[None, :]) % 2 == 0, 1.0, -1.0)
    mirrored = ad.mul(ad.conj(ad.flip(kernel, (-2, -1))), phase)
    return ad.scale(ad.add(kernel, mirrored), 0.5)


# ---------------------------------------------------------------------------
# layers (functional; parameters passed in as Var or ndarray)

def s2_conv(kernels, bias, x, out_bandwidth: int):
    """Sphere convolution producing a rotation-group feature map.

    kernels: per-l arrays (out_c, in_c, 2l+1); x: (B, in_c, 2b, 2b) real.
    Returns (B, out_c, 2L, 2L, 2L) real with L = out_bandwidth.
    """
    L = out_bandwidth
    b_in = ad.val(x).shape[-1] // 2
    f_hat = sht_forward_arr(x, b_in, L)
    out_blocks = []
    for l in range(L):
        psi = _sym_s2(kernels[l], l)
        scale_l = 8.0 * np.pi ** 2 / (2 * l + 1)
        blk = ad.einsum("bim,oin->bomn", ad.conj(f_hat[l]), psi)
        out_blocks.append(ad.scale(blk, scale_l))
    out = ad.real(so3_inverse_arr(out_blocks, L))
    c = ad.val(bias).shape[0]
    return ad.add(out, ad.reshape(bias, (1, c, 1, 1, 1)))


def so3_conv(kernels, bias, x, out_bandwidth: int):
    """Rotation-group convolution (per-degree block matrix products).

    kernels: per-l arrays (out_c, in_c, 2l+1, 2l+1); x: (B, in_c, 2b, 2b, 2b).
    Returns (B, out_c, 2L, 2L, 2L) real with L = out_bandwidth.
    """
    L = out_bandwidth
    b_in = ad.val(x).shape[-1] // 2
    f_hat = so3_forward_arr(x, b_in, L)
    out_blocks = []
    for l in range(L):
        psi = _sym_so3(kernels[l], l)
        out_blocks.append(ad.einsum("bimk,oink->bomn", f_hat[l], ad.conj(psi)))
    out = ad.real(so3_inverse_arr(out_blocks, L))
    c = ad.val(bias).shape[0]
    return ad.add(out, ad.reshape(bias, (1, c, 1, 1, 1)))


def batch_norm(x, gamma, beta, running_mean, running_var, train: bool):
    """Per-channel batch normalization over all non-channel axes.

    Works for both rank-5 rotation-group maps and rank-4 planar maps
    (channel axis 1).  In training mode the batch statistics are used and the
    running buffers (plain arrays) are updated in place.
    """
    nd = ad.val(x).ndim
    axes = (0,) + tuple(range(2, nd))
    c = ad.val(gamma).shape[0]
    bshape = (1, c) + (1,) * (nd - 2)
    if train:
        mu = ad.mean_axes(x, axes, keepdims=True)
        xc = ad.sub(x, mu)
        var = ad.mean_axes(ad.mul(xc, xc), axes, keepdims=True)
        running_mean *= 1.0 - BN_MOMENTUM
        running_mean += BN_MOMENTUM * ad.val(mu).reshape(c)
        running_var *= 1.0 - BN_MOMENTUM
        running_var += BN_MOMENTUM * ad.val(var).reshape(c)
    else:
        mu = running_mean.reshape(bshape)
        xc = ad.sub(x, mu)
        var = running_var.reshape(bshape)
    inv = ad.pow_const(ad.add(var, np.asarray(BN_EPS, dtype=ad.val(x).dtype)), -0.5)
    y = ad.mul(xc, inv)
    return ad.add(ad.mul(y, ad.reshape(gamma, bshape)), ad.reshape(beta, bshape))


def wgap(x, weights):
    """Weighted global average pooling of rotation-group maps.

    Averages uniformly over alpha and gamma and with the supplied normalized
    weights over beta: out[b,c] = (1/(2b)^2) sum_{a,g} sum_j w_j x[b,c,a,j,g].
    """
    n = ad.val(x).shape[-1]
    w = np.asarray(weights, dtype=ad.val(x).dtype).reshape(1, 1, 1, n, 1)
    pooled = ad.sum_axes(ad.mul(x, w), (2, 3, 4))
    return ad.scale(pooled, 1.0 / (n * n))


def conv2d(weight, bias, x, stride: int = 2, pad: int = 1):
    """Planar convolution; weight (out_c, in_c, k, k), x (B, C, H, W)."""
    k = ad.val(weight).shape[-1]
    patches = ad.extract_patches(x, k, stride, pad)
    out = ad.einsum("bchwuv,ocuv->bohw", patches, weight)
    c = ad.val(bias).shape[0]
    return ad.add(out, ad.reshape(bias, (1, c, 1, 1)))


def fc_logits(weight, bias, features):
    return ad.add(ad.einsum("bf,kf->bk", features, weight), bias)


def fc_softmax(weight, bias, features):
    """Class probabilities of the linear head: softmax(W features + bias)."""
    z = fc_logits(weight, bias, features)
    return ad.exp(ad.log_softmax(z, axis=-1))


# ---------------------------------------------------------------------------
# model container

class Model:
    """Named tensors (parameters and buffers) plus an architecture descriptor."""

    def __init__(self, arch: dict):
        self.arch = dict(arch)
        self.tensors: dict[str, np.ndarray] = {}
        self.trainable: dict[str, bool] = {}

    def add(self, name: str, value: np.ndarray, trainable: bool = True):
        if name in self.tensors:
            raise ValidationError(f"duplicate tensor name {name!r}")
        self.tensors[name] = value
        self.trainable[name] = trainable

    def parameter_names(self) -> list[str]:
        return [n for n, t in self.trainable.items() if t]

    def copy(self) -> "Model":
        m = Model(self.arch)
        for n, v in self.tensors.items():
            m.add(n, v.copy(), self.trainable[n])
        return m

    def make_vars(self) -> dict[str, Var]:
        """Var views of the trainable tensors, sharing storage with the model."""
        return {n: Var(self.tensors[n], requires_grad=True)
                for n in self.parameter_names()}


def count_parameters(model: Model) -> int:
    """Total trainable scalar count; complex entries count as two."""
    total = 0
    for name in model.parameter_names():
        t = model.tensors[name]
        total += t.size * (2 if np.iscomplexobj(t) else 1)
    return total


# ---------------------------------------------------------------------------
# initialization helpers

def _complex_dtype(dtype):
    return np.complex64 if np.dtype(dtype) == np.float32 else np.complex128


def _init_s2_kernel(rng, out_c, in_c, l, dtype):
    """Symmetric random sphere-kernel spectrum with E|psi_lm|^2 = 1/(4pi (2l+1) in_c)."""
    sigma = np.sqrt(1.0 / (4.0 * np.pi * (2 * l + 1) * in_c))
    k = np.zeros((out_c, in_c, 2 * l + 1), dtype=_complex_dtype(dtype))
    k[..., l] = rng.normal(0.0, sigma, size=(out_c, in_c))
    for m in range(1, l + 1):
        re = rng.normal(0.0, sigma / np.sqrt(2), size=(out_c, in_c))
        im = rng.normal(0.0, sigma / np.sqrt(2), size=(out_c, in_c))
        k[..., l + m] = re + 1j * im
        k[..., l - m] = (-1) ** m * (re - 1j * im)
    return k

def _init_so3_kernel(rng, out_c, in_c, l, dtype):
    """Symmetric random group-kernel spectrum with E|psi_lmn|^2 = 1/((2l+1) in_c)."""
    sigma = np.sqrt(1.0 / ((2 * l + 1) * in_c))
    k = np.zeros((out_c, in_c, 2 * l + 1, 2 * l + 1), dtype=_complex_dtype(dtype))
    for m in range(-l, l + 1):
        for n in range(-l, l + 1):
            if (m, n) == (0, 0):
                k[..., l, l] = rng.normal(0.0, sigma, size=(out_c, in_c))
            elif m > 0 or (m == 0 and n > 0):
                re = rng.normal(0.0, sigma / np.sqrt(2), size=(out_c, in_c))
                im = rng.normal(0.0, sigma / np.sqrt(2), size=(out_c, in_c))
                k[..., l + m, l + n] = re + 1j * im
                k[..., l - m, l - n] = (-1) ** (m - n) * (re - 1j * im)
    return k


def _add_bn(model: Model, name: str, c: int, dtype):
    model.add(f"{name}.gamma", np.ones(c, dtype=dtype))
    model.add(f"{name}.beta", np.zeros(c, dtype=dtype))
    model.add(f"{name}.rmean", np.zeros(c, dtype=dtype), trainable=False)
    model.add(f"{name}.rvar", np.ones(c, dtype=dtype), trainable=False)


def build_spherical_model(seed: int, input_bandwidth: int = 64,
                          trunk_bandwidths=(32, 16, 8),
                          channels=(32, 64, 128),
                          in_channels: int = 1,
                          dtype=np.float64) -> Model:
    """Two-hemisphere spherical classifier with a shared trunk.

    trunk_bandwidths are the output bandwidths of the three convolution
    stages (non-increasing, each at most the previous stage's bandwidth);
    channels are their output channel counts.
    """
    bw = [input_bandwidth, *trunk_bandwidths]
    for prev, cur in zip(bw, bw[1:]):
        if cur > prev:
            raise ValidationError(f"trunk bandwidths must not increase: {bw}")
    rng = np.random.default_rng(seed)
    model = Model({
        "kind": "spherical",
        "input_bandwidth": int(input_bandwidth),
        "trunk_bandwidths": [int(v) for v in trunk_bandwidths],
        "channels": [int(c) for c in channels],
        "in_channels": int(in_channels),
        "dtype": np.dtype(dtype).name,
    })
    c0, c1, c2 = channels
    l0, l1, l2 = trunk_bandwidths
    for l in range(l0):
        model.add(f"s2.kernel.l{l}", _init_s2_kernel(rng, c0, in_channels, l, dtype))
    model.add("s2.bias", np.zeros(c0, dtype=dtype))
    _add_bn(model, "bn0", c0, dtype)
    for l in range(l1):
        model.add(f"so3a.kernel.l{l}", _init_so3_kernel(rng, c1, c0, l, dtype))
    model.add("so3a.bias", np.zeros(c1, dtype=dtype))
    _add_bn(model, "bn1", c1, dtype)
    for l in range(l2):
        model.add(f"so3b.kernel.l{l}", _init_so3_kernel(rng, c2, c1, l, dtype))
    model.add("so3b.bias", np.zeros(c2, dtype=dtype))
    _add_bn(model, "bn2", c2, dtype)
    fan_in = 2 * c2
    model.add("fc.weight",
              rng.normal(0.0, 1.0 / np.sqrt(fan_in), size=(2, fan_in)).astype(dtype))
    model.add("fc.bias", np.zeros(2, dtype=dtype))
    return model


def build_fc_model(seed: int, in_features: int = 2, dtype=np.float64) -> Model:
    """Linear softmax classifier on concatenated per-hemisphere features.

    Used for closed-form gradient verification and toy separable problems;
    left/right inputs are plain (B, in_features/2) feature vectors.
    """
    if in_features % 2:
        raise ValidationError("in_features must be even (two hemispheres)")
    rng = np.random.default_rng(seed)
    model = Model({"kind": "fc", "in_features": int(in_features),
                   "dtype": np.dtype(dtype).name})
    model.add("fc.weight",
              rng.normal(0.0, 1.0 / np.sqrt(in_features), size=(2, in_features)).astype(dtype))
    model.add("fc.bias", np.zeros(2, dtype=dtype))
    return model


def build_planar_model(seed: int, input_size: int = 128,
                       channels=(64, 128, 256),
                       in_channels: int = 1,
                       dtype=np.float64) -> Model:
    """Planar reference classifier on the raw sampled matrices."""
    rng = np.random.default_rng(seed)
    model = Model({
        "kind": "planar",
        "input_size": int(input_size),
        "channels": [int(c) for c in channels],
        "in_channels": int(in_channels),
        "dtype": np.dtype(dtype).name,
    })
    cs = [in_channels, *channels]
    for i, (ci, co) in enumerate(zip(cs, cs[1:])):
        w = rng.normal(0.0, np.sqrt(2.0 / (ci * 9)), size=(co, ci, 3, 3)).astype(dtype)
        model.add(f"conv{i}.weight", w)
        model.add(f"conv{i}.bias", np.zeros(co, dtype=dtype))
        _add_bn(model, f"bn{i}", co, dtype)
    fan_in = 2 * channels[-1]
    model.add("fc.weight",
              rng.normal(0.0, 1.0 / np.sqrt(fan_in), size=(2, fan_in)).astype(dtype))
    model.add("fc.bias", np.zeros(2, dtype=dtype))
    return model


def aligned_bank_init(model: Model, seed: int,
                      width_range=(0.25, 0.65), freeze: bool = True) -> Model:
    """Re-initialize the spherical trunk as an impulse-aligned filter bank.

    The training loss only sees globally pooled features, which are invariant
    to rotating every kernel of a layer by one fixed rotation (the next
    layer can undo it).  Gradient descent therefore never controls *where*
    on the grid a learned detector responds relative to the stimulus that
    drives it, and activation maps of normally-trained models peak at an
    arbitrary fixed offset from the input structure they detect.  Models
    whose activation maps are meant to localize input structure need the
    alignment installed at initialization:

    * sphere-stage kernels become zonal (azimuth-independent) bumps around
      the north pole with log-spaced angular widths over ``width_range``
      radians and mostly negative polarity (one in four positive), so each
      channel responds maximally when its bump sits on matching input
      structure — at that structure's own grid coordinates;
    * group-stage kernels become near-identity channel mixtures whose
      per-degree blocks are multiples of the identity matrix — spatially a
      band-limited bump at the identity rotation — so deeper layers mix
      channels without displacing their maps.

    Each layer keeps the total spectral energy of the draw it replaces.
    With ``freeze`` (the default) the kernels are marked non-trainable so
    optimization, which is blind to the alignment, cannot drift it; batch
    norm, biases and the fully connected head stay trainable.
    """
    if model.arch["kind"] != "spherical":
        raise ValidationError("aligned bank init requires the spherical model")
    lo, hi = float(width_range[0]), float(width_range[1])
    if not 0 < lo <= hi:
        raise ValidationError(f"invalid width range ({lo}, {hi})")
    rng = np.random.default_rng(seed)
    l0, l1, l2 = model.arch["trunk_bandwidths"]
    c0, c1, c2 = model.arch["channels"]
    cin = model.arch["in_channels"]
    dtype = np.dtype(model.arch["dtype"])
    cdtype = _complex_dtype(dtype)

    betas = grid_betas(l0)
    widths = np.exp(np.linspace(np.log(lo), np.log(hi), c0))
    signs = np.where(np.arange(c0) % 4 == 3, 1.0, -1.0)
    prof = signs[:, None] * np.exp(-((betas[None, :] / widths[:, None]) ** 2))
    field = np.ascontiguousarray(np.broadcast_to(
        prof[:, None, :, None], (c0, cin, 2 * l0, 2 * l0)))
    blocks = sht_forward_arr(field, l0, l0)
    e_old = sum(float((np.abs(model.tensors[f"s2.kernel.l{l}"]) ** 2).sum())
                for l in range(l0))
    e_new = sum(float((np.abs(bl) ** 2).sum()) for bl in blocks)
    scale = np.sqrt(e_old / e_new)
    for l in range(l0):
        model.tensors[f"s2.kernel.l{l}"] = (blocks[l] * scale).astype(cdtype)

    for name, L, co, ci in (("so3a", l1, c1, c0), ("so3b", l2, c2, c1)):
        gain = np.zeros((co, ci))
        gain[np.arange(co), np.arange(co) % ci] = 1.0
        gain += 0.1 * rng.normal(size=(co, ci))
        e_old = sum(float((np.abs(model.tensors[f"{name}.kernel.l{l}"]) ** 2).sum())
                    for l in range(L))
        e_new = sum(float((gain ** 2).sum()) * (2 * l + 1) for l in range(L))
        scale = np.sqrt(e_old / e_new)
        for l in range(L):
            eye = np.eye(2 * l + 1)
            model.tensors[f"{name}.kernel.l{l}"] = (
                gain[:, :, None, None] * scale * eye[None, None]).astype(cdtype)

    if freeze:
        for n in model.tensors:
            if ".kernel." in n:
                model.trainable[n] = False
    return model


# ---------------------------------------------------------------------------
# forward passes

def _p(model: Model, params, name: str):
    return params[name] if params is not None and name in params else model.tensors[name]


def _spherical_trunk(model: Model, params, x, train: bool):
    arch = model.arch
    l0, l1, l2 = arch["trunk_bandwidths"]
    h = s2_conv([_p(model, params, f"s2.kernel.l{l}") for l in range(l0)],
                _p(model, params, "s2.bias"), x, l0)
    h = ad.relu(batch_norm(h, _p(model, params, "bn0.gamma"), _p(model, params, "bn0.beta"),
                           model.tensors["bn0.rmean"], model.tensors["bn0.rvar"], train))
    h = so3_conv([_p(model, params, f"so3a.kernel.l{l}") for l in range(l1)],
                 _p(model, params, "so3a.bias"), h, l1)
    h = ad.relu(batch_norm(h, _p(model, params, "bn1.gamma"), _p(model, params, "bn1.beta"),
                           model.tensors["bn1.rmean"], model.tensors["bn1.rvar"], train))
    h = so3_conv([_p(model, params, f"so3b.kernel.l{l}") for l in range(l2)],
                 _p(model, params, "so3b.bias"), h, l2)
    h = ad.relu(batch_norm(h, _p(model, params, "bn2.gamma"), _p(model, params, "bn2.beta"),
                           model.tensors["bn2.rmean"], model.tensors["bn2.rvar"], train))
    return h


def _planar_trunk(model: Model, params, x, train: bool):
    h = x
    for i in range(3):
        h = conv2d(_p(model, params, f"conv{i}.weight"),
                   _p(model, params, f"conv{i}.bias"), h)
        h = ad.relu(batch_norm(h, _p(model, params, f"bn{i}.gamma"),
                               _p(model, params, f"bn{i}.beta"),
                               model.tensors[f"bn{i}.rmean"],
                               model.tensors[f"bn{i}.rvar"], train))
    return h


def model_forward(model: Model, left, right, params=None, train: bool = False,
                  want_maps: bool = False):
    """Run the two-hemisphere classifier.

    left/right: (B, C, 2b, 2b) sampled measures.  Both hemispheres run through
    the shared trunk as one stacked batch, so in training mode the batch-norm
    statistics are computed jointly over the two hemispheres.  Returns a dict
    with ``log_probs`` (B, 2) and, when requested, the post-activation final
    trunk maps per hemisphere (inputs to the pooling layer, used for
    activation mapping).
    """
    kind = model.arch["kind"]
    if kind == "fc":
        feats = ad.concat([left, right], axis=1)
        logits = fc_logits(_p(model, params, "fc.weight"),
                           _p(model, params, "fc.bias"), feats)
        out = {"log_probs": ad.log_softmax(logits, axis=-1), "features": feats}
        if want_maps:
            raise ValidationError("fc models have no spatial maps")
        return out
    nb = ad.val(left).shape[0]
    both = ad.concat([left, right], axis=0)
    if kind == "spherical":
        maps = _spherical_trunk(model, params, both, train)
        w = wgap_weights(model.arch["trunk_bandwidths"][-1])
        pooled = wgap(maps, w)
    elif kind == "planar":
        maps = _planar_trunk(model, params, both, train)
        pooled = ad.mean_axes(maps, (2, 3))
    else:
        raise ValidationError(f"unknown model kind {kind!r}")
    half = np.arange(nb)
    lfeat = ad.take(pooled, half, axis=0)
    rfeat = ad.take(pooled, half + nb, axis=0)
    feats = ad.concat([lfeat, rfeat], axis=1)
    logits = fc_logits(_p(model, params, "fc.weight"), _p(model, params, "fc.bias"), feats)
    out = {"log_probs": ad.log_softmax(logits, axis=-1), "features": feats}
    if want_maps:
        out["left_maps"] = ad.take(maps, half, axis=0)
        out["right_maps"] = ad.take(maps, half + nb, axis=0)
    return out


def predict_probs(model: Model, left, right) -> np.ndarray:
    """Class probabilities in inference mode (no gradient tracking)."""
    out = model_forward(model, np.asarray(left), np.asarray(right), train=False)
    lp = ad.val(out["log_probs"])
    return np.exp(lp)


# ---------------------------------------------------------------------------
# checkpoint serialization

def save_checkpoint(model: Model, path: str) -> None:
    """Write the model to the binary checkpoint format.

    Layout (all integers little-endian): magic "SCNN", version u32,
    length-prefixed UTF-8 architecture descriptor (JSON), tensor count u32,
    then per tensor: length-prefixed name, dtype code u8 (0 f64, 1 c128,
    2 f32, 3 c64), trainable flag u8, rank u32, dims u32 each, raw
    little-endian values (complex as re/im pairs).
    """
    buf = io.BytesIO()
    buf.write(CHECKPOINT_MAGIC)
    buf.write(struct.pack("<I", CHECKPOINT_VERSION))
    desc = json.dumps(model.arch, sort_keys=True).encode("utf-8")
    buf.write(struct.pack("<I", len(desc)))
    buf.write(desc)
    buf.write(struct.pack("<I", len(model.tensors)))
    for name, t in model.tensors.items():
        nb = name.encode("utf-8")
        buf.write(struct.pack("<I", len(nb)))
        buf.write(nb)
        code = _DTYPE_TO_CODE.get(t.dtype)
        if code is None:
            raise ValidationError(f"unsupported tensor dtype {t.dtype}")
        buf.write(struct.pack("<BB", code, 1 if model.trainable[name] else 0))
        buf.write(struct.pack("<I", t.ndim))
        buf.write(struct.pack(f"<{t.ndim}I", *t.shape))
        data = np.ascontiguousarray(t)
        if data.dtype.byteorder == ">":
            data = data.astype(data.dtype.newbyteorder("<"))
        buf.write(data.tobytes())
    with open(path, "wb") as fh:
        fh.write(buf.getvalue())


def load_checkpoint(path: str) -> Model:
    with open(path, "rb") as fh:
        raw = fh.read()
    off = 0

    def need(n: int) -> bytes:
        nonlocal off
        if off + n > len(raw):
            raise ParseError("checkpoint truncated", offset=off)
        piece = raw[off:off + n]
        off += n
        return piece

    if need(4) != CHECKPOINT_MAGIC:
        raise ParseError("bad checkpoint magic", offset=0)
    version = struct.unpack("<I", need(4))[0]
    if version != CHECKPOINT_VERSION:
        raise ParseError(f"unsupported checkpoint version {version}", offset=4)
    dlen = struct.unpack("<I", need(4))[0]
    try:
        arch = json.loads(need(dlen).decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise ParseError(f"bad architecture descriptor: {e}", offset=12) from e
    model = Model(arch)
    count = struct.unpack("<I", need(4))[0]
    for _ in range(count):
        nlen = struct.unpack("<I", need(4))[0]
        name = need(nlen).decode("utf-8")
        code, trainable = struct.unpack("<BB", need(2))
        if code not in _DTYPE_CODES:
            raise ParseError(f"unknown dtype code {code} for tensor {name!r}",
                             offset=off - 2)
        dt = np.dtype(_DTYPE_CODES[code])
        rank = struct.unpack("<I", need(4))[0]
        shape = struct.unpack(f"<{rank}I", need(4 * rank)) if rank else ()
        n_items = int(np.prod(shape, dtype=np.int64)) if shape else 1
        nbytes = n_items * dt.itemsize
        data = np.frombuffer(need(nbytes), dtype=dt).reshape(shape).copy()
        model.add(name, data, bool(trainable))
    if off != len(raw):
        raise ParseError("trailing bytes after last tensor", offset=off)
    return model
