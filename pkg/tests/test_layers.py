"""Convolution layers against brute-force integrals, equivariance, pooling
invariances, parameter counts, and the checkpoint format."""

import numpy as np
import numpy.testing as npt
import pytest

import synth
from scnn import autodiff as ad
from scnn import layers as ly
from scnn.errors import ParseError, ValidationError
from scnn.grid import (EulerZYZ, grid_alphas, grid_betas, random_rotation,
                       sht_weights, sphere_angle, wgap_weights)
from scnn.spectral import (rotate_s2_coeffs, rotate_so3_blocks,
                           sht_inverse_arr, so3_forward_arr, so3_inverse_arr)


def test_s2_conv_equivariance(rng):
    b, ci, co = 6, 2, 3
    for _ in range(3):
        coeffs = synth.rand_s2_coeffs(rng, (2, ci), b)
        f = sht_inverse_arr(coeffs, b).real
        kern = [rng.normal(size=(co, ci, 2 * l + 1))
                + 1j * rng.normal(size=(co, ci, 2 * l + 1)) for l in range(b)]
        bias = rng.normal(size=co)
        e = random_rotation(rng)
        out = np.asarray(ly.s2_conv(kern, bias, f, b))
        f_rot = sht_inverse_arr(rotate_s2_coeffs(coeffs, e), b).real
        out_rot = np.asarray(ly.s2_conv(kern, bias, f_rot, b))
        want = so3_inverse_arr(
            rotate_so3_blocks(so3_forward_arr(out, b, b), e), b).real
        assert synth.rel_err(out_rot, want) < 1e-12


def test_so3_conv_equivariance(rng):
    b, ci, co = 4, 2, 3
    for _ in range(3):
        blocks = synth.rand_so3_blocks(rng, (2, ci), b)
        x = so3_inverse_arr(blocks, b).real
        kern = [rng.normal(size=(co, ci, 2 * l + 1, 2 * l + 1))
                + 1j * rng.normal(size=(co, ci, 2 * l + 1, 2 * l + 1))
                for l in range(b)]
        bias = rng.normal(size=co)
        e = random_rotation(rng)
        out = np.asarray(ly.so3_conv(kern, bias, x, b))
        x_rot = so3_inverse_arr(rotate_so3_blocks(blocks, e), b).real
        out_rot = np.asarray(ly.so3_conv(kern, bias, x_rot, b))
        want = so3_inverse_arr(
            rotate_so3_blocks(so3_forward_arr(out, b, b), e), b).real
        assert synth.rel_err(out_rot, want) < 1e-12


def test_s2_conv_matches_quadrature(rng):
    """out(R) = sum_grid w * f * (kernel rotated by R), the correlation
    integral evaluated the slow way."""
    b = 3
    fc = synth.rand_s2_coeffs(rng, (1, 1), b)
    f = sht_inverse_arr(fc, b).real
    pc = synth.rand_s2_coeffs(rng, (1, 1), b)
    out = np.asarray(ly.s2_conv(pc, np.zeros(1), f, b))
    al, w = grid_alphas(b), sht_weights(b)
    be = grid_betas(b)
    brute = np.zeros((2 * b, 2 * b, 2 * b))
    for a in range(2 * b):
        for j in range(2 * b):
            for g in range(2 * b):
                e = EulerZYZ(al[a], be[j], al[g])
                psi = sht_inverse_arr(rotate_s2_coeffs(pc, e), b).real[0, 0]
                brute[a, j, g] = np.sum(w[:, None] * f[0, 0] * psi)
    assert synth.rel_err(out[0, 0], brute) < 1e-12


def test_so3_conv_matches_quadrature(rng):
    b = 2
    fb = synth.rand_so3_blocks(rng, (1, 1), b)
    x = so3_inverse_arr(fb, b).real
    pb = synth.rand_so3_blocks(rng, (1, 1), b)
    out = np.asarray(ly.so3_conv(pb, np.zeros(1), x, b))
    al, be = grid_alphas(b), grid_betas(b)
    w3 = (np.pi / b) * sht_weights(b)
    brute = np.zeros((2 * b, 2 * b, 2 * b))
    for a in range(2 * b):
        for j in range(2 * b):
            for g in range(2 * b):
                e = EulerZYZ(al[a], be[j], al[g])
                psi = so3_inverse_arr(rotate_so3_blocks(pb, e), b).real[0, 0]
                brute[a, j, g] = np.sum(w3[None, :, None] * x[0, 0] * psi)
    assert synth.rel_err(out[0, 0], brute) < 1e-12


def test_conv_reduces_bandwidth(rng):
    b, L = 4, 2
    f = synth.rand_sphere_signal(rng, b, 1, batch=1)
    kern = [np.zeros((2, 1, 2 * l + 1), dtype=complex) for l in range(L)]
    out = np.asarray(ly.s2_conv(kern, np.ones(2), f, L))
    assert out.shape == (1, 2, 2 * L, 2 * L, 2 * L)
    npt.assert_allclose(out, 1.0)       # zero kernel leaves only the bias


def test_batch_norm_train_and_eval(rng):
    x = rng.normal(loc=3.0, scale=2.0, size=(8, 4, 6, 6))
    gamma, beta = np.ones(4), np.zeros(4)
    rm, rv = np.zeros(4), np.ones(4)
    y = np.asarray(ly.batch_norm(x, gamma, beta, rm, rv, train=True))
    npt.assert_allclose(y.mean(axis=(0, 2, 3)), 0, atol=1e-12)
    npt.assert_allclose(y.std(axis=(0, 2, 3)), 1, atol=1e-3)
    # momentum-0.1 buffer update from zero-init
    npt.assert_allclose(rm, 0.1 * x.mean(axis=(0, 2, 3)), atol=1e-12)
    npt.assert_allclose(rv, 0.9 + 0.1 * x.var(axis=(0, 2, 3)), atol=1e-12)

    rm2, rv2 = rm.copy(), rv.copy()
    z = np.asarray(ly.batch_norm(x, gamma, beta, rm2, rv2, train=False))
    npt.assert_allclose(rm2, rm)        # eval must not touch the buffers
    want = (x - rm.reshape(1, 4, 1, 1)) / np.sqrt(rv.reshape(1, 4, 1, 1) + ly.BN_EPS)
    npt.assert_allclose(z, want, atol=1e-12)


def test_wgap_constant_and_shift_invariance(rng):
    b = 4
    w = wgap_weights(b)
    const = np.full((2, 3, 2 * b, 2 * b, 2 * b), 2.5)
    npt.assert_allclose(np.asarray(ly.wgap(const, w)), 2.5, atol=1e-13)

    x = rng.normal(size=(1, 2, 2 * b, 2 * b, 2 * b))
    base = np.asarray(ly.wgap(x, w))
    for axis in (2, 4):                  # alpha and gamma rolls are exact
        rolled = np.asarray(ly.wgap(np.roll(x, 3, axis=axis), w))
        npt.assert_allclose(rolled, base, atol=1e-13)


def test_wgap_rotation_invariance_quality(rng):
    """With true quadrature weights the pooled features are exactly invariant
    under rotation of a band-limited map; the production sin weights are a
    close approximation (the layer normalizes them to sum 1)."""
    b = 4
    blocks = synth.rand_so3_blocks(rng, (1, 2), b)
    x = so3_inverse_arr(blocks, b).real
    e = random_rotation(rng)
    x_rot = so3_inverse_arr(rotate_so3_blocks(blocks, e), b).real

    exact = sht_weights(b) / sht_weights(b).sum()
    p, p_rot = (np.asarray(ly.wgap(v, exact)) for v in (x, x_rot))
    npt.assert_allclose(p_rot, p, atol=1e-12)

    sin_w = wgap_weights(b)
    q, q_rot = (np.asarray(ly.wgap(v, sin_w)) for v in (x, x_rot))
    assert np.max(np.abs(q_rot - q)) < 5e-2
    assert np.max(np.abs(q - p)) < 5e-2


def test_conv2d_matches_naive(rng):
    x = rng.normal(size=(2, 3, 8, 8))
    w = rng.normal(size=(4, 3, 3, 3))
    bias = rng.normal(size=4)
    out = np.asarray(ly.conv2d(w, bias, x, stride=2, pad=1))
    assert out.shape == (2, 4, 4, 4)
    xp = np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1)))
    for bi in (0, 1):
        for o in (0, 3):
            for i in (0, 3):
                for j in (1, 2):
                    patch = xp[bi, :, 2 * i:2 * i + 3, 2 * j:2 * j + 3]
                    want = (patch * w[o]).sum() + bias[o]
                    npt.assert_allclose(out[bi, o, i, j], want, atol=1e-12)


def test_parameter_counts():
    m = ly.build_spherical_model(0, input_bandwidth=64,
                                 trunk_bandwidths=(32, 16, 8),
                                 channels=(32, 64, 128))
    s2 = sum(m.tensors[f"s2.kernel.l{l}"].size * 2 for l in range(32))
    s2 += m.tensors["s2.bias"].size
    assert s2 == 65_568
    assert ly.count_parameters(m) == 33_555_618

    assert ly.count_parameters(ly.build_planar_model(
        0, input_size=128, channels=(64, 128, 256))) == 371_586

    desk = ly.build_spherical_model(0, input_bandwidth=16,
                                    trunk_bandwidths=(8, 4, 2),
                                    channels=(8, 16, 32))
    assert ly.count_parameters(desk) == 33_066
    assert ly.count_parameters(ly.build_planar_model(
        0, input_size=32, channels=(16, 32, 64))) == 23_778


def test_build_validation():
    with pytest.raises(ValidationError):
        ly.build_spherical_model(0, input_bandwidth=8,
                                 trunk_bandwidths=(16, 4, 2),
                                 channels=(2, 2, 2))
    with pytest.raises(ValidationError):
        ly.build_spherical_model(0, input_bandwidth=8,
                                 trunk_bandwidths=(4, 8, 2),
                                 channels=(2, 2, 2))
    with pytest.raises(ValidationError):
        ly.build_fc_model(0, in_features=3)


def test_model_forward_shapes(rng):
    m = ly.build_spherical_model(1, input_bandwidth=4,
                                 trunk_bandwidths=(2, 2, 2), channels=(2, 3, 4))
    left = rng.normal(size=(3, 1, 8, 8))
    right = rng.normal(size=(3, 1, 8, 8))
    out = ly.model_forward(m, left, right, train=False, want_maps=True)
    probs = np.exp(np.asarray(ad.val(out["log_probs"])))
    npt.assert_allclose(probs.sum(axis=1), 1.0, atol=1e-12)
    assert ad.val(out["left_maps"]).shape == (3, 4, 4, 4, 4)
    assert ad.val(out["right_maps"]).shape == (3, 4, 4, 4, 4)

    p = ly.predict_probs(m, left, right)
    npt.assert_allclose(p, probs, atol=1e-12)


def test_spherical_model_invariant_to_z_rotation_rolls(rng):
    """Rolling both inputs along alpha is an exact z-rotation on the grid;
    the pooled trunk features, hence the probabilities, must not move.
    Rolls are even so the rotation lands on grid points of the half-bandwidth
    trunk stages too."""
    m = ly.build_spherical_model(2, input_bandwidth=4,
                                 trunk_bandwidths=(2, 2, 2), channels=(2, 3, 4))
    left = rng.normal(size=(2, 1, 8, 8))
    right = rng.normal(size=(2, 1, 8, 8))
    base = ly.predict_probs(m, left, right)
    for k in (2, 4, 6):
        rolled = ly.predict_probs(m, np.roll(left, k, axis=-1),
                                  np.roll(right, k, axis=-1))
        npt.assert_allclose(rolled, base, atol=1e-10)


def test_planar_model_not_roll_invariant(rng):
    m = ly.build_planar_model(2, input_size=8, channels=(2, 3, 4))
    left = rng.normal(size=(2, 1, 8, 8))
    right = rng.normal(size=(2, 1, 8, 8))
    base = ly.predict_probs(m, left, right)
    rolled = ly.predict_probs(m, np.roll(left, 3, axis=-1),
                              np.roll(right, 3, axis=-1))
    assert np.max(np.abs(rolled - base)) > 1e-6


def test_fc_model_closed_form(rng):
    m = ly.build_fc_model(0, in_features=4)
    w, b = m.tensors["fc.weight"], m.tensors["fc.bias"]
    left = rng.normal(size=(4, 2))
    right = rng.normal(size=(4, 2))
    out = ly.model_forward(m, left, right, train=False)
    feats = np.concatenate([left, right], axis=1)
    z = feats @ w.T + b
    want = np.exp(z - np.log(np.exp(z).sum(axis=1, keepdims=True)))
    npt.assert_allclose(np.exp(ad.val(out["log_probs"])), want, atol=1e-12)


def test_model_copy_is_deep(rng):
    m = ly.build_spherical_model(3, input_bandwidth=2,
                                 trunk_bandwidths=(1, 1, 1), channels=(2, 2, 2))
    c = m.copy()
    c.tensors["fc.bias"][...] = 99.0
    assert not np.array_equal(m.tensors["fc.bias"], c.tensors["fc.bias"])
    assert m.arch == c.arch and m.trainable == c.trainable


def test_checkpoint_roundtrip(tmp_path, rng):
    m = ly.build_spherical_model(4, input_bandwidth=4,
                                 trunk_bandwidths=(2, 2, 2), channels=(2, 3, 4))
    m.tensors["bn1.rmean"][...] = rng.normal(size=3)   # non-default buffer state
    p1 = tmp_path / "a.ckpt"
    p2 = tmp_path / "b.ckpt"
    ly.save_checkpoint(m, str(p1))
    m2 = ly.load_checkpoint(str(p1))
    assert m2.arch == m.arch and m2.trainable == m.trainable
    for name, t in m.tensors.items():
        assert t.dtype == m2.tensors[name].dtype
        npt.assert_array_equal(t, m2.tensors[name])
    ly.save_checkpoint(m2, str(p2))
    assert p1.read_bytes() == p2.read_bytes()


def test_checkpoint_rejects_corruption(tmp_path):
    m = ly.build_fc_model(0)
    path = tmp_path / "m.ckpt"
    ly.save_checkpoint(m, str(path))
    blob = bytearray(path.read_bytes())

    bad = tmp_path / "bad.ckpt"
    bad.write_bytes(b"XCNN" + bytes(blob[4:]))
    with pytest.raises(ParseError):
        ly.load_checkpoint(str(bad))

    bad.write_bytes(bytes(blob[:len(blob) // 2]))
    with pytest.raises(ParseError):
        ly.load_checkpoint(str(bad))

    bad.write_bytes(bytes(blob) + b"\x00")
    with pytest.raises(ParseError):
        ly.load_checkpoint(str(bad))


def test_eval_forward_does_not_mutate(rng):
    m = ly.build_spherical_model(5, input_bandwidth=2,
                                 trunk_bandwidths=(1, 1, 1), channels=(2, 2, 2))
    before = {k: v.copy() for k, v in m.tensors.items()}
    ly.predict_probs(m, rng.normal(size=(2, 1, 4, 4)),
                     rng.normal(size=(2, 1, 4, 4)))
    for k, v in before.items():
        npt.assert_array_equal(m.tensors[k], v)


def test_aligned_bank_init_freezes_kernels_and_reuses_seed():
    m = ly.build_spherical_model(3, input_bandwidth=8,
                                 trunk_bandwidths=(4, 2, 2), channels=(4, 4, 8))
    ly.aligned_bank_init(m, 11)
    kernels = [n for n in m.tensors if ".kernel." in n]
    assert kernels
    assert all(not m.trainable[n] for n in kernels)
    assert m.trainable["fc.weight"] and m.trainable["bn0.gamma"]

    m2 = ly.build_spherical_model(3, input_bandwidth=8,
                                  trunk_bandwidths=(4, 2, 2), channels=(4, 4, 8))
    ly.aligned_bank_init(m2, 11, freeze=False)
    assert all(m2.trainable[n] for n in kernels)
    for n in kernels:
        npt.assert_array_equal(m.tensors[n], m2.tensors[n])

    planar = ly.build_planar_model(1, input_size=8, channels=(2, 3, 4))
    with pytest.raises(ValidationError):
        ly.aligned_bank_init(planar, 0)
    with pytest.raises(ValidationError):
        ly.aligned_bank_init(m, 0, width_range=(0.5, 0.2))


def _impulse_shifts(model, rng):
    """Median angular distance between a clean input bump and the gamma=0
    argmax of each final trunk map's response to it."""
    b_in = model.arch["input_bandwidth"]
    b_out = model.arch["trunk_bandwidths"][-1]
    al, be = grid_alphas(b_out), grid_betas(b_out)
    A, B = np.meshgrid(grid_alphas(b_in), grid_betas(b_in), indexing="ij")
    X = np.stack([np.sin(B) * np.cos(A), np.sin(B) * np.sin(A), np.cos(B)])
    flat = np.full((1, 1, 2 * b_in, 2 * b_in), 1.0)
    base = ly.model_forward(model, flat, flat, want_maps=True)["left_maps"][0]
    shifts = []
    for _ in range(2):
        v = rng.normal(size=3)
        v /= np.linalg.norm(v)
        ang = np.arccos(np.clip(np.einsum("i,iab->ab", v, X), -1, 1))
        bump = np.exp(-((ang / 0.45) ** 2))
        out = ly.model_forward(model, (1.0 - bump.T)[None][None], flat,
                               want_maps=True)["left_maps"][0]
        delta = np.abs(ad.val(out) - ad.val(base))[:, :, :, 0]
        for c in range(delta.shape[0]):
            ai, bi = np.unravel_index(np.argmax(delta[c]), delta[c].shape)
            p = np.array([np.sin(be[bi]) * np.cos(al[ai]),
                          np.sin(be[bi]) * np.sin(al[ai]), np.cos(be[bi])])
            shifts.append(np.degrees(sphere_angle(p, v)))
    return float(np.median(shifts))


def test_aligned_bank_impulse_response_is_centered(rng):
    """Global pooling makes the loss blind to a fixed rotational offset
    between input and feature coordinates, so detectors of a normally
    initialized trunk respond at arbitrary offsets from the stimulus; the
    aligned bank pins the response to the stimulus's own coordinates."""
    kw = dict(input_bandwidth=16, trunk_bandwidths=(8, 4, 4), channels=(8, 8, 8))
    aligned = ly.build_spherical_model(4, **kw)
    ly.aligned_bank_init(aligned, 5)
    assert _impulse_shifts(aligned, rng) <= 25.0

    default = ly.build_spherical_model(4, **kw)
    assert _impulse_shifts(default, rng) > 40.0
