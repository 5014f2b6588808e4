"""Transform correctness: roundtrips, normalization, Parseval, and the
rotation action checked against scipy's spherical harmonics."""

import numpy as np
import numpy.testing as npt
import pytest
from hypothesis import given, strategies as st

import synth
from scnn.errors import NumericError, ValidationError
from scnn.grid import (EulerZYZ, SO3Signal, SphereGrid, SphereSignal,
                       euler_to_matrix, grid_alphas, grid_betas,
                       random_rotation, sht_weights)
from scnn.spectral import (S2Spectrum, SO3Spectrum, rotate_s2_coeffs,
                           rotate_so3_blocks, rotate_sphere_signal,
                           rotate_so3_signal, sht_forward, sht_forward_arr,
                           sht_inverse, sht_inverse_arr, so3_forward_arr,
                           so3_ft_forward, so3_ft_inverse, so3_inverse_arr)


@pytest.mark.parametrize("b", [2, 4, 8, 16])
def test_sht_roundtrip(b, rng):
    coeffs = synth.rand_s2_coeffs(rng, (2, 3), b)
    f = sht_inverse_arr(coeffs, b)
    npt.assert_allclose(f.imag, 0, atol=1e-11)
    back = sht_forward_arr(f.real, b, b)
    assert synth.block_err(back, coeffs) < 1e-9


@pytest.mark.parametrize("b", [2, 4, 8, 16])
def test_so3_roundtrip(b, rng):
    blocks = synth.rand_so3_blocks(rng, (1, 2), b)
    f = so3_inverse_arr(blocks, b)
    npt.assert_allclose(f.imag, 0, atol=1e-11)
    back = so3_forward_arr(f.real, b, b)
    assert synth.block_err(back, blocks) < 1e-9


def test_constant_normalization():
    b = 4
    ones = np.ones((1, 2 * b, 2 * b))
    coeffs = sht_forward_arr(ones, b, b)
    npt.assert_allclose(coeffs[0][0, 0], np.sqrt(4 * np.pi), atol=1e-13)
    for blk in coeffs[1:]:
        npt.assert_allclose(blk, 0, atol=1e-13)

    ones3 = np.ones((1, 2 * b, 2 * b, 2 * b))
    blocks = so3_forward_arr(ones3, b, b)
    npt.assert_allclose(blocks[0][0, 0, 0], 8 * np.pi ** 2, rtol=1e-13)
    for blk in blocks[1:]:
        npt.assert_allclose(blk, 0, atol=1e-10)


def test_parseval_s2(rng):
    b = 8
    coeffs = synth.rand_s2_coeffs(rng, (1,), b)
    f = sht_inverse_arr(coeffs, b).real
    quad = float((sht_weights(b)[:, None] * f[0] ** 2).sum())
    spectral = sum(float((np.abs(c) ** 2).sum()) for c in coeffs)
    npt.assert_allclose(quad, spectral, rtol=1e-12)


def test_parseval_so3(rng):
    b = 4
    blocks = synth.rand_so3_blocks(rng, (1,), b)
    f = so3_inverse_arr(blocks, b).real
    w = (np.pi / b) * sht_weights(b)
    quad = float((w[None, :, None] * f[0] ** 2).sum())
    spectral = sum((2 * l + 1) / (8 * np.pi ** 2) * float((np.abs(B) ** 2).sum())
                   for l, B in enumerate(blocks))
    npt.assert_allclose(quad, spectral, rtol=1e-12)


def test_basis_matches_scipy():
    """Synthesis of a unit coefficient reproduces scipy's Y_lm on the grid
    (orthonormal, Condon-Shortley phase)."""
    from scipy.special import sph_harm_y

    b = 6
    beta = grid_betas(b)[:, None]
    alpha = grid_alphas(b)[None, :]
    for l, m in [(0, 0), (1, 0), (1, 1), (2, -1), (3, 2), (5, -4)]:
        coeffs = [np.zeros((1, 2 * k + 1), dtype=complex) for k in range(b)]
        coeffs[l][0, m + l] = 1.0
        f = sht_inverse_arr(coeffs, b)[0]
        want = sph_harm_y(l, m, beta, alpha)
        npt.assert_allclose(f, want, atol=1e-12, err_msg=f"l={l} m={m}")


def test_rotation_matches_point_evaluation(rng):
    """(rot f)(x) = f(R^-1 x), with f evaluated off-grid through scipy."""
    from scipy.special import sph_harm_y

    b = 5
    coeffs = synth.rand_s2_coeffs(rng, (1,), b)
    e = random_rotation(rng)
    rot = rotate_s2_coeffs(coeffs, e)
    f_rot_grid = sht_inverse_arr(rot, b).real[0]

    r_inv = euler_to_matrix(e).T
    pts = SphereGrid(b).points().reshape(-1, 3) @ r_inv.T
    theta = np.arccos(np.clip(pts[:, 2], -1, 1))
    phi = np.arctan2(pts[:, 1], pts[:, 0])
    want = np.zeros(len(pts), dtype=complex)
    for l in range(b):
        for m in range(-l, l + 1):
            want += coeffs[l][0, m + l] * sph_harm_y(l, m, theta, phi)
    npt.assert_allclose(f_rot_grid, want.real.reshape(2 * b, 2 * b), atol=1e-10)


def test_rotation_composes_and_preserves_norm(rng):
    b = 4
    coeffs = synth.rand_s2_coeffs(rng, (2,), b)
    e1, e2 = random_rotation(rng), random_rotation(rng)
    once = rotate_s2_coeffs(rotate_s2_coeffs(coeffs, e2), e1)
    from scnn.grid import matrix_to_euler

    e12 = matrix_to_euler(euler_to_matrix(e1) @ euler_to_matrix(e2))
    both = rotate_s2_coeffs(coeffs, e12)
    assert synth.block_err(once, both) < 1e-12
    for c, r in zip(coeffs, once):
        npt.assert_allclose(np.linalg.norm(c), np.linalg.norm(r), rtol=1e-12)

    blocks = synth.rand_so3_blocks(rng, (1,), b)
    once3 = rotate_so3_blocks(rotate_so3_blocks(blocks, e2), e1)
    both3 = rotate_so3_blocks(blocks, e12)
    assert synth.block_err(once3, both3) < 1e-12


def test_identity_rotation_is_noop(rng):
    b = 3
    coeffs = synth.rand_s2_coeffs(rng, (1,), b)
    same = rotate_s2_coeffs(coeffs, EulerZYZ(0.0, 0.0, 0.0))
    assert synth.block_err(same, coeffs) < 1e-15


def test_signal_wrappers(rng):
    b = 4
    sig = SphereSignal(bandwidth=b, values=synth.rand_sphere_signal(rng, b, 2))
    spec = sht_forward(sig)
    assert isinstance(spec, S2Spectrum)
    assert spec.max_degree == b and spec.channels == 2
    assert spec.conj_symmetry_error() < 1e-12
    back = sht_inverse(spec, b)
    npt.assert_allclose(back.values, sig.values, atol=1e-12)

    rot = rotate_sphere_signal(sig, random_rotation(rng))
    assert rot.hemisphere == sig.hemisphere
    npt.assert_allclose(
        (sht_weights(b)[:, None] * rot.values ** 2).sum(),
        (sht_weights(b)[:, None] * sig.values ** 2).sum(), rtol=1e-10)

    sig3 = SO3Signal(bandwidth=b, values=synth.rand_so3_signal(rng, b, 1))
    spec3 = so3_ft_forward(sig3)
    assert isinstance(spec3, SO3Spectrum)
    assert spec3.conj_symmetry_error() < 1e-12
    back3 = so3_ft_inverse(spec3, b)
    npt.assert_allclose(back3.values, sig3.values, atol=1e-12)
    rot3 = rotate_so3_signal(sig3, random_rotation(rng))
    assert rot3.values.shape == sig3.values.shape


def test_max_degree_truncation(rng):
    b = 8
    sig = SphereSignal(bandwidth=b, values=synth.rand_sphere_signal(rng, b, 1))
    spec = sht_forward(sig, max_degree=3)
    assert spec.max_degree == 3 and len(spec.coeffs) == 3
    full = sht_forward(sig)
    for l in range(3):
        npt.assert_allclose(spec.coeffs[l], full.coeffs[l], atol=1e-13)


def test_degree_validation(rng):
    b = 4
    x = np.zeros((1, 2 * b, 2 * b))
    with pytest.raises(ValidationError):
        sht_forward_arr(x, b, b + 1)
    with pytest.raises(ValidationError):
        sht_forward_arr(x, b, 0)


def test_imaginary_residue_guard(rng):
    """Synthesizing from an asymmetric spectrum cannot silently drop a large
    imaginary part."""
    b = 3
    coeffs = [np.zeros((1, 2 * l + 1), dtype=complex) for l in range(b)]
    coeffs[1][0, 2] = 1.0      # m=+1 alone: not conjugate-symmetric
    spec = S2Spectrum(max_degree=b, coeffs=coeffs)
    with pytest.raises(NumericError):
        sht_inverse(spec, b)


@given(st.integers(min_value=2, max_value=8), st.integers(min_value=0, max_value=10_000))
def test_transform_linearity(b, seed):
    rng = np.random.default_rng(seed)
    x = synth.rand_sphere_signal(rng, b, 1)
    y = synth.rand_sphere_signal(rng, b, 1)
    a = float(rng.normal())
    lhs = sht_forward_arr(a * x + y, b, b)
    fx = sht_forward_arr(x, b, b)
    fy = sht_forward_arr(y, b, b)
    rhs = [a * cx + cy for cx, cy in zip(fx, fy)]
    assert synth.block_err(lhs, rhs) < 1e-9


@given(st.integers(min_value=0, max_value=10_000))
def test_rotation_preserves_so3_band_limit(seed):
    rng = np.random.default_rng(seed)
    b = 3
    sig = SO3Signal(bandwidth=b, values=synth.rand_so3_signal(rng, b, 1))
    rot = rotate_so3_signal(sig, random_rotation(rng))
    # rotating a band-limited signal stays band-limited: roundtrip is lossless
    back = so3_ft_inverse(so3_ft_forward(rot), b)
    npt.assert_allclose(back.values, rot.values, atol=1e-9)
