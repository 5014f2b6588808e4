"""Fourier analysis on the sphere and the rotation group.

Normalization conventions (fixed here once, used everywhere):

* Spherical harmonics are orthonormal with the Condon-Shortley phase,
  expressed through Wigner-d functions:
  ``Y_lm(beta, alpha) = sqrt((2l+1)/(4pi)) e^{i m alpha} d^l_{m0}(beta)``.
  The forward transform of the constant 1 is sqrt(4pi) at (l, m) = (0, 0).
* Rotation-group matrix elements are
  ``D^l_{mn}(alpha,beta,gamma) = e^{-i m alpha} d^l_{mn}(beta) e^{-i n gamma}``
  with ``int |D^l_{mn}|^2 dR = 8 pi^2 / (2l+1)`` under the Haar measure
  ``dR = d alpha sin(beta) d beta d gamma`` (total volume 8 pi^2).
* Forward SO(3) transform: ``block(l)[m,n] = int f(R) conj(D^l_{mn}(R)) dR``;
  synthesis: ``f(R) = sum_l (2l+1)/(8 pi^2) sum_{mn} block(l)[m,n] D^l_{mn}(R)``.
  The constant 1 transforms to 8 pi^2 at l = 0.
* Rotating a signal by ``e`` means ``(rot f)(x) = f(R_e^{-1} x)``.  On sphere
  coefficients this acts as ``a_l -> D^l(e) a_l``; on SO(3) blocks as
  ``B_l -> conj(D^l(e)) B_l`` (left translation).

Both transforms are exact (to rounding) for signals band-limited below the
grid bandwidth, by the equiangular sampling theorem with the quadrature
weights from :func:`scnn.grid.sht_weights`.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .errors import NumericError, ValidationError
from .grid import EulerZYZ, SO3Signal, SphereSignal, sht_weights
from . import wigner

_IMAG_RESIDUE_TOL = 1e-6


# ---------------------------------------------------------------------------
# spectrum containers

@dataclass
class S2Spectrum:
    """Spherical-harmonic coefficients up to (excluding) ``max_degree``.

    coeffs[l] is a complex array of shape (channels, 2l+1) indexed by
    (channel, m + l).
    """

    max_degree: int
    coeffs: list[np.ndarray]

    @property
    def channels(self) -> int:
        return self.coeffs[0].shape[0]

    def coeff(self, channel: int, l: int, m: int) -> complex:
        return self.coeffs[l][channel, m + l]

    def conj_symmetry_error(self) -> float:
        """Max deviation from coeff(l,-m) == (-1)^m conj(coeff(l,m)).

        Zero (to rounding) exactly when the spectrum synthesizes to a real
        signal.
        """
        worst = 0.0
        for l, c in enumerate(self.coeffs):
            m = np.arange(-l, l + 1)
            sign = np.where(m % 2 == 0, 1.0, -1.0)
            err = np.abs(c[:, ::-1] - sign * np.conj(c))
            worst = max(worst, float(err.max()))
        return worst


@dataclass
class SO3Spectrum:
    """Rotation-group Fourier blocks up to (excluding) ``max_degree``.

    blocks[l] is a complex array of shape (channels, 2l+1, 2l+1) indexed by
    (channel, m + l, n + l).
    """

    max_degree: int
    blocks: list[np.ndarray]

    @property
    def channels(self) -> int:
        return self.blocks[0].shape[0]

    def block(self, channel: int, l: int) -> np.ndarray:
        return self.blocks[l][channel]

    def conj_symmetry_error(self) -> float:
        """Max deviation from B(l,-m,-n) == (-1)^(m-n) conj(B(l,m,n))."""
        worst = 0.0
        for l, blk in enumerate(self.blocks):
            m = np.arange(-l, l + 1)
            sign = np.where((m[:, None] - m[None, :]) % 2 == 0, 1.0, -1.0)
            err = np.abs(blk[:, ::-1, ::-1] - sign * np.conj(blk))
            worst = max(worst, float(err.max()))
        return worst


# ---------------------------------------------------------------------------
# cached constant matrices

_MATRIX_CACHE: dict = {}


def _real_dtype(dtype) -> type:
    return np.float32 if np.dtype(dtype) in (np.float32, np.complex64) else np.float64


def _analysis_s2(b: int, L: int, dtype) -> list[np.ndarray]:
    """Per-l matrices A_l[j, m] folding quadrature weight, Legendre value and
    harmonic normalization: coeff(l,m) = sum_j A_l[j,m] G[j,m]."""
    rd = _real_dtype(dtype)
    key = ("a2", b, L, rd, wigner._SABOTAGE_SIGN)
    if key not in _MATRIX_CACHE:
        leg = wigner.legendre_m0(b, L)
        w = sht_weights(b)
        mats = []
        for l in range(L):
            norm = np.sqrt((2 * l + 1) / (4.0 * np.pi))
            mats.append((w[:, None] * leg[l] * norm).astype(rd))
        _MATRIX_CACHE[key] = mats
    return _MATRIX_CACHE[key]


def _synthesis_s2(b: int, L: int, dtype) -> list[np.ndarray]:
    rd = _real_dtype(dtype)
    key = ("s2", b, L, rd, wigner._SABOTAGE_SIGN)
    if key not in _MATRIX_CACHE:
        leg = wigner.legendre_m0(b, L)
        mats = []
        for l in range(L):
            norm = np.sqrt((2 * l + 1) / (4.0 * np.pi))
            mats.append((leg[l] * norm).astype(rd))
        _MATRIX_CACHE[key] = mats
    return _MATRIX_CACHE[key]


def _analysis_so3(b: int, L: int, dtype) -> list[np.ndarray]:
    """Per-l tensors A_l[j, m, n] = (pi/b) w_j d^l_{mn}(beta_j)."""
    rd = _real_dtype(dtype)
    key = ("a3", b, L, rd, wigner._SABOTAGE_SIGN)
    if key not in _MATRIX_CACHE:
        tabs = wigner.wigner_d_tables(b, L)
        w = (np.pi / b) * sht_weights(b)
        mats = [(w[:, None, None] * tabs[l]).astype(rd) for l in range(L)]
        _MATRIX_CACHE[key] = mats
    return _MATRIX_CACHE[key]


def _synthesis_so3(b: int, L: int, dtype) -> list[np.ndarray]:
    rd = _real_dtype(dtype)
    key = ("s3", b, L, rd, wigner._SABOTAGE_SIGN)
    if key not in _MATRIX_CACHE:
        tabs = wigner.wigner_d_tables(b, L)
        mats = [
            (tabs[l] * ((2 * l + 1) / (8.0 * np.pi ** 2))).astype(rd)
            for l in range(L)
        ]
        _MATRIX_CACHE[key] = mats
    return _MATRIX_CACHE[key]


def _mode_positions(L: int, n: int, sign: int = 1) -> np.ndarray:
    """Grid positions of the Fourier modes m = -(L-1)..(L-1) (times sign)."""
    m = np.arange(-(L - 1), L)
    return (sign * m) % n


def _degree_slice(L: int, l: int) -> np.ndarray:
    """Positions of m = -l..l inside the mode axis of width 2L-1."""
    return np.arange(L - 1 - l, L + l)


def _check_degrees(b: int, L: int):
    if L < 1 or L > b:
        raise ValidationError(f"max degree must be in [1, bandwidth]; got {L} at b={b}")


# ---------------------------------------------------------------------------
# array-level transforms (batched; accept Var or ndarray, see autodiff)

def sht_forward_arr(x, b: int, L: int):
    """Forward sphere transform of (..., 2b, 2b) arrays.

    Returns per-l coefficient arrays shaped (..., 2l+1) for l < L.
    """
    _check_degrees(b, L)
    g = ad.fftn(ad.to_complex(x), axes=(-1,))
    g = ad.take(g, _mode_positions(L, 2 * b), axis=-1)
    mats = _analysis_s2(b, L, ad.val(x).dtype)
    blocks = []
    for l in range(L):
        gl = ad.take(g, _degree_slice(L, l), axis=-1)
        blocks.append(ad.einsum("jm,...jm->...m", mats[l], gl))
    return blocks


def sht_inverse_arr(blocks, b: int):
    """Inverse sphere transform to a (..., 2b, 2b) complex array."""
    L = len(blocks)
    _check_degrees(b, L)
    mats = _synthesis_s2(b, L, ad.val(blocks[0]).dtype)
    h = None
    for l in range(L):
        hl = ad.einsum("jm,...m->...jm", mats[l], blocks[l])
        hl = ad.scatter(hl, _degree_slice(L, l), axis=-1, size=2 * L - 1)
        h = hl if h is None else ad.add(h, hl)
    h = ad.scatter(h, _mode_positions(L, 2 * b), axis=-1, size=2 * b)
    return ad.scale(ad.ifftn(h, axes=(-1,)), float(2 * b))


def so3_forward_arr(x, b: int, L: int):
    """Forward rotation-group transform of (..., 2b, 2b, 2b) arrays
    indexed (..., alpha, beta, gamma).

    Returns per-l blocks shaped (..., 2l+1, 2l+1) for l < L.
    """
    _check_degrees(b, L)
    g = ad.fftn(ad.to_complex(x), axes=(-3, -1))
    g = ad.take(g, _mode_positions(L, 2 * b, sign=-1), axis=-3)
    g = ad.take(g, _mode_positions(L, 2 * b, sign=-1), axis=-1)
    mats = _analysis_so3(b, L, ad.val(x).dtype)
    blocks = []
    for l in range(L):
        gl = ad.take(g, _degree_slice(L, l), axis=-3)
        gl = ad.take(gl, _degree_slice(L, l), axis=-1)
        blocks.append(ad.einsum("jmn,...mjn->...mn", mats[l], gl))
    return blocks


def so3_inverse_arr(blocks, b: int):
    """Inverse rotation-group transform to a (..., 2b, 2b, 2b) complex array."""
    L = len(blocks)
    _check_degrees(b, L)
    mats = _synthesis_so3(b, L, ad.val(blocks[0]).dtype)
    h = None
    for l in range(L):
        hl = ad.einsum("jmn,...mn->...mjn", mats[l], blocks[l])
        hl = ad.scatter(hl, _degree_slice(L, l), axis=-3, size=2 * L - 1)
        hl = ad.scatter(hl, _degree_slice(L, l), axis=-1, size=2 * L - 1)
        h = hl if h is None else ad.add(h, hl)
    h = ad.scatter(h, _mode_positions(L, 2 * b), axis=-3, size=2 * b)
    h = ad.scatter(h, _mode_positions(L, 2 * b), axis=-1, size=2 * b)
    # synthesis sums H[m,n] e^{-i(m alpha + n gamma)}: a forward FFT
    return ad.fftn(h, axes=(-3, -1))


# ---------------------------------------------------------------------------
# public single-signal API

def _to_real_checked(values: np.ndarray, what: str) -> np.ndarray:
    scale = max(1.0, float(np.abs(values.real).max()) if values.size else 1.0)
    residue = float(np.abs(values.imag).max()) if values.size else 0.0
    if residue > _IMAG_RESIDUE_TOL * scale:
        raise NumericError(
            f"{what}: imaginary residue {residue:.3e} exceeds tolerance; "
            "input spectrum does not describe a real signal"
        )
    return np.ascontiguousarray(values.real)


def sht_forward(signal: SphereSignal, max_degree: int | None = None) -> S2Spectrum:
    """Spherical-harmonic analysis of a sampled signal.

    The default maximum degree equals the grid bandwidth, for which the
    analysis-synthesis pair is exact on band-limited inputs.
    """
    b = signal.bandwidth
    L = b if max_degree is None else max_degree
    return S2Spectrum(L, sht_forward_arr(signal.values, b, L))


def sht_inverse(spectrum: S2Spectrum, bandwidth: int,
                hemisphere: str = "left") -> SphereSignal:
    vals = sht_inverse_arr(spectrum.coeffs, bandwidth)
    return SphereSignal(bandwidth, _to_real_checked(vals, "sht_inverse"), hemisphere)


def so3_ft_forward(signal: SO3Signal, max_degree: int | None = None) -> SO3Spectrum:
    """Rotation-group Fourier analysis of a sampled signal."""
    b = signal.bandwidth
    L = b if max_degree is None else max_degree
    return SO3Spectrum(L, so3_forward_arr(signal.values, b, L))


def so3_ft_inverse(spectrum: SO3Spectrum, bandwidth: int) -> SO3Signal:
    vals = so3_inverse_arr(spectrum.blocks, bandwidth)
    return SO3Signal(bandwidth, _to_real_checked(vals, "so3_ft_inverse"))


# ---------------------------------------------------------------------------
# rotation of band-limited signals (spectral; exact for band-limited inputs)

def rotate_s2_coeffs(coeffs: list[np.ndarray], e: EulerZYZ) -> list[np.ndarray]:
    out = []
    for l, c in enumerate(coeffs):
        dmat = wigner.wigner_D(l, e.alpha, e.beta, e.gamma)
        out.append(np.einsum("mn,...n->...m", dmat, c))
    return out


def rotate_so3_blocks(blocks: list[np.ndarray], e: EulerZYZ) -> list[np.ndarray]:
    out = []
    for l, blk in enumerate(blocks):
        dmat = wigner.wigner_D(l, e.alpha, e.beta, e.gamma)
        out.append(np.einsum("mk,...kn->...mn", np.conj(dmat), blk))
    return out


def rotate_sphere_signal(signal: SphereSignal, e: EulerZYZ) -> SphereSignal:
    """Rotate a band-limited sphere signal: output(x) = input(R_e^{-1} x)."""
    b = signal.bandwidth
    coeffs = rotate_s2_coeffs(sht_forward_arr(signal.values, b, b), e)
    vals = sht_inverse_arr(coeffs, b)
    return SphereSignal(b, _to_real_checked(vals, "rotate_sphere_signal"),
                        signal.hemisphere)


def rotate_so3_signal(signal: SO3Signal, e: EulerZYZ) -> SO3Signal:
    """Left-translate a band-limited SO(3) signal: output(R) = input(R_e^{-1} R)."""
    b = signal.bandwidth
    blocks = rotate_so3_blocks(so3_forward_arr(signal.values, b, b), e)
    vals = so3_inverse_arr(blocks, b)
    return SO3Signal(b, _to_real_checked(vals, "rotate_so3_signal"))
