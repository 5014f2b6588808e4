"""Equiangular sphere and rotation-group grids, ZYZ Euler angles, quadrature.

Conventions used throughout the package:

* A bandwidth-``b`` sphere grid has ``2b x 2b`` points with colatitudes
  ``beta_j = pi * (2j + 1) / (4b)`` (offset rows, poles excluded) and
  azimuths ``alpha_k = pi * k / b``.
* Rotations are intrinsic ZYZ: ``R = Rz(alpha) @ Ry(beta) @ Rz(gamma)``,
  acting on signals by ``(R . f)(x) = f(R^{-1} x)``.
* The rotation-group grid at bandwidth ``b`` is the product grid
  ``alpha_a = pi * a / b``, ``beta_j`` as above, ``gamma_g = pi * g / b``,
  each axis of length ``2b``.
* Sphere points are the ``gamma = 0`` coset representatives: the grid point
  ``(beta, alpha)`` is ``Rz(alpha) @ Ry(beta) @ north_pole``.

Quadrature weights follow the equiangular sampling theorem: with
``sht_weights(b)`` the weighted sum over the grid integrates any function
band-limited below ``b`` exactly (so ``sum_jk w_j f_jk`` reproduces the
sphere integral, e.g. ``4 pi`` for the constant 1).
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import ValidationError

NORTH_POLE = np.array([0.0, 0.0, 1.0])


def _check_bandwidth(b: int) -> int:
    if not isinstance(b, (int, np.integer)) or b < 1:
        raise ValidationError(f"bandwidth must be a positive integer, got {b!r}")
    return int(b)


@dataclass(frozen=True)
class EulerZYZ:
    """Intrinsic ZYZ Euler angles (alpha, beta, gamma), beta in [0, pi]."""

    alpha: float
    beta: float
    gamma: float

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.alpha, self.beta, self.gamma)

    def matrix(self) -> np.ndarray:
        return euler_to_matrix(self)

    def compose(self, other: "EulerZYZ") -> "EulerZYZ":
        """Angles of the composition self @ other (apply ``other`` first)."""
        return matrix_to_euler(self.matrix() @ other.matrix())

    def inverse(self) -> "EulerZYZ":
        return matrix_to_euler(self.matrix().T)


IDENTITY_ROTATION = EulerZYZ(0.0, 0.0, 0.0)


def _rot_z(angle: float) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def _rot_y(angle: float) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def euler_to_matrix(e: EulerZYZ) -> np.ndarray:
    """3x3 rotation matrix Rz(alpha) @ Ry(beta) @ Rz(gamma)."""
    return _rot_z(e.alpha) @ _rot_y(e.beta) @ _rot_z(e.gamma)


def matrix_to_euler(r: np.ndarray) -> EulerZYZ:
    """Extract ZYZ angles from a rotation matrix.

    The gimbal-locked cases (beta near 0 or pi) are resolved by fixing
    gamma = 0 and folding the whole z-rotation into alpha.
    """
    r = np.asarray(r, dtype=np.float64)
    if r.shape != (3, 3):
        raise ValidationError(f"expected a 3x3 matrix, got shape {r.shape}")
    cos_beta = np.clip(r[2, 2], -1.0, 1.0)
    beta = float(np.arccos(cos_beta))
    sin_beta = np.hypot(r[0, 2], r[1, 2])
    if sin_beta > 1e-12:
        alpha = float(np.arctan2(r[1, 2], r[0, 2]))
        gamma = float(np.arctan2(r[2, 1], -r[2, 0]))
    elif cos_beta > 0.0:
        # beta ~ 0: matrix is a pure z-rotation by alpha + gamma
        alpha = float(np.arctan2(r[1, 0], r[0, 0]))
        gamma = 0.0
    else:
        # beta ~ pi: Rz(alpha) @ Ry(pi) with gamma folded in
        alpha = float(np.arctan2(-r[1, 0], -r[0, 0]))
        gamma = 0.0
    return EulerZYZ(alpha, beta, gamma)


def random_rotation(rng: np.random.Generator) -> EulerZYZ:
    """Haar-uniform random rotation."""
    alpha = rng.uniform(0.0, 2.0 * np.pi)
    beta = float(np.arccos(rng.uniform(-1.0, 1.0)))
    gamma = rng.uniform(0.0, 2.0 * np.pi)
    return EulerZYZ(alpha, beta, gamma)


def small_random_rotation(rng: np.random.Generator, std: float) -> EulerZYZ:
    """Small random rotation from a Gaussian rotation vector (axis * angle).

    ``std`` is the per-axis standard deviation in radians; used for
    misregistration jitter.
    """
    w = rng.normal(0.0, std, size=3)
    angle = float(np.linalg.norm(w))
    if angle < 1e-15:
        return IDENTITY_ROTATION
    k = w / angle
    kx = np.array(
        [[0.0, -k[2], k[1]], [k[2], 0.0, -k[0]], [-k[1], k[0], 0.0]]
    )
    r = np.eye(3) + np.sin(angle) * kx + (1.0 - np.cos(angle)) * (kx @ kx)
    return matrix_to_euler(r)


@dataclass(frozen=True)
class SphereGrid:
    """Equiangular bandwidth-``b`` grid on the sphere (2b x 2b points)."""

    bandwidth: int

    def __post_init__(self):
        _check_bandwidth(self.bandwidth)

    @property
    def n_beta(self) -> int:
        return 2 * self.bandwidth

    @property
    def n_alpha(self) -> int:
        return 2 * self.bandwidth

    @property
    def betas(self) -> np.ndarray:
        return grid_betas(self.bandwidth)

    @property
    def alphas(self) -> np.ndarray:
        return grid_alphas(self.bandwidth)

    def points(self) -> np.ndarray:
        """Unit vectors of the grid, shape (2b, 2b, 3), indexed (beta, alpha)."""
        beta = self.betas[:, None]
        alpha = self.alphas[None, :]
        sb = np.sin(beta)
        return np.stack(
            [sb * np.cos(alpha), sb * np.sin(alpha), np.cos(beta) * np.ones_like(alpha)],
            axis=-1,
        )


@lru_cache(maxsize=None)
def grid_betas(b: int) -> np.ndarray:
    b = _check_bandwidth(b)
    j = np.arange(2 * b)
    out = np.pi * (2 * j + 1) / (4 * b)
    out.flags.writeable = False
    return out

@lru_cache(maxsize=None)
def grid_alphas(b: int) -> np.ndarray:
    b = _check_bandwidth(b)
    out = np.pi * np.arange(2 * b) / b
    out.flags.writeable = False
    return out


@lru_cache(maxsize=None)
def sht_weights(b: int) -> np.ndarray:
    """Per-row quadrature weights for the bandwidth-``b`` sphere grid.

    Includes the azimuthal spacing, so that ``sum_{j,k} w[j] f[j,k]``
    equals the sphere integral of ``f`` exactly whenever ``f`` is
    band-limited below ``b``.  In particular
    ``sum_j w[j] * 2b == 4 pi``.
    """
    b = _check_bandwidth(b)
    beta = grid_betas(b)
    k = np.arange(b)
    # interior sum of sin((2k+1) beta) / (2k+1): exact integration of
    # Legendre polynomials up to degree 2b - 1
    s = np.sin((2 * k[None, :] + 1) * beta[:, None]) / (2 * k + 1)
    w = (2.0 / b) * np.sin(beta) * s.sum(axis=1)
    out = (np.pi / b) * w
    out.flags.writeable = False
    return out


def wgap_weights(grid: SphereGrid | int) -> np.ndarray:
    """Area-corrected pooling weights over the beta rows: sin(beta_j), normalized.

    Used by the weighted global average pooling layer; the sine factor
    compensates for the denser sampling near the poles on the equiangular
    grid.  Weights sum to 1.
    """
    b = grid.bandwidth if isinstance(grid, SphereGrid) else _check_bandwidth(grid)
    s = np.sin(grid_betas(b))
    return s / s.sum()


def sphere_angle(u: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Great-circle angle between unit vectors (broadcasting over leading axes)."""
    dot = np.clip(np.sum(u * v, axis=-1), -1.0, 1.0)
    return np.arccos(dot)


@dataclass
class SphereSignal:
    """Multi-channel real signal sampled on a SphereGrid.

    values has shape (channels, 2b, 2b), indexed (channel, beta, alpha).
    """

    bandwidth: int
    values: np.ndarray
    hemisphere: str = "left"

    def __post_init__(self):
        b = _check_bandwidth(self.bandwidth)
        self.values = np.asarray(self.values)
        if self.values.ndim != 3 or self.values.shape[1:] != (2 * b, 2 * b):
            raise ValidationError(
                f"sphere signal values must have shape (c, {2*b}, {2*b}), "
                f"got {self.values.shape}"
            )
        if np.iscomplexobj(self.values):
            raise ValidationError("sphere signal values must be real")
        if self.hemisphere not in ("left", "right"):
            raise ValidationError(f"unknown hemisphere {self.hemisphere!r}")

    @property
    def channels(self) -> int:
        return self.values.shape[0]

    @property
    def grid(self) -> SphereGrid:
        return SphereGrid(self.bandwidth)


@dataclass
class SO3Signal:
    """Multi-channel real signal on the rotation-group grid.

    values has shape (channels, 2b, 2b, 2b), indexed (channel, alpha, beta, gamma).
    """

    bandwidth: int
    values: np.ndarray

    def __post_init__(self):
        b = _check_bandwidth(self.bandwidth)
        self.values = np.asarray(self.values)
        n = 2 * b
        if self.values.ndim != 4 or self.values.shape[1:] != (n, n, n):
            raise ValidationError(
                f"SO(3) signal values must have shape (c, {n}, {n}, {n}), "
                f"got {self.values.shape}"
            )
        if np.iscomplexobj(self.values):
            raise ValidationError("SO(3) signal values must be real")

    @property
    def channels(self) -> int:
        return self.values.shape[0]
