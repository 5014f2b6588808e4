"""Wigner d-matrices on the rotation grid.

``wigner_d(l, beta)`` returns the real (2l+1) x (2l+1) matrix d^l(beta) in
the convention

    D^l_{mn}(alpha, beta, gamma) = exp(-i m alpha) d^l_{mn}(beta) exp(-i n gamma)

with rows indexed by m = -l..l and columns by n = -l..l (offset by +l).
``d^l_{m0}`` reproduces the normalized associated Legendre functions used by
the sphere transform: Y_lm(beta, alpha) = sqrt((2l+1)/(4pi)) e^{i m alpha}
d^l_{m0}(beta).

Entries are built by the three-term recursion in l at fixed (m, n):

    l sqrt(((l+1)^2-m^2)((l+1)^2-n^2)) d^{l+1}
        = (2l+1)(l(l+1) cos(beta) - m n) d^l
          - (l+1) sqrt((l^2-m^2)(l^2-n^2)) d^{l-1}

seeded at l0 = max(|m|, |n|) with the closed-form corner expressions
(single surviving term of the explicit sum).  The recursion is stable for
degrees into the low hundreds; the corner seeds underflow gracefully to
zero where the true values drop below the float64 range.
"""

from __future__ import annotations

from functools import lru_cache
from math import comb

import numpy as np

from .grid import grid_betas

# Debug hook for the self-check command: when enabled, the sign of one
# cached table entry is flipped so downstream consistency checks must fail.
_SABOTAGE_SIGN = False


def set_sabotage(enabled: bool) -> None:
    global _SABOTAGE_SIGN
    _SABOTAGE_SIGN = bool(enabled)
    _tables_cached.cache_clear()
    _legendre_cached.cache_clear()


def _seed(m: int, n: int, beta: np.ndarray) -> np.ndarray:
    """d^{l0}_{mn}(beta) at l0 = max(|m|, |n|), vectorized over beta."""
    l0 = max(abs(m), abs(n))
    c = np.cos(beta / 2.0)
    s = np.sin(beta / 2.0)
    if l0 == 0:
        return np.ones_like(beta)
    if abs(m) >= abs(n):
        root = np.sqrt(float(comb(2 * l0, l0 + n)))
        if m >= 0:
            sign = -1.0 if (l0 - n) % 2 else 1.0
            return sign * root * c ** (l0 + n) * s ** (l0 - n)
        return root * c ** (l0 - n) * s ** (l0 + n)
    root = np.sqrt(float(comb(2 * l0, l0 + m)))
    if n >= 0:
        return root * c ** (l0 + m) * s ** (l0 - m)
    sign = -1.0 if (l0 + m) % 2 else 1.0
    return sign * root * c ** (l0 - m) * s ** (l0 + m)


def _recurse_column(m: int, n: int, x: np.ndarray, beta: np.ndarray,
                    l_max: int) -> list[np.ndarray | None]:
    """d^l_{mn}(beta) for l = 0..l_max; None below l0 = max(|m|, |n|)."""
    l0 = max(abs(m), abs(n))
    out: list[np.ndarray | None] = [None] * (l_max + 1)
    if l0 > l_max:
        return out
    out[l0] = _seed(m, n, beta)
    if l0 == 0 and l_max >= 1:
        # the generic step divides by l; start the (0,0) track explicitly
        out[1] = x.copy()
        l0 = 1
    prev = out[l0 - 1] if l0 >= 1 and out[l0 - 1] is not None else None
    for l in range(l0, l_max):
        a = (2 * l + 1) * (l * (l + 1) * x - m * n) * out[l]
        if prev is not None:
            a = a - (l + 1) * np.sqrt(float((l * l - m * m) * (l * l - n * n))) * prev
        denom = l * np.sqrt(float(((l + 1) ** 2 - m * m) * ((l + 1) ** 2 - n * n)))
        out[l + 1] = a / denom
        prev = out[l]
    return out


def wigner_d_stack(l_max: int, beta: np.ndarray) -> list[np.ndarray]:
    """All d^l(beta) for l = 0..l_max.

    Returns a list indexed by l of arrays with shape
    (len(beta), 2l+1, 2l+1).
    """
    beta = np.atleast_1d(np.asarray(beta, dtype=np.float64))
    x = np.cos(beta)
    nb = beta.shape[0]
    mats = [np.zeros((nb, 2 * l + 1, 2 * l + 1)) for l in range(l_max + 1)]
    for m in range(-l_max, l_max + 1):
        for n in range(-l_max, l_max + 1):
            col = _recurse_column(m, n, x, beta, l_max)
            for l in range(max(abs(m), abs(n)), l_max + 1):
                mats[l][:, m + l, n + l] = col[l]
    return mats


def wigner_d(l: int, beta: float) -> np.ndarray:
    """The (2l+1) x (2l+1) matrix d^l(beta) for a single angle."""
    return wigner_d_stack(l, np.array([float(beta)]))[l][0]


def wigner_D(l: int, alpha: float, beta: float, gamma: float) -> np.ndarray:
    """Complex rotation matrix D^l(alpha, beta, gamma) acting on degree-l
    coefficient vectors indexed m = -l..l."""
    m = np.arange(-l, l + 1)
    d = wigner_d(l, beta)
    return np.exp(-1j * m[:, None] * alpha) * d * np.exp(-1j * m[None, :] * gamma)


@lru_cache(maxsize=32)
def _tables_cached(b: int, l_max: int, sabotage: bool) -> tuple[np.ndarray, ...]:
    mats = wigner_d_stack(l_max, grid_betas(b))
    if sabotage and l_max >= 1:
        mats[1][:, 2, 1] *= -1.0  # flip d^1_{+1,0} on the grid
    for a in mats:
        a.flags.writeable = False
    return tuple(mats)


def wigner_d_tables(b: int, l_degrees: int) -> tuple[np.ndarray, ...]:
    """Cached d^l matrices on the bandwidth-``b`` beta rows for l < l_degrees.

    Element [l] has shape (2b, 2l+1, 2l+1), indexed (beta_row, m+l, n+l).
    """
    return _tables_cached(b, l_degrees - 1, _SABOTAGE_SIGN)


@lru_cache(maxsize=32)
def _legendre_cached(b: int, l_max: int, sabotage: bool) -> tuple[np.ndarray, ...]:
    beta = grid_betas(b)
    x = np.cos(beta)
    nb = beta.shape[0]
    cols = []
    for l in range(l_max + 1):
        cols.append(np.zeros((nb, 2 * l + 1)))
    for m in range(-l_max, l_max + 1):
        col = _recurse_column(m, 0, x, beta, l_max)
        for l in range(abs(m), l_max + 1):
            cols[l][:, m + l] = col[l]
    if sabotage and l_max >= 1:
        cols[1][:, 2] *= -1.0
    for a in cols:
        a.flags.writeable = False
    return tuple(cols)


def legendre_m0(b: int, l_degrees: int) -> tuple[np.ndarray, ...]:
    """Cached middle columns d^l_{m,0}(beta_j) for l < l_degrees.

    Element [l] has shape (2b, 2l+1); these are the normalized associated
    Legendre functions up to the sqrt((2l+1)/(4pi)) factor.
    """
    return _legendre_cached(b, l_degrees - 1, _SABOTAGE_SIGN)
