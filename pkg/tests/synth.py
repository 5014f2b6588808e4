"""Shared random-signal constructors for the tests.

Real band-limited signals are synthesized from coefficients with the
conjugate symmetry that makes the inverse transform real:
c_{l,-m} = (-1)^m conj(c_{l,m}) on the sphere, and on the rotation group
B^l_{-m,-n} = (-1)^{m-n} conj(B^l_{m,n}).
"""

import numpy as np


def rand_s2_coeffs(rng, shape, degrees):
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


def rand_so3_blocks(rng, shape, degrees):
    blocks = []
    for l in range(degrees):
        n = 2 * l + 1
        blk = rng.normal(size=shape + (n, n)) + 1j * rng.normal(size=shape + (n, n))
        m = np.arange(-l, l + 1)
        ph = np.where((m[:, None] - m[None, :]) % 2 == 0, 1.0, -1.0)
        blocks.append(0.5 * (blk + ph * np.conj(blk[..., ::-1, ::-1])))
    return blocks


def rand_sphere_signal(rng, b, channels=1, batch=None):
    from scnn.spectral import sht_inverse_arr

    shape = (channels,) if batch is None else (batch, channels)
    return sht_inverse_arr(rand_s2_coeffs(rng, shape, b), b).real


def rand_so3_signal(rng, b, channels=1, batch=None):
    from scnn.spectral import so3_inverse_arr

    shape = (channels,) if batch is None else (batch, channels)
    return so3_inverse_arr(rand_so3_blocks(rng, shape, b), b).real


def block_err(got, want):
    return max(float(np.max(np.abs(g - w))) for g, w in zip(got, want))


def rel_err(a, ref):
    a = np.asarray(a, dtype=np.float64)
    ref = np.asarray(ref, dtype=np.float64)
    return float(np.linalg.norm(a - ref) / max(np.linalg.norm(ref), 1e-300))
