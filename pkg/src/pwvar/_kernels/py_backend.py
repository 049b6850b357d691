"""Vectorized NumPy fallback for the image kernels.

Both backends must make identical include/exclude decisions (aperture
bounds, out-of-recording sample reads), so delay math is written with the
same elementary operations in the same order as the compiled kernel:
sqrt(dx*dx + z*z) rather than hypot, and searchsorted-style comparisons
for the aperture interval.
"""

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..errors import NumericsError

__all__ = ["das_block", "ebmv_block"]


def _gather(samples, fi, element_index):
    """Linear interpolation at fractional sample index fi, zero outside."""
    nt = samples.shape[0]
    i0 = np.floor(fi).astype(np.int64)
    frac = fi - i0
    lo_ok = (i0 >= 0) & (i0 <= nt - 1)
    hi_ok = (i0 + 1 >= 0) & (i0 + 1 <= nt - 1)
    i0c = np.clip(i0, 0, nt - 1)
    i1c = np.clip(i0 + 1, 0, nt - 1)
    return (np.where(lo_ok, (1.0 - frac) * samples[i0c, element_index], 0.0)
            + np.where(hi_ok, frac * samples[i1c, element_index], 0.0))


def das_block(samples, elem_x, fs, t0, cos_a, sin_a, c, x, z,
              f_number, hann):
    """Delay-and-sum rows `z` of the image; returns (len(z), len(x))."""
    ne = elem_x.size
    zz = z[:, None, None]  # (nb, 1, 1)
    xx = x[None, :, None]  # (1, nx, 1)
    ex = elem_x[None, None, :]  # (1, 1, Ne)
    tt = (zz * cos_a + xx * sin_a) / c
    dx = xx - ex
    tau = tt + np.sqrt(dx * dx + zz * zz) / c
    vals = _gather(samples, (tau - t0) * fs,
                   np.broadcast_to(np.arange(ne)[None, None, :], tau.shape))
    if f_number == 0.0:
        if hann and ne > 1:
            xc = (elem_x[0] + elem_x[-1]) / 2.0
            hs = (elem_x[-1] - elem_x[0]) / 2.0
            wts = 0.5 + 0.5 * np.cos(np.pi * (elem_x - xc) / hs)
        else:
            wts = np.ones(ne)
        weights = np.broadcast_to(wts, vals.shape)
    else:
        half = zz / (2.0 * f_number)
        active = np.abs(dx) <= half
        if hann:
            safe = np.where(half > 0, half, 1.0)
            weights = np.where(active,
                               0.5 + 0.5 * np.cos(np.pi * dx / safe), 0.0)
        else:
            weights = np.where(active, 1.0, 0.0)
    return (weights * vals).sum(axis=2)


def ebmv_block(samples, elem_x, fs, t0, cos_a, sin_a, c, x, z,
               f_number, subarray, loading, criterion, taps):
    """Eigenspace-MV rows `z` of the image; returns (len(z), len(x)).

    Pixels are grouped by active-aperture size so each group runs the
    covariance/solve/eigh chain as one batched call.
    """
    nb, nx, ne = z.size, x.size, elem_x.size
    if f_number == 0.0:
        e0 = np.zeros(nb * nx, dtype=np.int64)
        na = np.full(nb * nx, ne, dtype=np.int64)
    else:
        half = z[:, None] / (2.0 * f_number)  # (nb, 1)
        lo = np.searchsorted(elem_x, x[None, :] - half, side="left")
        hi = np.searchsorted(elem_x, x[None, :] + half, side="right")
        e0 = lo.ravel()
        na = (hi - lo).ravel()
    zz = np.repeat(z, nx)
    xx = np.tile(x, nb)
    offsets = np.arange(taps) - (taps - 1) / 2.0
    kc = (taps - 1) // 2
    out = np.zeros(nb * nx)
    for n in np.unique(na):
        if n == 0:
            continue
        sel = np.nonzero(na == n)[0]
        eg = e0[sel, None] + np.arange(n)[None, :]  # (B, n)
        xp = xx[sel, None]
        zp = zz[sel, None]
        tt = (zp * cos_a + xp * sin_a) / c
        dx = xp - elem_x[eg]
        tau = tt + np.sqrt(dx * dx + zp * zp) / c  # (B, n)
        fi = ((tau - t0) * fs)[:, :, None] + offsets[None, None, :]
        y = _gather(samples, fi,
                    np.broadcast_to(eg[:, :, None], fi.shape))  # (B, n, Np)
        L = min(subarray, int(n))
        K = int(n) - L + 1
        windows = sliding_window_view(y, L, axis=1)  # (B, K, Np, L)
        w_all = windows.reshape(y.shape[0], K * taps, L)
        r = w_all.transpose(0, 2, 1) @ w_all / (K * taps)  # (B, L, L)
        trace = np.trace(r, axis1=1, axis2=2)
        good = trace > 0.0
        r += (loading * trace / L)[:, None, None] * np.eye(L)
        r[~good] = np.eye(L)
        try:
            a = np.linalg.solve(r, np.ones((y.shape[0], L, 1)))[..., 0]
        except np.linalg.LinAlgError as exc:
            raise NumericsError(f"covariance solve failed: {exc}") from exc
        w_mv = a / a.sum(axis=1, keepdims=True)
        vals, vecs = np.linalg.eigh(r)  # ascending
        keep = vals >= criterion * vals[:, -1:]
        coef = np.einsum("bij,bi->bj", vecs, w_mv) * keep
        w = np.einsum("bij,bj->bi", vecs, coef)
        center_windows = sliding_window_view(y[:, :, kc], L, axis=1)
        pix = np.einsum("bkl,bl->bk", center_windows, w).mean(axis=1)
        out[sel] = np.where(good, pix, 0.0)
    return out.reshape(nb, nx)
