"""Matrix-free kernels for the frequency-domain system matrix.

For a pose q and voxel n the geometric factor of element (q, l, n) is

    g(l) = exp(-j 2 pi l df d / c0) / (2 pi d) * sinc(l alpha) * sinc(l beta)

with ``alpha = pi df a x_tr / (c0 d)`` and ``beta = pi df b y_tr / (c0 d)``.
All three l-dependent factors are advanced by complex rotations, so only one
sincos of the delay phase is evaluated per (q, n). Frequencies start at l = 1;
the l = 0 row of the model is identically zero.

Voxels are processed in blocks with frequency as the outer loop so the voxel
loop vectorizes.
"""
import math

import numba
import numpy as np
from numba import config

config.THREADING_LAYER_PRIORITY = ["omp", "workqueue", "tbb"]

BLOCK = 128
_TINY = 1e-150
_INV_TWO_PI = 1.0 / (2.0 * math.pi)
_TWO_PI_HI = 6.283185307179586
_TWO_PI_LO = 2.4492935982947064e-16


@numba.njit(inline="always", fastmath=True, cache=True)
def _sincos(x):
    # Branchless: reduce to [-pi, pi], evaluate at x/4 by Taylor series, then
    # apply the double-angle formula twice. Absolute error ~1e-15.
    k = math.floor(x * _INV_TWO_PI + 0.5)
    r = 0.25 * (x - k * _TWO_PI_HI - k * _TWO_PI_LO)
    r2 = r * r
    s = r * (1.0 - r2 / 6.0 * (1.0 - r2 / 20.0 * (1.0 - r2 / 42.0 * (1.0 - r2 / 72.0 * (
        1.0 - r2 / 110.0 * (1.0 - r2 / 156.0 * (1.0 - r2 / 210.0)))))))
    c = 1.0 - r2 / 2.0 * (1.0 - r2 / 12.0 * (1.0 - r2 / 30.0 * (1.0 - r2 / 56.0 * (
        1.0 - r2 / 90.0 * (1.0 - r2 / 132.0 * (1.0 - r2 / 182.0 * (1.0 - r2 / 240.0)))))))
    s, c = 2.0 * s * c, (c - s) * (c + s)
    s, c = 2.0 * s * c, (c - s) * (c + s)
    return s, c


@numba.njit(fastmath=True, cache=True)
def _setup_block(n0, m, vx, vy, vz, px, py, pz, ex, ey, a, b, c0, df,
                 amp, zr, zi, ar, ai, ia, fa, br, bi, ib, fb,
                 pr, pi_, sar, sai, sbr, sbi):
    # Split into short loops: fused, the loop body is too large for LLVM to
    # vectorize.
    kph = -2.0 * math.pi * df / c0
    ka = math.pi * df * a / c0
    kb = math.pi * df * b / c0
    xs = vx[n0:n0 + m]
    ys = vy[n0:n0 + m]
    zs = vz[n0:n0 + m]
    for j in range(m):
        dx = px - xs[j]
        dy = py - ys[j]
        dz = pz - zs[j]
        d = math.sqrt(dx * dx + dy * dy + dz * dz)
        inv_d = 1.0 / d
        amp[j] = inv_d * _INV_TWO_PI
        zr[j] = kph * d
        ia[j] = ka * (ex[0] * xs[j] + ex[1] * ys[j] + ex[2] * zs[j]) * inv_d
        ib[j] = kb * (ey[0] * xs[j] + ey[1] * ys[j] + ey[2] * zs[j]) * inv_d
    for j in range(m):
        s, c = _sincos(zr[j])
        zr[j] = c
        zi[j] = s
        pr[j] = c
        pi_[j] = s
    for j in range(m):
        s, c = _sincos(ia[j])
        ar[j] = c
        ai[j] = s
        sar[j] = c
        sai[j] = s
    for j in range(m):
        s, c = _sincos(ib[j])
        br[j] = c
        bi[j] = s
        sbr[j] = c
        sbi[j] = s
    for j in range(m):
        al = ia[j]
        flag = 1.0 if abs(al) < _TINY else 0.0
        fa[j] = flag
        ia[j] = (1.0 - flag) / (al + flag)
        be = ib[j]
        flag = 1.0 if abs(be) < _TINY else 0.0
        fb[j] = flag
        ib[j] = (1.0 - flag) / (be + flag)


@numba.njit(parallel=True, fastmath=True, cache=True)
def forward(theta, vx, vy, vz, pos, ex, ey, a, b, c0, df, lmax, out_re, out_im):
    """out[q, l-1] = sum_n theta[n] g_qn(l) for l = 1..lmax."""
    Q = pos.shape[0]
    N = vx.shape[0]
    invl = np.empty(lmax)
    for k in range(lmax):
        invl[k] = 1.0 / (k + 1)
    for q in numba.prange(Q):
        amp = np.empty(BLOCK)
        zr = np.empty(BLOCK)
        zi = np.empty(BLOCK)
        ar = np.empty(BLOCK)
        ai = np.empty(BLOCK)
        ia = np.empty(BLOCK)
        fa = np.empty(BLOCK)
        br = np.empty(BLOCK)
        bi = np.empty(BLOCK)
        ib = np.empty(BLOCK)
        fb = np.empty(BLOCK)
        pr = np.empty(BLOCK)
        pi_ = np.empty(BLOCK)
        sar = np.empty(BLOCK)
        sai = np.empty(BLOCK)
        sbr = np.empty(BLOCK)
        sbi = np.empty(BLOCK)
        acc_re = np.zeros(lmax)
        acc_im = np.zeros(lmax)
        px = pos[q, 0]
        py = pos[q, 1]
        pz = pos[q, 2]
        exq = ex[q]
        eyq = ey[q]
        for n0 in range(0, N, BLOCK):
            m = min(BLOCK, N - n0)
            _setup_block(n0, m, vx, vy, vz, px, py, pz, exq, eyq, a, b, c0, df,
                         amp, zr, zi, ar, ai, ia, fa, br, bi, ib, fb,
                         pr, pi_, sar, sai, sbr, sbi)
            for j in range(m):
                amp[j] *= theta[n0 + j]
            for k in range(lmax):
                il = invl[k]
                sr = 0.0
                si = 0.0
                for j in range(m):
                    g = amp[j] * (sai[j] * ia[j] * il + fa[j]) * (sbi[j] * ib[j] * il + fb[j])
                    sr += g * pr[j]
                    si += g * pi_[j]
                    t = pr[j] * zr[j] - pi_[j] * zi[j]
                    pi_[j] = pr[j] * zi[j] + pi_[j] * zr[j]
                    pr[j] = t
                    t = sar[j] * ar[j] - sai[j] * ai[j]
                    sai[j] = sar[j] * ai[j] + sai[j] * ar[j]
                    sar[j] = t
                    t = sbr[j] * br[j] - sbi[j] * bi[j]
                    sbi[j] = sbr[j] * bi[j] + sbi[j] * br[j]
                    sbr[j] = t
                acc_re[k] += sr
                acc_im[k] += si
        for k in range(lmax):
            out_re[q, k] = acc_re[k]
            out_im[q, k] = acc_im[k]


@numba.njit(parallel=True, fastmath=True, cache=True)
def adjoint(v_re, v_im, vx, vy, vz, pos, ex, ey, a, b, c0, df, lmax, out):
    """out[n] = sum_{q,l} Re(conj(g_qn(l)) v[q, l-1])."""
    Q = pos.shape[0]
    N = vx.shape[0]
    nblocks = (N + BLOCK - 1) // BLOCK
    invl = np.empty(lmax)
    for k in range(lmax):
        invl[k] = 1.0 / (k + 1)
    for blk in numba.prange(nblocks):
        n0 = blk * BLOCK
        m = min(BLOCK, N - n0)
        amp = np.empty(BLOCK)
        zr = np.empty(BLOCK)
        zi = np.empty(BLOCK)
        ar = np.empty(BLOCK)
        ai = np.empty(BLOCK)
        ia = np.empty(BLOCK)
        fa = np.empty(BLOCK)
        br = np.empty(BLOCK)
        bi = np.empty(BLOCK)
        ib = np.empty(BLOCK)
        fb = np.empty(BLOCK)
        pr = np.empty(BLOCK)
        pi_ = np.empty(BLOCK)
        sar = np.empty(BLOCK)
        sai = np.empty(BLOCK)
        sbr = np.empty(BLOCK)
        sbi = np.empty(BLOCK)
        acc = np.zeros(BLOCK)
        for q in range(Q):
            _setup_block(n0, m, vx, vy, vz, pos[q, 0], pos[q, 1], pos[q, 2], ex[q], ey[q],
                         a, b, c0, df, amp, zr, zi, ar, ai, ia, fa, br, bi, ib, fb,
                         pr, pi_, sar, sai, sbr, sbi)
            for k in range(lmax):
                il = invl[k]
                vr = v_re[q, k]
                vi = v_im[q, k]
                for j in range(m):
                    g = amp[j] * (sai[j] * ia[j] * il + fa[j]) * (sbi[j] * ib[j] * il + fb[j])
                    acc[j] += g * (pr[j] * vr + pi_[j] * vi)
                    t = pr[j] * zr[j] - pi_[j] * zi[j]
                    pi_[j] = pr[j] * zi[j] + pi_[j] * zr[j]
                    pr[j] = t
                    t = sar[j] * ar[j] - sai[j] * ai[j]
                    sai[j] = sar[j] * ai[j] + sai[j] * ar[j]
                    sar[j] = t
                    t = sbr[j] * br[j] - sbi[j] * bi[j]
                    sbi[j] = sbr[j] * bi[j] + sbi[j] * br[j]
                    sbr[j] = t
        for j in range(m):
            out[n0 + j] = acc[j]
