# cython: boundscheck=False, wraparound=False, cdivision=True
# cython: language_level=3
"""Compiled stepping kernel for d = 1 piecewise-affine maps.

Mirrors residiff._kernels.fallback operation for operation: the same
Philox4x64-10 blocks (bit-identical raw words), the same Box-Muller
transform (libm here, numpy SIMD there: floats agree to ~1e-13), and the
same stepping arithmetic with fused multiply-add disabled at compile time.
Cell lookup replicates the guard-band rule of maps.BernoulliMap.
"""

from libc.math cimport cos, floor, log, sin, sqrt

ctypedef unsigned long long u64

cdef extern from *:
    ctypedef unsigned long long u128 "unsigned __int128"

cdef u64 M0 = 0xD2E7470EE14C6C93ULL
cdef u64 M1 = 0xCA5A826395121157ULL
cdef u64 W0 = 0x9E3779B97F4A7C15ULL
cdef u64 W1 = 0xBB67AE8584CAA73BULL
cdef double TWO_NEG53 = 1.0 / 9007199254740992.0
cdef double TWO_PI = 6.283185307179586
cdef double GUARD = 1e-12


cdef inline void philox_block(u64 c0, u64 c1, u64 c2, u64 c3,
                              u64 k0, u64 k1, u64 *out) noexcept nogil:
    cdef int r
    cdef u128 p0, p1
    cdef u64 hi0, lo0, hi1, lo1
    for r in range(10):
        p0 = (<u128> M0) * c0
        p1 = (<u128> M1) * c2
        hi0 = <u64> (p0 >> 64)
        lo0 = <u64> p0
        hi1 = <u64> (p1 >> 64)
        lo1 = <u64> p1
        c0 = hi1 ^ c1 ^ k0
        c1 = lo1
        c2 = hi0 ^ c3 ^ k1
        c3 = lo0
        k0 = k0 + W0
        k1 = k1 + W1
    out[0] = c0
    out[1] = c1
    out[2] = c2
    out[3] = c3


cdef inline void gaussian_quad(u64 seed, u64 stream, u64 block, u64 domain,
                               double *g) noexcept nogil:
    """Four Gaussians from one philox block via two Box-Muller pairs."""
    cdef u64 r[4]
    cdef double u0, a0, u1, a1, rad0, rad1
    philox_block(block, domain, 0, 0, seed, stream, r)
    u0 = <double> ((r[0] >> 11) + 1) * TWO_NEG53
    a0 = <double> (r[1] >> 11) * TWO_NEG53
    u1 = <double> ((r[2] >> 11) + 1) * TWO_NEG53
    a1 = <double> (r[3] >> 11) * TWO_NEG53
    rad0 = sqrt(-2.0 * log(u0))
    rad1 = sqrt(-2.0 * log(u1))
    g[0] = rad0 * cos(TWO_PI * a0)
    g[1] = rad0 * sin(TWO_PI * a0)
    g[2] = rad1 * cos(TWO_PI * a1)
    g[3] = rad1 * sin(TWO_PI * a1)


def philox_probe(seed, stream, block, domain=0):
    """Raw words of one block (for bit-equality tests against the fallback)."""
    cdef u64 r[4]
    philox_block(<u64> block, <u64> domain, 0, 0, <u64> seed, <u64> stream, r)
    return (r[0], r[1], r[2], r[3])


def gaussian_probe(seed, stream, block, domain=0):
    """The four Gaussians of one block (for tolerance tests)."""
    cdef double g[4]
    gaussian_quad(<u64> seed, <u64> stream, <u64> block, <u64> domain, g)
    return (g[0], g[1], g[2], g[3])


def step_block_d1(double[::1] x0, double eps, long n_steps,
                  long[::1] snaps, u64 seed, u64 stream0,
                  double[::1] corners, double[::1] slopes,
                  double[::1] offs, double[:, ::1] out):
    """Step a block of trajectories, writing positions at the snapshot steps.

    x0: (B,) initial positions; snaps: strictly increasing steps >= 1;
    corners: (M+1,) position-ordered cell corners with a trailing 1.0;
    slopes/offs: (M,) branch coefficients in the same order;
    out: (B, len(snaps)) filled with the positions after each snapshot step.
    Trajectory t uses Philox key (seed, stream0 + t); Gaussian m of a stream
    comes from block m // 4, lane m % 4 (domain 0).
    """
    cdef Py_ssize_t B = x0.shape[0]
    cdef Py_ssize_t M = corners.shape[0] - 1
    cdef Py_ssize_t n_snap = snaps.shape[0]
    cdef Py_ssize_t t, si
    cdef long step
    cdef int j
    cdef double x, u, n, ug
    cdef double g[4]
    cdef bint noisy = eps != 0.0
    with nogil:
        for t in range(B):
            x = x0[t]
            si = 0
            for step in range(n_steps):
                if noisy and (step & 3) == 0:
                    gaussian_quad(seed, stream0 + <u64> t,
                                  <u64> (step >> 2), 0, g)
                n = floor(x)
                u = x - n
                if u >= 1.0:
                    n += 1.0
                    u = 0.0
                ug = u + GUARD
                if ug >= 1.0:
                    n += 1.0
                    u = 0.0
                    ug = GUARD
                j = 0
                while j + 1 < M and ug >= corners[j + 1]:
                    j += 1
                x = n + (offs[j] + slopes[j] * u)
                if noisy:
                    x = x + eps * g[step & 3]
                if si < n_snap and step + 1 == snaps[si]:
                    out[t, si] = x
                    si += 1
    return 0
