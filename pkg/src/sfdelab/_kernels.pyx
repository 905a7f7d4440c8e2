# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot loops: Euler stepping of the registered scalar models and the
pairwise sup-distance matrix.  Semantics mirror sfdelab._engine_py exactly;
the dispatch is driven by the model's KernelDescriptor."""

import numpy as np

cimport numpy as cnp
from libc.math cimport sqrt, fabs, pow, tanh, isfinite

cnp.import_array()


cdef inline double _smoothstep(double u) noexcept nogil:
    if u <= 0.0:
        return 0.0
    if u >= 1.0:
        return 1.0
    return u * u * (3.0 - 2.0 * u)


cdef inline double _clamp1(double z) noexcept nogil:
    if z < -1.0:
        return -1.0
    if z > 1.0:
        return 1.0
    return z


cdef inline double _power_factor(double rho, double gamma) noexcept nogil:
    if rho >= 1.0:
        return pow(rho, gamma - 1.0)
    return 1.0 + (1.0 - gamma) * rho * rho * (1.0 - rho)


cdef inline double _interp_table(double z, const double* zs, const double* gs,
                                 int n) noexcept nogil:
    cdef int j
    if z <= zs[0]:
        return gs[0]
    if z >= zs[n - 1]:
        return gs[n - 1]
    j = 0
    while j < n - 2 and zs[j + 1] < z:
        j += 1
    return (gs[j + 1] - gs[j]) / (zs[j + 1] - zs[j]) * (z - zs[j]) + gs[j]


cdef double _drift(int kind, const double* par, const double* weights,
                   const double* buf, int head, int n_hist, int k_sub,
                   int n_nodes) noexcept nogil:
    cdef double x0 = buf[(head + n_hist - 1) % n_hist]
    cdef double z, D, vmin, vmax, v, s, b, w, acc
    cdef int i, idx
    if kind == 0:    # zero
        return 0.0
    if kind == 1:    # -a * x(0)
        return -par[0] * x0
    if kind == 2:    # blended power law of x(-r)
        z = buf[head]
        return -z * _power_factor(fabs(z), par[0])
    if kind == 3:    # blended power law of the window integral
        acc = 0.0
        for i in range(n_nodes):
            idx = (head + i * k_sub) % n_hist
            acc += weights[i] * buf[idx]
        return -acc * _power_factor(fabs(acc), par[0])
    if kind == 4:    # -lam * x(-r)
        return -par[0] * buf[head]
    # spread-triggered kicks need the window diameter
    vmin = buf[head]
    vmax = vmin
    for i in range(1, n_nodes):
        v = buf[(head + i * k_sub) % n_hist]
        if v < vmin:
            vmin = v
        elif v > vmax:
            vmax = v
    D = vmax - vmin
    if kind == 5:    # kick A once D >= N + 1
        s = _smoothstep(D - par[0])
        return par[1] * s - (1.0 - s) * _clamp1(x0)
    if kind == 6:    # kick 5N x0^beta once D >= N max(x0,1)^beta
        b = pow(max(x0, 1.0), par[1])
        w = _smoothstep(x0 - 1.0) * _smoothstep(D - par[0] * b)
        return 5.0 * par[0] * b * w - (1.0 - w) * _clamp1(x0)
    return 0.0


cdef double _diffusion(int kind, const double* par, const double* buf,
                       int head, int n_hist) noexcept nogil:
    cdef double z
    cdef int n
    if kind == 0:    # constant
        return par[0]
    if kind == 1 or kind == 2:   # tanh map of x(0) / x(-r)
        z = buf[(head + n_hist - 1) % n_hist] if kind == 1 else buf[head]
        return par[0] + par[1] * tanh(par[2] * z)
    # table map of x(0) / x(-r)
    z = buf[(head + n_hist - 1) % n_hist] if kind == 3 else buf[head]
    n = <int> par[0]
    return _interp_table(z, par + 1, par + 1 + n, n)


def run_ensemble_desc(
    int drift_kind,
    cnp.ndarray[cnp.float64_t, ndim=1] drift_params,
    int diff_kind,
    cnp.ndarray[cnp.float64_t, ndim=1] diff_params,
    cnp.ndarray[cnp.float64_t, ndim=1] node_weights,
    cnp.ndarray[cnp.float64_t, ndim=2] hist0,
    int k_sub,
    double dt,
    cnp.ndarray[cnp.float64_t, ndim=2] noise,
    cnp.ndarray[cnp.int64_t, ndim=1] snap_steps,
    double explode_threshold,
):
    """Scalar (d = m = 1) twin of _engine_py.run_ensemble.

    hist0: (P, n_hist); noise: (P, n_steps).  Returns snaps (S, P, n_nodes),
    wsnaps (S, P), exploded_step (P,).
    """
    cdef int P = hist0.shape[0]
    cdef int n_hist = hist0.shape[1]
    cdef int n_steps = noise.shape[1]
    cdef int n_snaps = snap_steps.shape[0]
    cdef int n_nodes = (n_hist - 1) // k_sub + 1
    cdef double sqrt_dt = sqrt(dt)

    cdef cnp.ndarray[cnp.float64_t, ndim=3] snaps = np.empty((n_snaps, P, n_nodes))
    cdef cnp.ndarray[cnp.float64_t, ndim=2] wsnaps = np.zeros((n_snaps, P))
    cdef cnp.ndarray[cnp.int64_t, ndim=1] exploded = np.full(P, -1, dtype=np.int64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] buf = np.empty(n_hist)

    cdef double[:, :] hist0_v = hist0
    cdef double[:, :] noise_v = noise
    cdef double[:, :, :] snaps_v = snaps
    cdef double[:, :] wsnaps_v = wsnaps
    cdef long long[:] exploded_v = exploded
    cdef long long[:] snap_v = snap_steps
    cdef double[:] buf_v = buf
    cdef const double* dpar = <const double*> cnp.PyArray_DATA(drift_params)
    cdef const double* gpar = <const double*> cnp.PyArray_DATA(diff_params)
    cdef const double* wts = <const double*> cnp.PyArray_DATA(node_weights)

    cdef int p, i, step, head, s_idx, active
    cdef double xl, f, g, xi, xnew, wsum

    with nogil:
        for p in range(P):
            for i in range(n_hist):
                buf_v[i] = hist0_v[p, i]
            head = 0
            wsum = 0.0
            active = 1
            s_idx = 0
            while s_idx < n_snaps and snap_v[s_idx] == 0:
                for i in range(n_nodes):
                    snaps_v[s_idx, p, i] = buf_v[(head + i * k_sub) % n_hist]
                wsnaps_v[s_idx, p] = 0.0
                s_idx += 1
            for step in range(n_steps):
                xl = buf_v[(head + n_hist - 1) % n_hist]
                xi = noise_v[p, step]
                wsum += xi * sqrt_dt
                if active:
                    f = _drift(drift_kind, dpar, wts, &buf_v[0], head,
                               n_hist, k_sub, n_nodes)
                    g = _diffusion(diff_kind, gpar, &buf_v[0], head, n_hist)
                    xnew = xl + f * dt + g * xi * sqrt_dt
                    if not isfinite(xnew) or fabs(xnew) > explode_threshold:
                        exploded_v[p] = step + 1
                        active = 0
                        xnew = xl
                else:
                    xnew = xl
                # ring advance: overwrite the oldest slot with the new value
                buf_v[head] = xnew
                head = (head + 1) % n_hist
                while s_idx < n_snaps and snap_v[s_idx] == step + 1:
                    for i in range(n_nodes):
                        snaps_v[s_idx, p, i] = buf_v[(head + i * k_sub) % n_hist]
                    wsnaps_v[s_idx, p] = wsum
                    s_idx += 1

    return snaps, wsnaps, exploded


def pairwise_supdist(
    cnp.ndarray[cnp.float64_t, ndim=3] A,
    cnp.ndarray[cnp.float64_t, ndim=3] B,
):
    """Matrix of sup-norm distances between two stacks of windows.

    A: (nA, n_nodes, d), B: (nB, n_nodes, d) -> (nA, nB).
    """
    cdef int nA = A.shape[0]
    cdef int nB = B.shape[0]
    cdef int n_nodes = A.shape[1]
    cdef int d = A.shape[2]
    cdef cnp.ndarray[cnp.float64_t, ndim=2] out = np.empty((nA, nB))
    cdef double[:, :, :] Av = A
    cdef double[:, :, :] Bv = B
    cdef double[:, :] out_v = out
    cdef int i, j, t, k
    cdef double best, acc, diff

    with nogil:
        for i in range(nA):
            for j in range(nB):
                best = 0.0
                for t in range(n_nodes):
                    acc = 0.0
                    for k in range(d):
                        diff = Av[i, t, k] - Bv[j, t, k]
                        acc += diff * diff
                    if acc > best:
                        best = acc
                out_v[i, j] = sqrt(best)
    return out
