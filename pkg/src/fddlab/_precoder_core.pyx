# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
# cython: language_level=3
"""Compiled twin of fddlab._precoder_numpy.

Same entry points, same update rule, same eigenvalue mask and bisection, so
the two backends agree to floating-point noise. LAPACK zheevd provides the
Hermitian eigendecomposition of the quadratic-form matrix A.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport log2, sqrt
from scipy.linalg.cython_lapack cimport zheevd

cnp.import_array()

ctypedef double complex cplx

cdef double _EIG_CUT = 1e-12


cdef double _cabs2(cplx z) noexcept nogil:
    return z.real * z.real + z.imag * z.imag


cdef double _sum_rate_c(cplx[:, ::1] channels, cplx[:, ::1] precoders,
                        double noise_var) noexcept nogil:
    cdef int j_users = channels.shape[0]
    cdef int n = channels.shape[1]
    cdef int j, i, k
    cdef cplx acc
    cdef double sig, inter, rate = 0.0
    for j in range(j_users):
        sig = 0.0
        inter = noise_var
        for i in range(j_users):
            acc = 0
            for k in range(n):
                acc = acc + channels[j, k] * precoders[i, k]
            if i == j:
                sig = _cabs2(acc)
            else:
                inter += _cabs2(acc)
        rate += log2(1.0 + sig / inter)
    return rate


cdef void _matched_filter_c(cplx[:, ::1] channels, double rho,
                            cplx[:, ::1] out) noexcept nogil:
    cdef int j_users = channels.shape[0]
    cdef int n = channels.shape[1]
    cdef int j, k
    cdef double norm, share = sqrt(rho / j_users)
    for j in range(j_users):
        norm = 0.0
        for k in range(n):
            norm += _cabs2(channels[j, k])
        norm = sqrt(norm)
        if norm > 0.0:
            for k in range(n):
                out[j, k] = channels[j, k].conjugate() * (share / norm)
        else:
            for k in range(n):
                out[j, k] = share / sqrt(<double> n)


cdef void _mmse_step(cplx[:, ::1] channels, cplx[:, ::1] precoders,
                     double noise_var, cplx[:, ::1] cross, cplx[::1] u,
                     double[::1] w, double[::1] coef) noexcept nogil:
    cdef int j_users = channels.shape[0]
    cdef int n = channels.shape[1]
    cdef int j, i, k
    cdef cplx acc
    cdef double total, diag2
    for j in range(j_users):
        total = noise_var
        for i in range(j_users):
            acc = 0
            for k in range(n):
                acc = acc + channels[j, k] * precoders[i, k]
            cross[j, i] = acc
            total += _cabs2(acc)
        diag2 = _cabs2(cross[j, j])
        u[j] = cross[j, j] / total
        w[j] = 1.0 / (1.0 - diag2 / total)
        coef[j] = w[j] * _cabs2(u[j])


cdef double _constraint_power(double[::1] evals, double[:, ::1] weights,
                              unsigned char[::1] keep, double lam,
                              int j_users) noexcept nogil:
    cdef int n = evals.shape[0]
    cdef int k, j
    cdef double total = 0.0, denom
    for k in range(n):
        if not keep[k]:
            continue
        denom = evals[k] + lam
        denom = denom * denom
        for j in range(j_users):
            total += weights[k, j] / denom
    return total


cdef int _precoder_update_c(cplx[::1] a_fort, cplx[:, ::1] b_rows,
                            double rho, int bisect_steps, int n, int j_users,
                            double[::1] evals, cplx[::1] work, int lwork,
                            double[::1] rwork, int lrwork, int[::1] iwork,
                            int liwork, cplx[:, ::1] coords,
                            double[:, ::1] weights, unsigned char[::1] keep,
                            cplx[:, ::1] out) except -1:
    """Eigendecompose A (Fortran order, overwritten by eigenvectors), then
    v_j = (A + λI)^{-1} b_j with λ bisected onto the power constraint."""
    cdef int info = 0, nn = n
    cdef int lw = lwork, lrw = lrwork, liw = liwork
    zheevd('V', 'L', &nn, &a_fort[0], &nn, &evals[0], &work[0], &lw,
           &rwork[0], &lrw, &iwork[0], &liw, &info)
    if info != 0:
        raise ValueError(f"zheevd failed with info={info}")
    cdef int k, j, i
    for k in range(n):
        if evals[k] < 0.0:
            evals[k] = 0.0
    cdef double top = evals[n - 1]
    if top <= 0.0:
        raise ValueError("degenerate precoder update: A has no signal space")
    for k in range(n):
        keep[k] = 1 if evals[k] > top * _EIG_CUT else 0
    # coords[k, j] = sum_i conj(U[i, k]) b[j, i]
    cdef cplx acc
    for k in range(n):
        if not keep[k]:
            continue
        for j in range(j_users):
            acc = 0
            for i in range(n):
                acc = acc + a_fort[i + k * n].conjugate() * b_rows[j, i]
            coords[k, j] = acc
            weights[k, j] = _cabs2(acc)
    cdef double hi = 1.0, lo = 0.0, mid, lam
    cdef int step
    for step in range(200):
        if _constraint_power(evals, weights, keep, hi, j_users) <= rho:
            break
        hi *= 2.0
    for step in range(bisect_steps):
        mid = 0.5 * (lo + hi)
        if _constraint_power(evals, weights, keep, mid, j_users) > rho:
            lo = mid
        else:
            hi = mid
    lam = 0.5 * (lo + hi)
    cdef double scale, total = 0.0
    cdef cplx factor
    for j in range(j_users):
        for i in range(n):
            out[j, i] = 0
    for k in range(n):
        if not keep[k]:
            continue
        scale = 1.0 / (evals[k] + lam)
        for j in range(j_users):
            factor = coords[k, j] * scale
            for i in range(n):
                out[j, i] = out[j, i] + a_fort[i + k * n] * factor
    for j in range(j_users):
        for i in range(n):
            total += _cabs2(out[j, i])
    if total <= 0.0:
        raise ValueError("degenerate precoder update: zero precoder power")
    scale = sqrt(rho / total)
    for j in range(j_users):
        for i in range(n):
            out[j, i] = out[j, i] * scale
    return 0


def wmmse_core(cnp.ndarray channels_in, double noise_var, double rho,
               int max_iters, double tol, int tol_window, int bisect_steps):
    """See _precoder_numpy.wmmse_core."""
    cdef cnp.ndarray channels_arr = np.ascontiguousarray(channels_in,
                                                         dtype=np.complex128)
    cdef cplx[:, ::1] channels = channels_arr
    cdef int j_users = channels.shape[0]
    cdef int n = channels.shape[1]
    cdef int lwork = max(1, n * n + 2 * n)
    cdef int lrwork = max(1, 2 * n * n + 5 * n + 1)
    cdef int liwork = 5 * n + 3
    precoders_arr = np.empty((j_users, n), dtype=np.complex128)
    cdef cplx[:, ::1] precoders = precoders_arr
    cdef cplx[::1] a_fort = np.empty(n * n, dtype=np.complex128)
    cdef cplx[:, ::1] cross = np.empty((j_users, j_users),
                                       dtype=np.complex128)
    cdef cplx[::1] u = np.empty(j_users, dtype=np.complex128)
    cdef double[::1] w = np.empty(j_users)
    cdef double[::1] coef = np.empty(j_users)
    cdef cplx[:, ::1] b_rows = np.empty((j_users, n), dtype=np.complex128)
    cdef double[::1] evals = np.empty(n)
    cdef cplx[::1] work = np.empty(lwork, dtype=np.complex128)
    cdef double[::1] rwork = np.empty(lrwork)
    cdef int[::1] iwork = np.empty(liwork, dtype=np.intc)
    cdef cplx[:, ::1] coords = np.empty((n, j_users), dtype=np.complex128)
    cdef double[:, ::1] weights = np.empty((n, j_users))
    cdef unsigned char[::1] keep = np.empty(n, dtype=np.uint8)
    trace_arr = np.empty(max_iters)
    cdef double[::1] trace = trace_arr
    cdef int it, j, a, bcol, count = 0
    cdef cplx cja
    _matched_filter_c(channels, rho, precoders)
    for it in range(max_iters):
        _mmse_step(channels, precoders, noise_var, cross, u, w, coef)
        for a in range(n * n):
            a_fort[a] = 0
        for j in range(j_users):
            for a in range(n):
                cja = channels[j, a].conjugate() * coef[j]
                for bcol in range(n):
                    a_fort[a + bcol * n] = a_fort[a + bcol * n] + \
                        cja * channels[j, bcol]
                b_rows[j, a] = w[j] * u[j].conjugate() * \
                    channels[j, a].conjugate()
        _precoder_update_c(a_fort, b_rows, rho, bisect_steps, n, j_users,
                           evals, work, lwork, rwork, lrwork, iwork, liwork,
                           coords, weights, keep, precoders)
        trace[count] = _sum_rate_c(channels, precoders, noise_var)
        count += 1
        if count > tol_window and \
                abs(trace[count - 1] - trace[count - 1 - tol_window]) < tol:
            break
    return precoders_arr, trace_arr[:count].copy()


def swmmse_core(cnp.ndarray mu_in, cnp.ndarray factors_in,
                cnp.ndarray noise_in, double noise_var, double rho,
                int i_max, int bisect_steps):
    """See _precoder_numpy.swmmse_core."""
    cdef cnp.ndarray mu_arr = np.ascontiguousarray(mu_in,
                                                   dtype=np.complex128)
    cdef cnp.ndarray factors_arr = np.ascontiguousarray(factors_in,
                                                        dtype=np.complex128)
    cdef cnp.ndarray noise_arr = np.ascontiguousarray(noise_in,
                                                      dtype=np.complex128)
    cdef cplx[:, ::1] mu = mu_arr
    cdef cplx[:, :, ::1] factors = factors_arr
    cdef cplx[:, :, ::1] noise = noise_arr
    cdef int j_users = mu.shape[0]
    cdef int n = mu.shape[1]
    cdef int lwork = max(1, n * n + 2 * n)
    cdef int lrwork = max(1, 2 * n * n + 5 * n + 1)
    cdef int liwork = 5 * n + 3
    precoders_arr = np.empty((j_users, n), dtype=np.complex128)
    cdef cplx[:, ::1] precoders = precoders_arr
    cdef cplx[:, ::1] sampled = np.empty((j_users, n), dtype=np.complex128)
    cdef cplx[:, ::1] a_avg = np.zeros((n, n), dtype=np.complex128)
    cdef cplx[:, ::1] b_avg = np.zeros((j_users, n), dtype=np.complex128)
    cdef cplx[::1] a_fort = np.empty(n * n, dtype=np.complex128)
    cdef cplx[:, ::1] cross = np.empty((j_users, j_users),
                                       dtype=np.complex128)
    cdef cplx[::1] u = np.empty(j_users, dtype=np.complex128)
    cdef double[::1] w = np.empty(j_users)
    cdef double[::1] coef = np.empty(j_users)
    cdef double[::1] evals = np.empty(n)
    cdef cplx[::1] work = np.empty(lwork, dtype=np.complex128)
    cdef double[::1] rwork = np.empty(lrwork)
    cdef int[::1] iwork = np.empty(liwork, dtype=np.intc)
    cdef cplx[:, ::1] coords = np.empty((n, j_users), dtype=np.complex128)
    cdef double[:, ::1] weights = np.empty((n, j_users))
    cdef unsigned char[::1] keep = np.empty(n, dtype=np.uint8)
    powers_arr = np.empty(i_max)
    cdef double[::1] powers = powers_arr
    cdef int r, j, a, bcol, k
    cdef double alpha, total
    cdef cplx acc, cja
    _matched_filter_c(mu, rho, precoders)
    for r in range(1, i_max + 1):
        for j in range(j_users):
            for a in range(n):
                acc = mu[j, a]
                for k in range(n):
                    acc = acc + factors[j, a, k] * noise[r - 1, j, k]
                sampled[j, a] = acc
        _mmse_step(sampled, precoders, noise_var, cross, u, w, coef)
        alpha = 1.0 / r
        for a in range(n):
            for bcol in range(n):
                a_avg[a, bcol] = (1.0 - alpha) * a_avg[a, bcol]
        for j in range(j_users):
            for a in range(n):
                cja = sampled[j, a].conjugate() * (coef[j] * alpha)
                for bcol in range(n):
                    a_avg[a, bcol] = a_avg[a, bcol] + cja * sampled[j, bcol]
                b_avg[j, a] = (1.0 - alpha) * b_avg[j, a] + \
                    alpha * w[j] * u[j].conjugate() * sampled[j, a].conjugate()
        for a in range(n):
            for bcol in range(n):
                a_fort[a + bcol * n] = a_avg[a, bcol]
        _precoder_update_c(a_fort, b_avg, rho, bisect_steps, n, j_users,
                           evals, work, lwork, rwork, lrwork, iwork, liwork,
                           coords, weights, keep, precoders)
        total = 0.0
        for j in range(j_users):
            for a in range(n):
                total += _cabs2(precoders[j, a])
        powers[r - 1] = total
    return precoders_arr, powers_arr
