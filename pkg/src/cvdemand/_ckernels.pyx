# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels. Same contracts as ``cvdemand._pykernels``."""

import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, ceil, fabs, isfinite, log, INFINITY

cnp.import_array()

BACKEND = "cython"

SOLVE_OK = 0
SOLVE_CLAMPED = 1
SOLVE_FAILED = 2
SOLVE_RENORMALIZED = 3


cdef Py_ssize_t _count_after(double[:] cross, Py_ssize_t lo, Py_ssize_t hi, double te) nogil:
    # number of entries in cross[lo:hi] strictly greater than te (sorted ascending)
    cdef Py_ssize_t a = lo, b = hi, m
    while a < b:
        m = (a + b) // 2
        if cross[m] <= te:
            a = m + 1
        else:
            b = m
    return hi - a


def simulate_phase(double[:] arrivals, int lane_count, cnp.uint8_t[:] is_red,
                   double[:] green_start, double dt, double v, double l0, double tau,
                   double entry_dist, double exit_dist, double[:] tie_u,
                   long max_steps=200000):
    cdef Py_ssize_t n = arrivals.shape[0]
    cdef Py_ssize_t n_grid = is_red.shape[0]
    lane_np = np.zeros(n, dtype=np.int64)
    start_np = np.zeros(n, dtype=np.int64)
    offsets_np = np.zeros(n + 1, dtype=np.int64)
    crossing_np = np.zeros(n, dtype=np.float64)
    cdef cnp.int64_t[:] lane = lane_np
    cdef cnp.int64_t[:] start = start_np
    cdef cnp.int64_t[:] offsets = offsets_np
    cdef double[:] crossing = crossing_np
    # per-lane crossing lists stored as vehicle-index queues sorted by crossing time
    lane_members_np = np.zeros((lane_count, n), dtype=np.float64)
    cdef double[:, :] lane_members = lane_members_np
    lane_len_np = np.zeros(lane_count, dtype=np.int64)
    cdef cnp.int64_t[:] lane_len = lane_len_np
    lane_last_np = np.full(lane_count, -1, dtype=np.int64)
    cdef cnp.int64_t[:] lane_last = lane_last_np
    cdef Py_ssize_t cap = max(1024, n * 64)
    pos_np = np.empty(cap, dtype=np.float64)
    cdef double[:] pos = pos_np
    cdef Py_ssize_t total = 0
    cdef Py_ssize_t i, j, ln, best, cnt, ntied, pick, leader, lstart, lcount, loff, step, n0
    cdef double a, te, t, cand, u, fr, xl, sb, x, x_prev, cross, vdt = v * dt
    cdef double stop_x = -l0
    cdef cnp.int64_t[:] counts = np.zeros(lane_count, dtype=np.int64)
    for i in range(n):
        a = arrivals[i]
        te = a - entry_dist / v
        best = n + 1
        for j in range(lane_count):
            counts[j] = _count_after(lane_members[j], 0, lane_len[j], te)
            if counts[j] < best:
                best = counts[j]
        ntied = 0
        for j in range(lane_count):
            if counts[j] == best:
                ntied += 1
        pick = <Py_ssize_t>(tie_u[i] * ntied)
        if pick > ntied - 1:
            pick = ntied - 1
        ln = 0
        for j in range(lane_count):
            if counts[j] == best:
                if pick == 0:
                    ln = j
                    break
                pick -= 1
        leader = lane_last[ln]
        lstart = 0
        lcount = 0
        loff = 0
        if leader >= 0:
            lstart = start[leader]
            loff = offsets[leader]
            lcount = offsets[leader + 1] - loff
        n0 = <Py_ssize_t>ceil(te / dt)
        x_prev = 0.0
        cross = -1.0
        step = n0
        while True:
            t = step * dt
            if step == n0:
                cand = v * (t - a)
            else:
                cand = x_prev + vdt
            if leader >= 0:
                u = (t - tau) / dt - lstart
                if u <= 0.0:
                    xl = pos[loff] + v * u * dt
                elif u >= lcount - 1:
                    xl = pos[loff + lcount - 1] + v * (u - (lcount - 1)) * dt
                else:
                    j = <Py_ssize_t>u
                    fr = u - j
                    xl = pos[loff + j] + fr * (pos[loff + j + 1] - pos[loff + j])
                if xl - l0 < cand:
                    cand = xl - l0
            if 0 <= step < n_grid:
                if is_red[step]:
                    if x_prev < stop_x + 1e-9 and stop_x < cand:
                        cand = stop_x
                else:
                    sb = stop_x + v * (t - green_start[step] - tau)
                    if sb < stop_x:
                        sb = stop_x
                    if sb < cand:
                        cand = sb
            if step == n0:
                x = cand
            elif cand > x_prev:
                x = cand
            else:
                x = x_prev
            if cross < 0.0 and x >= 0.0 and step > n0:
                if x_prev < 0.0:
                    cross = t - dt + dt * (-x_prev) / (x - x_prev)
                else:
                    cross = t
            if total >= cap:
                cap *= 2
                pos_np = np.resize(pos_np, cap)
                pos = pos_np
            pos[total] = x
            total += 1
            x_prev = x
            if x >= exit_dist:
                break
            step += 1
            if step - n0 > max_steps:
                raise RuntimeError("vehicle failed to clear the approach")
        if cross < a:
            cross = a
        lane[i] = ln
        start[i] = n0
        crossing[i] = cross
        offsets[i + 1] = total
        lane_members[ln, lane_len[ln]] = cross
        lane_len[ln] += 1
        lane_last[ln] = i
    return lane_np, start_np, offsets_np, pos_np[:total].copy(), crossing_np


def scan_episodes(double[:] distances, double[:] speeds, Py_ssize_t end,
                  double threshold, double min_advance):
    cdef Py_ssize_t i, join = 0, anchor = 0, k = 0
    cdef bint in_ep = False
    out = np.empty((3, end // 2 + 1), dtype=np.int64)
    cdef cnp.int64_t[:, :] o = out
    for i in range(end):
        if speeds[i] < threshold:
            if not in_ep:
                in_ep = True
                join = i
            anchor = i
        elif in_ep and distances[anchor] - distances[i] > min_advance:
            o[0, k] = join
            o[1, k] = anchor
            o[2, k] = i
            k += 1
            in_ep = False
    return out[0, :k].copy(), out[1, :k].copy(), out[2, :k].copy()


cdef void _roots(double lam0, double delta, double[:] mu, double[:] sig2, double[:] N,
                 double[:] W, double[:] alpha, double[:] dalpha) nogil:
    cdef Py_ssize_t i
    cdef double a, disc
    for i in range(mu.shape[0]):
        a = mu[i] / sig2[i] - lam0 * W[i] - delta
        disc = sqrt(a * a + 4.0 * N[i] / sig2[i])
        if a >= 0.0:
            alpha[i] = 0.5 * sig2[i] * (a + disc)
        else:
            alpha[i] = 2.0 * N[i] / (disc - a)
        if disc > 0.0:
            dalpha[i] = 0.5 * sig2[i] * (1.0 + a / disc)
        else:
            dalpha[i] = 0.5 * sig2[i]


cdef void _residual(double lam0, double delta, double[:] mu, double[:] sig2, double[:] N,
                    double[:] W, double[:] alpha, double[:] dalpha,
                    double* f1, double* f2) nogil:
    cdef Py_ssize_t i
    cdef double sn = 0.0, swa = 0.0, sa = 0.0
    _roots(lam0, delta, mu, sig2, N, W, alpha, dalpha)
    for i in range(mu.shape[0]):
        sn += N[i]
        swa += W[i] * alpha[i]
        sa += alpha[i]
    f1[0] = sn - lam0 * swa
    f2[0] = sa - 1.0


cdef bint _solve_delta(double lam0, double* delta, double[:] mu, double[:] sig2,
                       double[:] N, double[:] W, double[:] alpha, double[:] dalpha,
                       double tol, long max_iter) nogil:
    cdef double lo = delta[0] - 1.0, hi = delta[0] + 1.0, step = 1.0
    cdef double f1, f2, d, g, nd
    cdef long it
    cdef Py_ssize_t i
    _residual(lam0, lo, mu, sig2, N, W, alpha, dalpha, &f1, &f2)
    while f2 < 0.0:
        step *= 2.0
        lo -= step
        if step > 1e300:
            return False
        _residual(lam0, lo, mu, sig2, N, W, alpha, dalpha, &f1, &f2)
    step = 1.0
    _residual(lam0, hi, mu, sig2, N, W, alpha, dalpha, &f1, &f2)
    while f2 > 0.0:
        step *= 2.0
        hi += step
        if step > 1e300:
            return False
        _residual(lam0, hi, mu, sig2, N, W, alpha, dalpha, &f1, &f2)
    d = 0.5 * (lo + hi)
    for it in range(max_iter):
        _residual(lam0, d, mu, sig2, N, W, alpha, dalpha, &f1, &f2)
        if fabs(f2) < tol:
            delta[0] = d
            return True
        if f2 > 0.0:
            lo = d
        else:
            hi = d
        g = 0.0
        for i in range(mu.shape[0]):
            g -= dalpha[i]
        if g < 0.0:
            nd = d - f2 / g
        else:
            nd = 0.5 * (lo + hi)
        if not (lo < nd < hi):
            nd = 0.5 * (lo + hi)
        d = nd
    delta[0] = d
    return False


cdef Py_ssize_t SCAN_POINTS = 48
cdef double SCAN_DECADES = 6.0


cdef double _log_post(double lam0, double[:] mu, double[:] sig2, double[:] N, double[:] W,
                      double[:] alpha) nogil:
    cdef Py_ssize_t i
    cdef double out = 0.0, sn = 0.0, r
    for i in range(mu.shape[0]):
        r = alpha[i] - mu[i]
        out -= 0.5 * r * r / sig2[i] + lam0 * W[i] * alpha[i]
        if N[i] > 0.0:
            out += N[i] * log(alpha[i])
        sn += N[i]
    return out + sn * log(lam0)


cdef bint _profile_root(double lo, double hi, double d_lo, double d_hi, double[:] mu,
                       double[:] sig2, double[:] N, double[:] W, double[:] alpha,
                       double[:] dalpha, double tol, long max_iter, double* lam_out,
                       double* d_out, long* it_out, double* norm_out) nogil:
    cdef double f_lo, f_hi, f1, f2, lam = lo, d = d_lo
    cdef int side = 0
    cdef long it
    cdef bint ok
    _residual(lo, d_lo, mu, sig2, N, W, alpha, dalpha, &f_lo, &f2)
    _residual(hi, d_hi, mu, sig2, N, W, alpha, dalpha, &f_hi, &f2)
    for it in range(1, max_iter + 1):
        lam = (lo * f_hi - hi * f_lo) / (f_hi - f_lo)
        if not (lo < lam < hi):
            lam = 0.5 * (lo + hi)
        ok = _solve_delta(lam, &d, mu, sig2, N, W, alpha, dalpha, tol, max_iter)
        _residual(lam, d, mu, sig2, N, W, alpha, dalpha, &f1, &f2)
        if ok and (fabs(f1) < tol or hi - lo < 1e-15 * hi):
            lam_out[0] = lam
            d_out[0] = d
            it_out[0] = it
            norm_out[0] = max(fabs(f1), fabs(f2))
            return True
        if f1 > 0.0:
            lo = lam
            f_lo = f1
            if side == 1:
                f_hi *= 0.5
            side = 1
        else:
            hi = lam
            f_hi = f1
            if side == -1:
                f_lo *= 0.5
            side = -1
    lam_out[0] = lam
    d_out[0] = d
    it_out[0] = max_iter
    norm_out[0] = INFINITY
    return False


cdef bint _newton(double* lam_io, double* delta_io, double lo, double hi, double[:] mu,
                  double[:] sig2, double[:] N, double[:] W, double[:] alpha, double[:] dalpha,
                  double tol, long max_iter, long max_halvings, long* it_out,
                  double* norm_out) nogil:
    cdef Py_ssize_t z = mu.shape[0], i
    cdef double lam0 = lam_io[0], delta = delta_io[0]
    cdef double f1, f2, g1 = 0.0, g2 = 0.0, norm, gnorm = 0.0
    cdef double swa, swwd, swd, sd, j11, j12, j21, j22, det, dl, dd, s, nl = 0.0, nd = 0.0
    cdef long it = 0, h
    cdef bint accepted
    _residual(lam0, delta, mu, sig2, N, W, alpha, dalpha, &f1, &f2)
    norm = max(fabs(f1), fabs(f2))
    while norm >= tol and it < max_iter:
        it += 1
        swa = 0.0
        swwd = 0.0
        swd = 0.0
        sd = 0.0
        for i in range(z):
            swa += W[i] * alpha[i]
            swwd += W[i] * W[i] * dalpha[i]
            swd += W[i] * dalpha[i]
            sd += dalpha[i]
        j11 = -swa + lam0 * swwd
        j12 = lam0 * swd
        j21 = -swd
        j22 = -sd
        det = j11 * j22 - j12 * j21
        if det == 0.0 or not isfinite(det):
            break
        dl = (-f1 * j22 + f2 * j12) / det
        dd = (-j11 * f2 + j21 * f1) / det
        s = 1.0
        accepted = False
        for h in range(max_halvings + 1):
            nl = lam0 + s * dl
            if lo < nl < hi:
                nd = delta + s * dd
                _residual(nl, nd, mu, sig2, N, W, alpha, dalpha, &g1, &g2)
                gnorm = max(fabs(g1), fabs(g2))
                if gnorm < norm:
                    accepted = True
                    break
            s *= 0.5
        if not accepted:
            break
        lam0 = nl
        delta = nd
        f1 = g1
        f2 = g2
        norm = gnorm
    lam_io[0] = lam0
    delta_io[0] = delta
    it_out[0] = it
    norm_out[0] = norm
    return norm < tol


def solve_reduced(double[:] N, double[:] W, double[:] mu, double[:] sig2,
                  double lam0_upper, double delta_init,
                  double tol=1e-8, long max_iter=200, long max_halvings=30):
    cdef Py_ssize_t z = mu.shape[0], i, j, m = SCAN_POINTS, cap = SCAN_POINTS + 1000
    alpha_np = np.zeros(z)
    dalpha_np = np.zeros(z)
    cdef double[:] alpha = alpha_np
    cdef double[:] dalpha = dalpha_np
    lams_np = np.empty(cap)
    deltas_np = np.empty(cap)
    fs_np = np.empty(cap)
    cdef double[:] lams = lams_np
    cdef double[:] deltas = deltas_np
    cdef double[:] fs = fs_np
    cdef double d = delta_init, f1, f2, lo, hi, w, lam, norm, val, total
    cdef double best_val = -INFINITY, best_lam = 0.0, best_d = 0.0, best_norm = 0.0
    cdef double last_norm = INFINITY
    cdef long it, extra, total_it = 0
    cdef int best_status = -1
    cdef bint ok
    # scan stored at the tail of the buffers so it can be extended downwards
    cdef Py_ssize_t first = cap - m
    for j in range(m):
        lam = lam0_upper * 10.0 ** (SCAN_DECADES * (j / <double>(m - 1) - 1.0))
        _solve_delta(lam, &d, mu, sig2, N, W, alpha, dalpha, tol, max_iter)
        _residual(lam, d, mu, sig2, N, W, alpha, dalpha, &f1, &f2)
        lams[first + j] = lam
        deltas[first + j] = d
        fs[first + j] = f1
    while fs[first] <= 0.0 and first > 0:
        lam = 0.5 * lams[first]
        d = deltas[first]
        _solve_delta(lam, &d, mu, sig2, N, W, alpha, dalpha, tol, max_iter)
        _residual(lam, d, mu, sig2, N, W, alpha, dalpha, &f1, &f2)
        first -= 1
        lams[first] = lam
        deltas[first] = d
        fs[first] = f1
    for j in range(first + 1, cap):
        if not (fs[j - 1] > 0.0 and fs[j] <= 0.0):
            continue
        lo = lams[j - 1]
        hi = lams[j]
        if fs[j] == 0.0:
            lam = hi
            d = deltas[j]
            ok = True
            it = 0
            norm = 0.0
        else:
            w = fs[j - 1] / (fs[j - 1] - fs[j])
            lam = lo + w * (hi - lo)
            d = deltas[j - 1] + w * (deltas[j] - deltas[j - 1])
            ok = _newton(&lam, &d, lo, hi, mu, sig2, N, W, alpha, dalpha, tol, max_iter,
                         max_halvings, &it, &norm)
            if not ok:
                ok = _profile_root(lo, hi, deltas[j - 1], deltas[j], mu, sig2, N, W, alpha,
                                   dalpha, tol, max_iter, &lam, &d, &extra, &norm)
                it += extra
        total_it += it
        last_norm = norm
        if not ok:
            continue
        _residual(lam, d, mu, sig2, N, W, alpha, dalpha, &f1, &f2)
        val = _log_post(lam, mu, sig2, N, W, alpha)
        if best_status < 0 or val > best_val:
            best_val = val
            best_lam = lam
            best_d = d
            best_norm = norm
            best_status = SOLVE_OK
    if fs[cap - 1] >= 0.0:
        d = deltas[cap - 1]
        ok = _solve_delta(lam0_upper, &d, mu, sig2, N, W, alpha, dalpha, tol, max_iter)
        _residual(lam0_upper, d, mu, sig2, N, W, alpha, dalpha, &f1, &f2)
        if not ok:
            total = 0.0
            for i in range(z):
                total += alpha[i]
            for i in range(z):
                alpha[i] /= total
        val = _log_post(lam0_upper, mu, sig2, N, W, alpha)
        if best_status < 0 or val > best_val:
            if not ok:
                return lam0_upper, d, alpha_np, SOLVE_RENORMALIZED, total_it, fabs(f2)
            best_val = val
            best_lam = lam0_upper
            best_d = d
            best_norm = fabs(f2)
            best_status = SOLVE_CLAMPED
    if best_status < 0:
        return lams[cap - 1], deltas[cap - 1], alpha_np, SOLVE_FAILED, total_it, last_norm
    _residual(best_lam, best_d, mu, sig2, N, W, alpha, dalpha, &f1, &f2)
    return best_lam, best_d, alpha_np, best_status, total_it, best_norm
