"""Pure-Python kernels. Reference semantics for the compiled ``_ckernels``.

Three loops dominate runtime: the lane-by-lane car-following simulation,
stop-episode scanning over trajectory samples, and the reduced two-unknown
Newton solve run once per estimated cycle.
"""

import math
from bisect import bisect_right

import numpy as np

BACKEND = "python"

# solve_reduced status codes
SOLVE_OK = 0
SOLVE_CLAMPED = 1
SOLVE_FAILED = 2
SOLVE_RENORMALIZED = 3


def simulate_phase(arrivals, lane_count, is_red, green_start, dt, v, l0, tau,
                   entry_dist, exit_dist, tie_u, max_steps=200000):
    """Newell car-following of one lane group behind a signal on a time grid.

    ``arrivals`` are sorted free-flow stopline arrival times. ``is_red`` and
    ``green_start`` are per-grid-step signal state (grid step ``n`` is time
    ``n*dt``); steps past the end are treated as green. Position ``x`` is
    measured along the travel direction with the stopline at 0, so the
    distance to the stopline is ``-x``.

    Returns (lane, start_step, offsets, positions, crossing). The positions of
    vehicle ``i`` occupy ``positions[offsets[i]:offsets[i+1]]`` for grid steps
    starting at ``start_step[i]``.
    """
    n = len(arrivals)
    n_grid = len(is_red)
    lane = np.zeros(n, dtype=np.int64)
    start = np.zeros(n, dtype=np.int64)
    offsets = np.zeros(n + 1, dtype=np.int64)
    crossing = np.zeros(n, dtype=np.float64)
    chunks = []
    lane_cross = [[] for _ in range(lane_count)]
    lane_last = [-1] * lane_count
    vdt = v * dt
    stop_x = -l0
    total = 0
    for i in range(n):
        a = arrivals[i]
        te = a - entry_dist / v
        # shortest queue: fewest vehicles not yet across the stopline
        counts = [len(c) - bisect_right(c, te) for c in lane_cross]
        best = min(counts)
        tied = [j for j in range(lane_count) if counts[j] == best]
        ln = tied[min(int(tie_u[i] * len(tied)), len(tied) - 1)]
        leader = lane_last[ln]
        if leader >= 0:
            lstart = start[leader]
            lpos = chunks[leader]
            lcount = len(lpos)
        n0 = int(math.ceil(te / dt))
        pos = []
        x_prev = 0.0
        cross = -1.0
        step = n0
        while True:
            t = step * dt
            cand = v * (t - a) if step == n0 else x_prev + vdt
            if leader >= 0:
                u = (t - tau) / dt - lstart
                if u <= 0.0:
                    xl = lpos[0] + v * u * dt
                elif u >= lcount - 1:
                    xl = lpos[lcount - 1] + v * (u - (lcount - 1)) * dt
                else:
                    j = int(u)
                    fr = u - j
                    xl = lpos[j] + fr * (lpos[j + 1] - lpos[j])
                lb = xl - l0
                if lb < cand:
                    cand = lb
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
            else:
                x = cand if cand > x_prev else x_prev
            if cross < 0.0 and x >= 0.0 and step > n0:
                if x_prev < 0.0:
                    cross = t - dt + dt * (-x_prev) / (x - x_prev)
                else:
                    cross = t
            pos.append(x)
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
        chunks.append(pos)
        total += len(pos)
        offsets[i + 1] = total
        lane_cross[ln].append(cross)
        lane_last[ln] = i
    positions = np.fromiter((x for c in chunks for x in c), dtype=np.float64, count=total)
    return lane, start, offsets, positions, crossing


def scan_episodes(distances, speeds, end, threshold, min_advance):
    """Stop episodes among samples ``[0, end)``.

    An episode opens at the first sample slower than ``threshold``. It closes at
    the first later sample that is at least ``threshold`` fast and has advanced
    more than ``min_advance`` beyond the last slow sample. Returns arrays of
    (join_index, anchor_index, leave_index); episodes still open at ``end``
    are dropped.
    """
    joins = []
    anchors = []
    leaves = []
    in_ep = False
    join = anchor = 0
    for i in range(end):
        if speeds[i] < threshold:
            if not in_ep:
                in_ep = True
                join = i
            anchor = i
        elif in_ep and distances[anchor] - distances[i] > min_advance:
            joins.append(join)
            anchors.append(anchor)
            leaves.append(i)
            in_ep = False
    return (np.array(joins, dtype=np.int64), np.array(anchors, dtype=np.int64),
            np.array(leaves, dtype=np.int64))


def _roots(lam0, delta, mu, sig2, N, W, alpha, dalpha):
    z = len(mu)
    for i in range(z):
        a = mu[i] / sig2[i] - lam0 * W[i] - delta
        disc = math.sqrt(a * a + 4.0 * N[i] / sig2[i])
        if a >= 0.0:
            alpha[i] = 0.5 * sig2[i] * (a + disc)
        else:
            # cancellation-free form of the same root
            alpha[i] = 2.0 * N[i] / (disc - a)
        if disc > 0.0:
            dalpha[i] = 0.5 * sig2[i] * (1.0 + a / disc)
        else:
            dalpha[i] = 0.5 * sig2[i]


def _residual(lam0, delta, mu, sig2, N, W, alpha, dalpha):
    _roots(lam0, delta, mu, sig2, N, W, alpha, dalpha)
    sn = 0.0
    swa = 0.0
    sa = 0.0
    for i in range(len(mu)):
        sn += N[i]
        swa += W[i] * alpha[i]
        sa += alpha[i]
    return sn - lam0 * swa, sa - 1.0


def _solve_delta(lam0, delta, mu, sig2, N, W, alpha, dalpha, tol, max_iter):
    """Root of sum(alpha) = 1 in delta at fixed lam0 (monotone decreasing)."""
    # bracket, then safeguarded Newton
    lo, hi = delta - 1.0, delta + 1.0
    step = 1.0
    while _residual(lam0, lo, mu, sig2, N, W, alpha, dalpha)[1] < 0.0:
        step *= 2.0
        lo -= step
        if step > 1e300:
            return delta, False
    step = 1.0
    while _residual(lam0, hi, mu, sig2, N, W, alpha, dalpha)[1] > 0.0:
        step *= 2.0
        hi += step
        if step > 1e300:
            return delta, False
    d = 0.5 * (lo + hi)
    for _ in range(max_iter):
        f = _residual(lam0, d, mu, sig2, N, W, alpha, dalpha)[1]
        if abs(f) < tol:
            return d, True
        if f > 0.0:
            lo = d
        else:
            hi = d
        g = 0.0
        for i in range(len(mu)):
            g -= dalpha[i]
        nd = d - f / g if g < 0.0 else 0.5 * (lo + hi)
        if not lo < nd < hi:
            nd = 0.5 * (lo + hi)
        d = nd
    return d, False


SCAN_POINTS = 48
SCAN_DECADES = 6.0


def _log_post(lam0, mu, sig2, N, W, alpha):
    out = 0.0
    sn = 0.0
    for i in range(len(mu)):
        r = alpha[i] - mu[i]
        out -= 0.5 * r * r / sig2[i] + lam0 * W[i] * alpha[i]
        if N[i] > 0.0:
            out += N[i] * math.log(alpha[i])
        sn += N[i]
    return out + sn * math.log(lam0)


def _profile_root(lo, hi, d_lo, d_hi, mu, sig2, N, W, alpha, dalpha, tol, max_iter):
    """Illinois root of F1(lam0, delta(lam0)) on a sign-changing bracket."""
    f_lo = _residual(lo, d_lo, mu, sig2, N, W, alpha, dalpha)[0]
    f_hi = _residual(hi, d_hi, mu, sig2, N, W, alpha, dalpha)[0]
    side = 0
    lam, d = lo, d_lo
    for it in range(1, max_iter + 1):
        lam = (lo * f_hi - hi * f_lo) / (f_hi - f_lo)
        if not lo < lam < hi:
            lam = 0.5 * (lo + hi)
        d, ok = _solve_delta(lam, d, mu, sig2, N, W, alpha, dalpha, tol, max_iter)
        f1, f2 = _residual(lam, d, mu, sig2, N, W, alpha, dalpha)
        if ok and (abs(f1) < tol or hi - lo < 1e-15 * hi):
            return lam, d, True, it, max(abs(f1), abs(f2))
        if f1 > 0.0:
            lo, f_lo = lam, f1
            if side == 1:
                f_hi *= 0.5
            side = 1
        else:
            hi, f_hi = lam, f1
            if side == -1:
                f_lo *= 0.5
            side = -1
    return lam, d, False, max_iter, math.inf


def _newton(lam0, delta, lo, hi, mu, sig2, N, W, alpha, dalpha, tol, max_iter, max_halvings):
    """Damped Newton on (F1, F2) with lambda0 kept strictly inside (lo, hi)."""
    z = len(mu)
    f1, f2 = _residual(lam0, delta, mu, sig2, N, W, alpha, dalpha)
    norm = max(abs(f1), abs(f2))
    it = 0
    while norm >= tol and it < max_iter:
        it += 1
        swa = swwd = swd = sd = 0.0
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
        if det == 0.0 or not math.isfinite(det):
            break
        dl = (-f1 * j22 + f2 * j12) / det
        dd = (-j11 * f2 + j21 * f1) / det
        s = 1.0
        accepted = False
        for _ in range(max_halvings + 1):
            nl = lam0 + s * dl
            if lo < nl < hi:
                nd = delta + s * dd
                g1, g2 = _residual(nl, nd, mu, sig2, N, W, alpha, dalpha)
                gnorm = max(abs(g1), abs(g2))
                if gnorm < norm:
                    accepted = True
                    break
            s *= 0.5
        if not accepted:
            break
        lam0, delta, f1, f2, norm = nl, nd, g1, g2, gnorm
    return lam0, delta, norm < tol, it, norm


def solve_reduced(N, W, mu, sig2, lam0_upper, delta_init,
                  tol=1e-8, max_iter=200, max_halvings=30):
    """MAP conditions reduced to (lambda0, delta), solved by damped Newton.

    With the shares profiled out (delta solved so they sum to one) the
    posterior is a function of lambda0 alone whose slope has the sign of F1.
    A geometric scan of F1 over the support brackets every local maximum;
    each bracket is refined by damped Newton on the two-unknown system, kept
    inside the bracket so it cannot chase the asymptotic root at infinity
    carried by unobserved phases, with a bracketed 1-D root search as
    backup. The upper bound is a candidate when F1 >= 0 there. The
    candidate with the highest log posterior wins. ``delta_init`` only warm
    starts the multiplier search.

    Returns (lam0, delta, alpha, status, iterations, residual_norm).
    """
    z = len(mu)
    alpha = np.zeros(z)
    dalpha = np.zeros(z)
    lams = [lam0_upper * 10.0 ** (SCAN_DECADES * (j / (SCAN_POINTS - 1) - 1.0))
            for j in range(SCAN_POINTS)]
    deltas = []
    fs = []
    d = delta_init
    for lam in lams:
        d, _ = _solve_delta(lam, d, mu, sig2, N, W, alpha, dalpha, tol, max_iter)
        deltas.append(d)
        fs.append(_residual(lam, d, mu, sig2, N, W, alpha, dalpha)[0])
    # F1 -> sum(N) > 0 as lambda0 -> 0; extend downwards until it shows
    for _ in range(1000):
        if fs[0] > 0.0:
            break
        lam = 0.5 * lams[0]
        d, _ = _solve_delta(lam, deltas[0], mu, sig2, N, W, alpha, dalpha, tol, max_iter)
        lams.insert(0, lam)
        deltas.insert(0, d)
        fs.insert(0, _residual(lam, d, mu, sig2, N, W, alpha, dalpha)[0])
    best = None
    total_it = 0
    last_norm = math.inf
    for j in range(1, len(lams)):
        if not (fs[j - 1] > 0.0 and fs[j] <= 0.0):
            continue
        lo, hi = lams[j - 1], lams[j]
        if fs[j] == 0.0:
            lam, d, ok, it, norm = hi, deltas[j], True, 0, 0.0
        else:
            w = fs[j - 1] / (fs[j - 1] - fs[j])
            lam, d, ok, it, norm = _newton(lo + w * (hi - lo), deltas[j - 1] + w * (deltas[j] - deltas[j - 1]),
                                           lo, hi, mu, sig2, N, W, alpha, dalpha, tol, max_iter,
                                           max_halvings)
            if not ok:
                lam, d, ok, extra, norm = _profile_root(lo, hi, deltas[j - 1], deltas[j], mu, sig2, N,
                                                        W, alpha, dalpha, tol, max_iter)
                it += extra
        total_it += it
        last_norm = norm
        if not ok:
            continue
        _residual(lam, d, mu, sig2, N, W, alpha, dalpha)
        val = _log_post(lam, mu, sig2, N, W, alpha)
        if best is None or val > best[0]:
            best = (val, lam, d, SOLVE_OK, norm)
    if fs[-1] >= 0.0:
        d = deltas[-1]
        d, ok = _solve_delta(lam0_upper, d, mu, sig2, N, W, alpha, dalpha, tol, max_iter)
        f2 = _residual(lam0_upper, d, mu, sig2, N, W, alpha, dalpha)[1]
        if not ok:
            alpha /= alpha.sum()
        val = _log_post(lam0_upper, mu, sig2, N, W, alpha)
        if best is None or val > best[0]:
            best = (val, lam0_upper, d, SOLVE_CLAMPED if ok else SOLVE_RENORMALIZED, abs(f2))
            if not ok:
                return lam0_upper, d, alpha, SOLVE_RENORMALIZED, total_it, abs(f2)
    if best is None:
        return lams[-1], deltas[-1], alpha, SOLVE_FAILED, total_it, last_norm
    _, lam, d, status, norm = best
    _residual(lam, d, mu, sig2, N, W, alpha, dalpha)
    return lam, d, alpha, status, total_it, norm
