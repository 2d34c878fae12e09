"""Compiled angular sweep used by the two-feature linear-score enumeration."""

import math

import numpy as np
from numba import njit

TWO_PI = 2.0 * math.pi


def sweep_pivots(v, g, dc, n_total, base_cost, kappa, budgeted, tol, btol, gap_tol, block=128):
    """Best line through each pivot.

    For pivot ``i`` every other point gets a polar angle around ``v[i]``; the
    line through ``v[i]`` with direction ``psi`` keeps the open half-plane of
    angles in ``(psi, psi + pi)``.  ``psi`` runs over midpoints of the gaps
    between angular events (point angles and their antipodes) and the pivot,
    together with points coinciding with it, is either added or not.

    Returns two tuples of per-pivot arrays ``(value, count, psi, pivot_in)``:
    the unconstrained optimum and the optimum among lines meeting the budget
    (identical when ``budgeted`` is false).  ``value`` is ``-inf`` when no
    feasible line exists.  Within a pivot, ties go to the smaller count, then
    to the first ``psi`` in sweep order.
    """
    n = v.shape[0]
    outs = [np.full(n, -np.inf) if k % 4 == 0 else np.zeros(n) for k in range(8)]
    for s in range(0, n, block):
        piv = np.arange(s, min(n, s + block))
        dx = v[None, :, 0] - v[piv, 0][:, None]
        dy = v[None, :, 1] - v[piv, 1][:, None]
        same = (dx == 0) & (dy == 0)
        ang = np.arctan2(dy, dx)
        ang = np.where(ang < 0, ang + TWO_PI, ang)
        ang[same] = np.inf
        order = np.argsort(ang, axis=1)
        a_s = np.take_along_axis(ang, order, 1)
        g_s = g[order]
        c_s = dc[order]
        m = n - same.sum(1)
        gp = (g[None, :] * same).sum(1)
        cp = (dc[None, :] * same).sum(1)
        kp = same.sum(1).astype(float)
        res = _sweep_block(a_s, g_s, c_s, m, gp, cp, kp, n_total, base_cost, kappa, budgeted,
                           tol, btol, gap_tol)
        for o, r in zip(outs, res):
            o[piv] = r
    return tuple(outs[:4]), tuple(outs[4:])


@njit(cache=True)
def _sweep_block(a_all, g_all, c_all, m_all, gp_all, cp_all, kp_all, n_total, base_cost, kappa,
                 budgeted, tol, btol, gap_tol):
    b = a_all.shape[0]
    out = np.zeros((8, b))
    out[0] = -np.inf
    out[4] = -np.inf
    for r in range(b):
        m = m_all[r]
        if m == 0:
            continue  # every point coincides with the pivot: only constant rules
        a_s = a_all[r]
        g_s = g_all[r]
        c_s = c_all[r]
        gp = gp_all[r]
        cp = cp_all[r]
        kp = kp_all[r]
        pg = np.zeros(2 * m + 1)
        pc = np.zeros(2 * m + 1)
        a2 = np.empty(2 * m)
        for k in range(2 * m):
            kk = k % m
            pg[k + 1] = pg[k] + g_s[kk]
            pc[k + 1] = pc[k] + c_s[kk]
            a2[k] = a_s[kk] + (TWO_PI if k >= m else 0.0)
        # antipodes form a cyclic shift of a sorted sequence; merge into events
        anti = np.empty(m)
        for k in range(m):
            t = a_s[k] + math.pi
            anti[k] = t - TWO_PI if t >= TWO_PI else t
        start = 0
        for k in range(1, m):
            if anti[k] < anti[k - 1]:
                start = k
                break
        ev = np.empty(2 * m)
        p1 = 0
        p2 = 0
        for k in range(2 * m):
            if p1 < m and (p2 >= m or a_s[p1] <= anti[(start + p2) % m]):
                ev[k] = a_s[p1]
                p1 += 1
            else:
                ev[k] = anti[(start + p2) % m]
                p2 += 1
        best = -np.inf
        bcnt = 0.0
        bpsi = 0.0
        bpin = 0.0
        cbest = -np.inf
        ccnt = 0.0
        cpsi = 0.0
        cpin = 0.0
        lo = 0
        hi = 0
        for k in range(2 * m):
            nxt = ev[k + 1] if k + 1 < 2 * m else ev[0] + TWO_PI
            if nxt - ev[k] <= gap_tol:
                continue
            psi = 0.5 * (ev[k] + nxt)
            while lo < 2 * m and a2[lo] <= psi:
                lo += 1
            if hi < lo:
                hi = lo
            while hi < 2 * m and a2[hi] < psi + math.pi:
                hi += 1
            wg = pg[hi] - pg[lo]
            wc = pc[hi] - pc[lo]
            wk = float(hi - lo)
            for pin in range(2):
                val = (wg + pin * gp) / n_total
                cnt = wk + pin * kp
                if val > best + tol or (val >= best - tol and cnt < bcnt):
                    best = val
                    bcnt = cnt
                    bpsi = psi
                    bpin = float(pin)
                if budgeted and base_cost + (wc + pin * cp) / n_total > kappa + btol:
                    continue
                if val > cbest + tol or (val >= cbest - tol and cnt < ccnt):
                    cbest = val
                    ccnt = cnt
                    cpsi = psi
                    cpin = float(pin)
        out[0, r] = best
        out[1, r] = bcnt
        out[2, r] = bpsi
        out[3, r] = bpin
        out[4, r] = cbest
        out[5, r] = ccnt
        out[6, r] = cpsi
        out[7, r] = cpin
    return out
