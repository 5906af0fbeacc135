"""Compiled inner loops for the moment integrator and the network stepper."""

from __future__ import annotations

import math

import numba as nb
import numpy as np

DIVERGENCE_THRESHOLD = 1e6


@nb.njit(cache=True, inline="always")
def _gauss_act(m, vv, amp, gain):
    if vv < 0.0:
        vv = 0.0
    return amp * 0.5 * math.erf(gain * m / math.sqrt(2.0 * (1.0 + gain * gain * vv)))


@nb.njit(cache=True, inline="always")
def _sig(x, amp, gain):
    return amp * 0.5 * math.erf(gain * x * 0.7071067811865476)


@nb.njit(cache=True, inline="always")
def _hermite(y0, m0, y1, m1, t, h):
    t2 = t * t
    omt = 1.0 - t
    omt2 = omt * omt
    return (1.0 + 2.0 * t) * omt2 * y0 + t * omt2 * h * m0 + t2 * (3.0 - 2.0 * t) * y1 + t2 * (t - 1.0) * h * m1


@nb.njit(cache=True)
def _moment_rhs(
    n, c, dt, h0, mu_st, v_st, mu, v, dmu_l, dmu_r, dv_l, dv_r,
    theta, lam, inp, jbar, sig2, qnode, qweight, qstart, amp, gain, out_mu, out_v,
):
    p = mu_st.shape[0]
    last = n + h0
    for a in range(p):
        acc_mu = -mu_st[a] / theta[a] + inp[a]
        acc_v = -2.0 * v_st[a] / theta[a] + lam[a] * lam[a]
        for g in range(p):
            b = a * p + g
            conv = 0.0
            for q in range(qstart[b], qstart[b + 1]):
                u = qnode[q]
                if u <= 0.0:
                    mq = mu_st[g]
                    vq = v_st[g]
                else:
                    x = (n + c) - u / dt + h0
                    j = int(math.floor(x))
                    if j < 0:
                        j = 0
                        x = 0.0
                    if j >= last:
                        # delay shorter than the current stage offset
                        d = (x - last) * dt
                        mq = mu[last, g] + dmu_r[last, g] * d
                        vq = v[last, g] + dv_r[last, g] * d
                    else:
                        t = x - j
                        mq = _hermite(mu[j, g], dmu_r[j, g], mu[j + 1, g], dmu_l[j + 1, g], t, dt)
                        vq = _hermite(v[j, g], dv_r[j, g], v[j + 1, g], dv_l[j + 1, g], t, dt)
                conv += qweight[q] * _gauss_act(mq, vq, amp, gain)
            acc_mu += jbar[a, g] * conv
            acc_v += sig2[a, g] * conv * conv
        out_mu[a] = acc_mu
        out_v[a] = acc_v


@nb.njit(cache=True, nogil=True)
def integrate_moments_rk4(
    mu, v, dmu_l, dmu_r, dv_l, dv_r, h0, n_steps, dt,
    theta, lam, inp, jbar, sig2, qnode, qweight, qstart, amp, gain,
):
    """Advance the moment equations in place.

    Rows ``0..h0`` of the state arrays hold the history (row ``h0`` is t=0).
    Returns -1 on success, otherwise the step at which the guard tripped.
    """
    p = mu.shape[1]
    k1m = np.empty(p)
    k1v = np.empty(p)
    k2m = np.empty(p)
    k2v = np.empty(p)
    k3m = np.empty(p)
    k3v = np.empty(p)
    k4m = np.empty(p)
    k4v = np.empty(p)
    ym = np.empty(p)
    yv = np.empty(p)
    for n in range(n_steps + 1):
        row = n + h0
        for a in range(p):
            ym[a] = mu[row, a]
            yv[a] = v[row, a]
        _moment_rhs(n, 0.0, dt, h0, ym, yv, mu, v, dmu_l, dmu_r, dv_l, dv_r,
                    theta, lam, inp, jbar, sig2, qnode, qweight, qstart, amp, gain, k1m, k1v)
        for a in range(p):
            dmu_r[row, a] = k1m[a]
            dv_r[row, a] = k1v[a]
            if n > 0:
                dmu_l[row, a] = k1m[a]
                dv_l[row, a] = k1v[a]
        if n == n_steps:
            break
        for a in range(p):
            ym[a] = mu[row, a] + 0.5 * dt * k1m[a]
            yv[a] = v[row, a] + 0.5 * dt * k1v[a]
        _moment_rhs(n, 0.5, dt, h0, ym, yv, mu, v, dmu_l, dmu_r, dv_l, dv_r,
                    theta, lam, inp, jbar, sig2, qnode, qweight, qstart, amp, gain, k2m, k2v)
        for a in range(p):
            ym[a] = mu[row, a] + 0.5 * dt * k2m[a]
            yv[a] = v[row, a] + 0.5 * dt * k2v[a]
        _moment_rhs(n, 0.5, dt, h0, ym, yv, mu, v, dmu_l, dmu_r, dv_l, dv_r,
                    theta, lam, inp, jbar, sig2, qnode, qweight, qstart, amp, gain, k3m, k3v)
        for a in range(p):
            ym[a] = mu[row, a] + dt * k3m[a]
            yv[a] = v[row, a] + dt * k3v[a]
        _moment_rhs(n, 1.0, dt, h0, ym, yv, mu, v, dmu_l, dmu_r, dv_l, dv_r,
                    theta, lam, inp, jbar, sig2, qnode, qweight, qstart, amp, gain, k4m, k4v)
        for a in range(p):
            nm = mu[row, a] + dt / 6.0 * (k1m[a] + 2.0 * k2m[a] + 2.0 * k3m[a] + k4m[a])
            nv = v[row, a] + dt / 6.0 * (k1v[a] + 2.0 * k2v[a] + 2.0 * k3v[a] + k4v[a])
            if not (abs(nm) <= DIVERGENCE_THRESHOLD and abs(nv) <= DIVERGENCE_THRESHOLD):
                return n
            mu[row + 1, a] = nm
            v[row + 1, a] = nv
    return -1


@nb.njit(cache=True)
def _accumulate_moments(x, offsets, sizes, out):
    p = sizes.shape[0]
    for g in range(p):
        lo = offsets[g]
        hi = lo + sizes[g]
        s1 = 0.0
        for i in range(lo, hi):
            s1 += x[i]
        nn = sizes[g]
        m = s1 / nn
        c2 = 0.0
        c3 = 0.0
        c4 = 0.0
        for i in range(lo, hi):
            d = x[i] - m
            d2 = d * d
            c2 += d2
            c3 += d2 * d
            c4 += d2 * d2
        out[g, 0] = m
        if nn > 1:
            out[g, 1] = c2 / (nn - 1)
        else:
            out[g, 1] = np.nan
        m2 = c2 / nn
        if m2 > 0.0:
            out[g, 2] = (c3 / nn) / m2**1.5
            out[g, 3] = (c4 / nn) / (m2 * m2) - 3.0
        else:
            out[g, 2] = np.nan
            out[g, 3] = np.nan


@nb.njit(cache=True, nogil=True)
def network_chunk(
    x, xbar, sbuf, popbuf, n_start, n_chunk, hist, dt,
    pop_of, offsets, sizes, theta, lam, inp, jbar, sig,
    amp, gain, block_const, block_lag, lag_mat, noise, mf, coupled,
    rec_idx, rec_stride, rec_x, rec_xbar, mom_x, mom_xbar, sup_err,
):
    """Advance ``n_chunk`` Euler-Maruyama steps starting at step ``n_start``.

    ``sbuf[slot, j]`` holds ``S(X^j)`` at time index ``m`` in slot
    ``(m + hist) % (hist + 1)``; ``popbuf`` holds the per-population sums.
    Moments and recordings are written for the state after each step, at
    time index ``n + 1``. Returns -1 on success or the first diverging step.
    """
    n_total = x.shape[0]
    p = sizes.shape[0]
    ring = hist + 1
    sq = math.sqrt(dt)
    xnew = np.empty(n_total)
    xbnew = np.empty(n_total)
    for k in range(n_chunk):
        n = n_start + k
        slot = (n + hist) % ring
        for g in range(p):
            popbuf[slot, g] = 0.0
        for j in range(n_total):
            s = _sig(x[j], amp, gain)
            sbuf[slot, j] = s
            popbuf[slot, pop_of[j]] += s
        for i in range(n_total):
            a = pop_of[i]
            drift = -x[i] / theta[a] + inp[a]
            diff = lam[a] * sq * noise[k, i, 0]
            for g in range(p):
                if block_const[a, g]:
                    ssum = popbuf[(n - block_lag[a, g] + hist) % ring, g]
                else:
                    ssum = 0.0
                    lo = offsets[g]
                    for j in range(lo, lo + sizes[g]):
                        ssum += sbuf[(n - lag_mat[i, j] + hist) % ring, j]
                drift += jbar[a, g] / sizes[g] * ssum
                diff += sig[a, g] / sizes[g] * ssum * sq * noise[k, i, 1 + g]
            xnew[i] = x[i] + dt * drift + diff
            if coupled:
                drift_b = -xbar[i] / theta[a] + inp[a]
                diff_b = lam[a] * sq * noise[k, i, 0]
                for g in range(p):
                    m = mf[n, a, g]
                    drift_b += jbar[a, g] * m
                    diff_b += sig[a, g] * m * sq * noise[k, i, 1 + g]
                xbnew[i] = xbar[i] + dt * drift_b + diff_b
        bad = False
        for i in range(n_total):
            if not abs(xnew[i]) <= DIVERGENCE_THRESHOLD:
                bad = True
            x[i] = xnew[i]
            if coupled:
                if not abs(xbnew[i]) <= DIVERGENCE_THRESHOLD:
                    bad = True
                xbar[i] = xbnew[i]
                d = x[i] - xbar[i]
                if d * d > sup_err[i]:
                    sup_err[i] = d * d
        if bad:
            return n
        # state now sits at time index n + 1
        _accumulate_moments(x, offsets, sizes, mom_x[n + 1])
        if coupled:
            _accumulate_moments(xbar, offsets, sizes, mom_xbar[n + 1])
        if (n + 1) % rec_stride == 0:
            r = (n + 1) // rec_stride
            for q in range(rec_idx.shape[0]):
                rec_x[r, q] = x[rec_idx[q]]
                if coupled:
                    rec_xbar[r, q] = xbar[rec_idx[q]]
    return -1


@nb.njit(cache=True)
def initial_moments(x, offsets, sizes, out):
    _accumulate_moments(x, offsets, sizes, out)
