"""Compiled kernels for time integration.

Hamiltonians are handed to the integrator as packed term lists: per term a
CSR matrix (concatenated index/data arrays) plus a 10-float envelope code
matching :meth:`noonsim.pulses.Envelope.pack`.  A single adaptive
Dormand-Prince 5(4) driver serves both the Schrodinger path (mode 0,
y is a state vector) and the Lindblad path (mode 1, y is a flattened
density matrix).  Everything here is deterministic.

For the Lindblad right-hand side the anti-hermitian damping -i/2 sum
gamma O^dag O is folded into the term list by the caller, so the kernel
computes  drho = -i(M - M^dag) + recycling,  M = K(t) rho,  which keeps
rho exactly hermitian in exact arithmetic.  Recycling terms gamma O rho
O^dag come in two flavours: qudit-block jumps (|i><j| on the qudit tensor
cavity identities, a pure block copy) and generic sparse jumps.
"""

import numpy as np
from numba import njit

STATUS_OK = 0
STATUS_MIN_STEP = 1
STATUS_MAX_STEPS = 2

# Dormand-Prince 5(4) tableau (same pair as scipy's RK45)
_A21 = 1.0 / 5.0
_A31, _A32 = 3.0 / 40.0, 9.0 / 40.0
_A41, _A42, _A43 = 44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0
_A51, _A52, _A53, _A54 = (
    19372.0 / 6561.0,
    -25360.0 / 2187.0,
    64448.0 / 6561.0,
    -212.0 / 729.0,
)
_A61, _A62, _A63, _A64, _A65 = (
    9017.0 / 3168.0,
    -355.0 / 33.0,
    46732.0 / 5247.0,
    49.0 / 176.0,
    -5103.0 / 18656.0,
)
_B1, _B3, _B4, _B5, _B6 = (
    35.0 / 384.0,
    500.0 / 1113.0,
    125.0 / 192.0,
    -2187.0 / 6784.0,
    11.0 / 84.0,
)
_E1, _E3, _E4, _E5, _E6, _E7 = (
    71.0 / 57600.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
)
_C2, _C3, _C4, _C5 = 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0


@njit(cache=True)
def _env_val(kind, p, t):
    """Envelope value; must mirror noonsim.pulses.Envelope.__call__."""
    if t < p[0] or t > p[1]:
        return 0.0j
    val = complex(p[2], p[3])
    if kind == 1:
        tau = p[7]
        s = t - p[6]
        if s < 0.0:
            s = 0.0
        elif s > tau:
            s = tau
        th = np.pi * np.sin(0.5 * np.pi * s / tau) ** 2
        thd = (np.pi**2 / (2.0 * tau)) * np.sin(np.pi * s / tau)
        s3 = np.sin(th) ** 3
        a = p[8]
        b = (4.0 * a / 3.0) * s3
        re = 0.5 * thd * (4.0 * a * np.sin(b) * s3 - np.cos(b))
        im = 0.5 * thd * (4.0 * a * np.cos(b) * s3 + np.sin(b))
        val = val * complex(re, im)
    if p[4] != 0.0:
        ph = p[4] * (t - p[5])
        val = val * complex(np.cos(ph), np.sin(ph))
    if p[9] != 0.0:
        val = np.conj(val)
    return val


@njit(cache=True)
def _state_rhs(t, y, out, kinds, params, indptr, indices, data):
    out[:] = 0.0j
    nterms = kinds.shape[0]
    n = indptr.shape[1] - 1
    for k in range(nterms):
        c = _env_val(kinds[k], params[k], t)
        if c == 0.0j:
            continue
        m = -1j * c
        for r in range(n):
            s = 0.0j
            for p in range(indptr[k, r], indptr[k, r + 1]):
                s += data[p] * y[indices[p]]
            out[r] += m * s


@njit(cache=True)
def _density_rhs(
    t,
    y,
    out,
    kinds,
    params,
    indptr,
    indices,
    data,
    nside,
    bj_rates,
    bj_blocks,
    blocksize,
    gj_rates,
    gj_indptr,
    gj_indices,
    gj_data,
    work,
):
    rho = y.reshape(nside, nside)
    dr = out.reshape(nside, nside)
    m = work
    m[:, :] = 0.0j
    nterms = kinds.shape[0]
    for k in range(nterms):
        c = _env_val(kinds[k], params[k], t)
        if c == 0.0j:
            continue
        for r in range(nside):
            for p in range(indptr[k, r], indptr[k, r + 1]):
                v = c * data[p]
                col = indices[p]
                for j in range(nside):
                    m[r, j] += v * rho[col, j]
    # drho = -i (M - M^dag)
    for r in range(nside):
        for j in range(nside):
            dr[r, j] = -1j * (m[r, j] - np.conj(m[j, r]))
    # qudit-block recycling: out[ib, ib] += gamma * rho[jb, jb]
    for b in range(bj_rates.shape[0]):
        g = bj_rates[b]
        i0 = bj_blocks[b, 0] * blocksize
        j0 = bj_blocks[b, 1] * blocksize
        for r in range(blocksize):
            for cc in range(blocksize):
                dr[i0 + r, i0 + cc] += g * rho[j0 + r, j0 + cc]
    # generic recycling: out += gamma * O rho O^dag
    for q in range(gj_rates.shape[0]):
        g = gj_rates[q]
        m[:, :] = 0.0j
        for r in range(nside):
            for p in range(gj_indptr[q, r], gj_indptr[q, r + 1]):
                v = gj_data[p]
                col = gj_indices[p]
                for j in range(nside):
                    m[r, j] += v * rho[col, j]
        for r in range(nside):
            for p in range(gj_indptr[q, r], gj_indptr[q, r + 1]):
                v = g * np.conj(gj_data[p])
                col = gj_indices[p]
                for i in range(nside):
                    dr[i, r] += v * m[i, col]


@njit(cache=True)
def _rhs(
    mode,
    t,
    y,
    out,
    kinds,
    params,
    indptr,
    indices,
    data,
    nside,
    bj_rates,
    bj_blocks,
    blocksize,
    gj_rates,
    gj_indptr,
    gj_indices,
    gj_data,
    work,
):
    if mode == 0:
        _state_rhs(t, y, out, kinds, params, indptr, indices, data)
    else:
        _density_rhs(
            t,
            y,
            out,
            kinds,
            params,
            indptr,
            indices,
            data,
            nside,
            bj_rates,
            bj_blocks,
            blocksize,
            gj_rates,
            gj_indptr,
            gj_indices,
            gj_data,
            work,
        )


@njit(cache=True)
def _error_norm(k, y, ynew, h, atol, rtol):
    n = y.shape[0]
    acc = 0.0
    for i in range(n):
        e = h * (
            _E1 * k[0, i]
            + _E3 * k[2, i]
            + _E4 * k[3, i]
            + _E5 * k[4, i]
            + _E6 * k[5, i]
            + _E7 * k[6, i]
        )
        sc = atol + rtol * max(abs(y[i]), abs(ynew[i]))
        acc += (abs(e) / sc) ** 2
    return np.sqrt(acc / n)


@njit(cache=True)
def rk45_advance(
    mode,
    t,
    t_end,
    y,
    h,
    rtol,
    atol,
    max_step,
    nmax_steps,
    kinds,
    params,
    indptr,
    indices,
    data,
    nside,
    bj_rates,
    bj_blocks,
    blocksize,
    gj_rates,
    gj_indptr,
    gj_indices,
    gj_data,
    k,
    ytmp,
    work,
    fsal_valid,
):
    """Advance y from t toward t_end with adaptive Dormand-Prince 5(4).

    y, the 7-stage buffer k, ytmp and work are modified in place.  Returns
    (t_reached, h_next, accepted, rejected, nfev, status, fsal_valid).
    ``fsal_valid`` nonzero means k[0] already holds f(t, y) on entry/exit.
    """
    n = y.shape[0]
    nacc = 0
    nrej = 0
    nfev = 0
    span = abs(t_end - t)
    if span == 0.0:
        return t, h, 0, 0, 0, STATUS_OK, fsal_valid
    min_step = 1e-14 * max(abs(t), abs(t_end), 1.0)

    if fsal_valid == 0:
        _rhs(mode, t, y, k[0], kinds, params, indptr, indices, data, nside,
             bj_rates, bj_blocks, blocksize, gj_rates, gj_indptr, gj_indices,
             gj_data, work)
        nfev += 1
        fsal_valid = 1

    if h <= 0.0:
        # first-step heuristic: h ~ 0.01 * ||scale|| / ||f||
        d1 = 0.0
        for i in range(n):
            sc = atol + rtol * abs(y[i])
            d1 += (abs(k[0, i]) / sc) ** 2
        d1 = np.sqrt(d1 / n)
        h = 0.01 / max(d1, 1e-10)
    h = min(h, max_step, span)

    while t < t_end:
        if h < min_step:
            return t, h, nacc, nrej, nfev, STATUS_MIN_STEP, fsal_valid
        if nacc >= nmax_steps:
            return t, h, nacc, nrej, nfev, STATUS_MAX_STEPS, fsal_valid
        if t + h > t_end:
            h = t_end - t

        for i in range(n):
            ytmp[i] = y[i] + h * _A21 * k[0, i]
        _rhs(mode, t + _C2 * h, ytmp, k[1], kinds, params, indptr, indices,
             data, nside, bj_rates, bj_blocks, blocksize, gj_rates, gj_indptr,
             gj_indices, gj_data, work)
        for i in range(n):
            ytmp[i] = y[i] + h * (_A31 * k[0, i] + _A32 * k[1, i])
        _rhs(mode, t + _C3 * h, ytmp, k[2], kinds, params, indptr, indices,
             data, nside, bj_rates, bj_blocks, blocksize, gj_rates, gj_indptr,
             gj_indices, gj_data, work)
        for i in range(n):
            ytmp[i] = y[i] + h * (_A41 * k[0, i] + _A42 * k[1, i] + _A43 * k[2, i])
        _rhs(mode, t + _C4 * h, ytmp, k[3], kinds, params, indptr, indices,
             data, nside, bj_rates, bj_blocks, blocksize, gj_rates, gj_indptr,
             gj_indices, gj_data, work)
        for i in range(n):
            ytmp[i] = y[i] + h * (
                _A51 * k[0, i] + _A52 * k[1, i] + _A53 * k[2, i] + _A54 * k[3, i]
            )
        _rhs(mode, t + _C5 * h, ytmp, k[4], kinds, params, indptr, indices,
             data, nside, bj_rates, bj_blocks, blocksize, gj_rates, gj_indptr,
             gj_indices, gj_data, work)
        for i in range(n):
            ytmp[i] = y[i] + h * (
                _A61 * k[0, i]
                + _A62 * k[1, i]
                + _A63 * k[2, i]
                + _A64 * k[3, i]
                + _A65 * k[4, i]
            )
        _rhs(mode, t + h, ytmp, k[5], kinds, params, indptr, indices, data,
             nside, bj_rates, bj_blocks, blocksize, gj_rates, gj_indptr,
             gj_indices, gj_data, work)
        # 5th-order solution into ytmp
        for i in range(n):
            ytmp[i] = y[i] + h * (
                _B1 * k[0, i]
                + _B3 * k[2, i]
                + _B4 * k[3, i]
                + _B5 * k[4, i]
                + _B6 * k[5, i]
            )
        _rhs(mode, t + h, ytmp, k[6], kinds, params, indptr, indices, data,
             nside, bj_rates, bj_blocks, blocksize, gj_rates, gj_indptr,
             gj_indices, gj_data, work)
        nfev += 6

        err = _error_norm(k, y, ytmp, h, atol, rtol)
        if err <= 1.0:
            t = t + h
            for i in range(n):
                y[i] = ytmp[i]
                k[0, i] = k[6, i]  # FSAL
            nacc += 1
            if err == 0.0:
                factor = 5.0
            else:
                factor = min(5.0, max(0.2, 0.9 * err ** (-0.2)))
            h = min(h * factor, max_step)
        else:
            nrej += 1
            h = h * min(0.9, max(0.2, 0.9 * err ** (-0.2)))

    return t, h, nacc, nrej, nfev, STATUS_OK, fsal_valid


@njit(cache=True)
def norm2(y):
    acc = 0.0
    for i in range(y.shape[0]):
        acc += y[i].real ** 2 + y[i].imag ** 2
    return acc
