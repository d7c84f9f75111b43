"""Compiled fixed-step integration kernel for the built-in carriers.

Mirrors the reference implementations in `plant`, `fmobserver`, and
`fmcontrol`; tests assert agreement between the two paths.  Only the two
shipped carriers are compiled (dispatch by integer id); custom carriers run
through the generic Python path in `simkit`.

State layout (flattened, length n*p + n*q + ne*(p+q)):
    [sigma (n,p) | x (n,q) | sigma_hat (ne,p) | x_hat (ne,q)]

Scenario ids: 0 modulated, 1 ideal, 2 ideal_noisy, 3 modulated_noisy.
Status codes: 0 ok, 1 observer singularity, 2 non-finite state.
"""

import numpy as np
from numba import njit

CARRIER_ROTATIONAL = 0
CARRIER_HINDMARSH_ROSE = 1

SCEN_MODULATED = 0
SCEN_IDEAL = 1
SCEN_IDEAL_NOISY = 2
SCEN_MODULATED_NOISY = 3

STATUS_OK = 0
STATUS_SINGULAR = 1
STATUS_NONFINITE = 2


@njit(cache=True)
def _f(cid, x, out):
    if cid == CARRIER_ROTATIONAL:
        out[0] = x[1]
        out[1] = -x[0]
    else:
        out[0] = 2.0
        out[1] = -5.0 * x[0] * x[0] - x[1] + 1.0
        out[2] = 0.0


@njit(cache=True)
def _fo(cid, x, out):
    if cid == CARRIER_ROTATIONAL:
        out[0] = 0.0
        out[1] = 0.0
    else:
        v = x[0]
        out[0] = 3.0 * v * v - v ** 3 + x[1] - x[2]
        out[1] = 0.0
        out[2] = 0.005 * (4.0 * (v + 1.5) - x[2])


@njit(cache=True)
def _jac_f_times(cid, x, vec, out):
    """out = (d f / d x)(x) @ vec."""
    if cid == CARRIER_ROTATIONAL:
        out[0] = vec[1]
        out[1] = -vec[0]
    else:
        out[0] = 0.0
        out[1] = -10.0 * x[0] * vec[0] - vec[1]
        out[2] = 0.0


@njit(cache=True)
def _deriv(cid, y, dy, noise, S, B, E, omega_c, K_o, Sbar, beta, M,
           adjacency, edges, n, p, q, ne, scenario, f_floor):
    """Right-hand side on the flattened state; returns a status code."""
    x_off = n * p
    sh_off = x_off + n * q
    xh_off = sh_off + ne * p

    fh = np.empty(q)
    fy = np.empty(q)
    foy = np.empty(q)
    y_src = np.empty(q)
    x_t = np.empty(q)
    kap = np.empty(q)
    xhdot = np.empty(q)
    jv = np.empty(q)
    inner = np.empty(q)
    kxt = np.empty(p)
    kdf = np.empty(p)
    mu = np.empty(p)

    # control inputs
    chi = np.zeros(n)
    for e in range(ne):
        i = edges[e, 0]
        j = edges[e, 1]
        a_ij = adjacency[i, j]
        acc = 0.0
        if scenario == SCEN_MODULATED or scenario == SCEN_MODULATED_NOISY:
            for k in range(p):
                acc += M[k] * (y[i * p + k] - y[sh_off + e * p + k])
        else:
            for k in range(p):
                d = y[i * p + k] - y[j * p + k]
                if scenario == SCEN_IDEAL_NOISY:
                    d -= noise[e, k]
                acc += M[k] * d
        chi[i] -= a_ij * acc

    # agents
    for i in range(n):
        om = omega_c
        for k in range(p):
            om += E[k] * y[i * p + k]
        for k in range(p):
            s = B[k] * chi[i]
            for l in range(p):
                s += S[k, l] * y[i * p + l]
            dy[i * p + k] = s
        xi = y[x_off + i * q: x_off + (i + 1) * q]
        _f(cid, xi, fy)
        _fo(cid, xi, foy)
        for k in range(q):
            dy[x_off + i * q + k] = fy[k] * om + foy[k]

    # edge observers
    for e in range(ne):
        j = edges[e, 1]
        sh = y[sh_off + e * p: sh_off + (e + 1) * p]
        xh = y[xh_off + e * q: xh_off + (e + 1) * q]
        for k in range(q):
            y_src[k] = y[x_off + j * q + k]
            if scenario == SCEN_MODULATED_NOISY:
                y_src[k] += noise[e, k]
        om_hat = omega_c
        for k in range(p):
            om_hat += E[k] * sh[k]

        _f(cid, xh, fh)
        nf2 = 0.0
        for k in range(q):
            nf2 += fh[k] * fh[k]
        if nf2 <= f_floor * f_floor:
            return STATUS_SINGULAR
        _f(cid, y_src, fy)
        _fo(cid, y_src, foy)

        for k in range(q):
            x_t[k] = xh[k] - y_src[k]
        # K(x_hat) x_tilde = K_o * (f_hat . x_tilde) / ||f_hat||^2
        fdotxt = 0.0
        for k in range(q):
            fdotxt += fh[k] * x_t[k]
        fdotxt /= nf2
        ek = 0.0
        for k in range(p):
            kxt[k] = K_o[k] * fdotxt
            ek += E[k] * kxt[k]

        # kappa = -beta x_t - f(y) ek - (f_hat - f(y)) om_hat
        for k in range(q):
            kap[k] = -beta * x_t[k] - fy[k] * ek - (fh[k] - fy[k]) * om_hat
            xhdot[k] = fh[k] * om_hat + foy[k] + kap[k]
            dy[xh_off + e * q + k] = xhdot[k]

        # K' x_tilde with K' = K_o (Msym J_f xhdot)^T,
        # Msym = (||f||^2 I - 2 f f^T) / ||f||^4
        _jac_f_times(cid, xh, xhdot, jv)
        fdotjv = 0.0
        for k in range(q):
            fdotjv += fh[k] * jv[k]
        for k in range(q):
            inner[k] = (jv[k] - 2.0 * fh[k] * fdotjv / nf2) / nf2
        inner_dot_xt = 0.0
        for k in range(q):
            inner_dot_xt += inner[k] * x_t[k]

        # mu = K kappa + K df om_hat + K' x_t - Sbar K x_t - K df ek
        fdotkap = 0.0
        fdotdf = 0.0
        for k in range(q):
            fdotkap += fh[k] * kap[k]
            fdotdf += fh[k] * (fh[k] - fy[k])
        for k in range(p):
            kdf[k] = K_o[k] * fdotdf / nf2
        for k in range(p):
            sbkxt = 0.0
            for l in range(p):
                sbkxt += Sbar[k, l] * kxt[l]
            mu[k] = (K_o[k] * fdotkap / nf2 + kdf[k] * om_hat
                     + K_o[k] * inner_dot_xt - sbkxt - kdf[k] * ek)
        for k in range(p):
            s = mu[k]
            for l in range(p):
                s += S[k, l] * sh[l]
            dy[sh_off + e * p + k] = s
    return STATUS_OK


@njit(cache=True)
def _gen_noise(y, noise, edges, n, p, q, ne, x_off, scenario, noise_pct):
    if scenario == SCEN_IDEAL_NOISY:
        dim = p
    elif scenario == SCEN_MODULATED_NOISY:
        dim = q
    else:
        return
    for e in range(ne):
        j = edges[e, 1]
        nrm = 0.0
        if scenario == SCEN_IDEAL_NOISY:
            for k in range(p):
                nrm += y[j * p + k] ** 2
        else:
            for k in range(q):
                nrm += y[x_off + j * q + k] ** 2
        amp = noise_pct / 100.0 * np.sqrt(nrm)
        for k in range(dim):
            noise[e, k] = np.random.uniform(-amp, amp)


@njit(cache=True)
def run_network(cid, S, B, E, omega_c, K_o, Sbar, beta, M, adjacency, edges,
                sigma0, x0, sh0, xh0, dt, n_steps, record_stride, scenario,
                noise_pct, seed, f_floor, bx_bound):
    """Integrate the full closed loop; returns recorded series and event info.

    Returns (t_rec, y_rec, chi_rec, status, fail_step, bx_count, bx_first_t).
    y_rec rows are flattened states at record times.
    """
    n = sigma0.shape[0]
    p = sigma0.shape[1]
    q = x0.shape[1]
    ne = edges.shape[0]
    x_off = n * p
    dim = n * p + n * q + ne * (p + q)

    np.random.seed(seed)

    y = np.empty(dim)
    for i in range(n):
        for k in range(p):
            y[i * p + k] = sigma0[i, k]
        for k in range(q):
            y[x_off + i * q + k] = x0[i, k]
    sh_off = x_off + n * q
    xh_off = sh_off + ne * p
    for e in range(ne):
        for k in range(p):
            y[sh_off + e * p + k] = sh0[e, k]
        for k in range(q):
            y[xh_off + e * q + k] = xh0[e, k]

    n_rec = n_steps // record_stride + 1
    t_rec = np.empty(n_rec)
    y_rec = np.empty((n_rec, dim))
    chi_rec = np.empty((n_rec, n))

    noise = np.zeros((max(ne, 1), max(p, q)))
    k1 = np.empty(dim)
    k2 = np.empty(dim)
    k3 = np.empty(dim)
    k4 = np.empty(dim)
    yt = np.empty(dim)

    bx_count = 0
    bx_first_t = -1.0

    # record initial sample
    rec = 0
    t_rec[rec] = 0.0
    y_rec[rec] = y
    st = _deriv(cid, y, k1, noise, S, B, E, omega_c, K_o, Sbar, beta, M,
                adjacency, edges, n, p, q, ne, scenario, f_floor)
    if st != STATUS_OK:
        return t_rec[:1], y_rec[:1], chi_rec[:1], st, 0, bx_count, bx_first_t
    # chi at record time (recompute cheaply)
    for i in range(n):
        chi_rec[rec, i] = 0.0
    _store_chi(y, noise, chi_rec[rec], M, adjacency, edges, n, p, ne,
               sh_off, scenario)
    rec += 1

    for step in range(n_steps):
        _gen_noise(y, noise, edges, n, p, q, ne, x_off, scenario, noise_pct)
        st = _deriv(cid, y, k1, noise, S, B, E, omega_c, K_o, Sbar, beta, M,
                    adjacency, edges, n, p, q, ne, scenario, f_floor)
        if st != STATUS_OK:
            return t_rec[:rec], y_rec[:rec], chi_rec[:rec], st, step, bx_count, bx_first_t
        for k in range(dim):
            yt[k] = y[k] + 0.5 * dt * k1[k]
        st = _deriv(cid, yt, k2, noise, S, B, E, omega_c, K_o, Sbar, beta, M,
                    adjacency, edges, n, p, q, ne, scenario, f_floor)
        if st != STATUS_OK:
            return t_rec[:rec], y_rec[:rec], chi_rec[:rec], st, step, bx_count, bx_first_t
        for k in range(dim):
            yt[k] = y[k] + 0.5 * dt * k2[k]
        st = _deriv(cid, yt, k3, noise, S, B, E, omega_c, K_o, Sbar, beta, M,
                    adjacency, edges, n, p, q, ne, scenario, f_floor)
        if st != STATUS_OK:
            return t_rec[:rec], y_rec[:rec], chi_rec[:rec], st, step, bx_count, bx_first_t
        for k in range(dim):
            yt[k] = y[k] + dt * k3[k]
        st = _deriv(cid, yt, k4, noise, S, B, E, omega_c, K_o, Sbar, beta, M,
                    adjacency, edges, n, p, q, ne, scenario, f_floor)
        if st != STATUS_OK:
            return t_rec[:rec], y_rec[:rec], chi_rec[:rec], st, step, bx_count, bx_first_t
        for k in range(dim):
            y[k] += dt / 6.0 * (k1[k] + 2.0 * k2[k] + 2.0 * k3[k] + k4[k])

        if (step + 1) % record_stride == 0:
            t = (step + 1) * dt
            ok = True
            for k in range(dim):
                if not np.isfinite(y[k]):
                    ok = False
                    break
            if not ok:
                return (t_rec[:rec], y_rec[:rec], chi_rec[:rec],
                        STATUS_NONFINITE, step, bx_count, bx_first_t)
            # monitored (not enforced) bound ||x_hat - x_j|| < bx_bound
            if bx_bound > 0.0:
                for e in range(ne):
                    j = edges[e, 1]
                    nrm = 0.0
                    for k in range(q):
                        d = y[xh_off + e * q + k] - y[x_off + j * q + k]
                        nrm += d * d
                    if nrm > bx_bound * bx_bound:
                        bx_count += 1
                        if bx_first_t < 0.0:
                            bx_first_t = t
                        break
            t_rec[rec] = t
            y_rec[rec] = y
            for i in range(n):
                chi_rec[rec, i] = 0.0
            _store_chi(y, noise, chi_rec[rec], M, adjacency, edges, n, p, ne,
                       sh_off, scenario)
            rec += 1

    return t_rec[:rec], y_rec[:rec], chi_rec[:rec], STATUS_OK, n_steps, bx_count, bx_first_t


@njit(cache=True)
def _store_chi(y, noise, out, M, adjacency, edges, n, p, ne, sh_off, scenario):
    for e in range(ne):
        i = edges[e, 0]
        j = edges[e, 1]
        a_ij = adjacency[i, j]
        acc = 0.0
        if scenario == SCEN_MODULATED or scenario == SCEN_MODULATED_NOISY:
            for k in range(p):
                acc += M[k] * (y[i * p + k] - y[sh_off + e * p + k])
        else:
            for k in range(p):
                d = y[i * p + k] - y[j * p + k]
                if scenario == SCEN_IDEAL_NOISY:
                    d -= noise[e, k]
                acc += M[k] * d
        out[i] -= a_ij * acc


@njit(cache=True)
def run_plant_only(cid, S, E, omega_c, sigma0, x0, dt, n_steps):
    """Uncontrolled agents (chi = 0); returns per-agent min/max ||x(t)||."""
    n = sigma0.shape[0]
    p = sigma0.shape[1]
    q = x0.shape[1]
    sig = sigma0.copy()
    x = x0.copy()
    lo = np.empty(n)
    hi = np.empty(n)
    for i in range(n):
        nrm = 0.0
        for k in range(q):
            nrm += x[i, k] ** 2
        lo[i] = np.sqrt(nrm)
        hi[i] = lo[i]

    fbuf = np.empty(q)
    fobuf = np.empty(q)
    ks = np.empty((4, p))
    kx = np.empty((4, q))
    st = np.empty(p)
    xt = np.empty(q)
    coef = np.array([0.5, 0.5, 1.0])

    for _ in range(n_steps):
        for i in range(n):
            for stage in range(4):
                for k in range(p):
                    st[k] = sig[i, k]
                for k in range(q):
                    xt[k] = x[i, k]
                if stage > 0:
                    c = coef[stage - 1] * dt
                    for k in range(p):
                        st[k] += c * ks[stage - 1, k]
                    for k in range(q):
                        xt[k] += c * kx[stage - 1, k]
                om = omega_c
                for k in range(p):
                    om += E[k] * st[k]
                for k in range(p):
                    s = 0.0
                    for l in range(p):
                        s += S[k, l] * st[l]
                    ks[stage, k] = s
                _f(cid, xt, fbuf)
                _fo(cid, xt, fobuf)
                for k in range(q):
                    kx[stage, k] = fbuf[k] * om + fobuf[k]
            for k in range(p):
                sig[i, k] += dt / 6.0 * (ks[0, k] + 2 * ks[1, k] + 2 * ks[2, k] + ks[3, k])
            for k in range(q):
                x[i, k] += dt / 6.0 * (kx[0, k] + 2 * kx[1, k] + 2 * kx[2, k] + kx[3, k])
            nrm = 0.0
            for k in range(q):
                nrm += x[i, k] ** 2
            nrm = np.sqrt(nrm)
            if nrm < lo[i]:
                lo[i] = nrm
            if nrm > hi[i]:
                hi[i] = nrm
    return lo, hi
