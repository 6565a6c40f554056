"""Numba kernels shared by the problem model and the spin / statevector engines.

Polynomials are stored in CSR form: term ``t`` owns ``var[ptr[t]:ptr[t+1]]``
and has coefficient ``coef[t]``. Ordered spin pairs are two parallel index
arrays ``pi``, ``pj`` of even length ``2E``: entry ``p < E`` is an edge
``(a, b)`` and entry ``p + E`` is its reverse ``(b, a)``.
"""

import numpy as np
from numba import njit

CC_FALQON = 0
CC_IFALQON = 1
CACAO = 2
HOT_CACAO = 3
HOT_CACAO_PLUS = 4

FALQON = 0
IFALQON = 1


# -- polynomial ---------------------------------------------------------------

@njit(cache=True)
def poly_energy(z, ptr, var, coef):
    e = 0.0
    for t in range(coef.shape[0]):
        p = coef[t]
        for a in range(ptr[t], ptr[t + 1]):
            p *= z[var[a]]
        e += p
    return e


@njit(cache=True)
def poly_energy_grad(z, ptr, var, coef, grad):
    """Energy and dE/dz_i (written into ``grad``) in one pass over the terms."""
    grad[:] = 0.0
    e = 0.0
    for t in range(coef.shape[0]):
        lo = ptr[t]
        size = ptr[t + 1] - lo
        c = coef[t]
        if size == 0:
            e += c
        elif size == 1:
            a = var[lo]
            e += c * z[a]
            grad[a] += c
        elif size == 2:
            a = var[lo]
            b = var[lo + 1]
            za = z[a]
            zb = z[b]
            e += c * za * zb
            grad[a] += c * zb
            grad[b] += c * za
        elif size == 3:
            a = var[lo]
            b = var[lo + 1]
            d = var[lo + 2]
            za = z[a]
            zb = z[b]
            zd = z[d]
            czd = c * zd
            e += czd * za * zb
            grad[a] += czd * zb
            grad[b] += czd * za
            grad[d] += c * za * zb
        else:
            hi = lo + size
            full = c
            for x in range(lo, hi):
                full *= z[var[x]]
            e += full
            for x in range(lo, hi):
                p = c
                for y in range(lo, hi):
                    if y != x:
                        p *= z[var[y]]
                grad[var[x]] += p
    return e


@njit(cache=True)
def poly_gradient_component(z, ptr, var, coef, inc_ptr, inc_terms, i):
    g = 0.0
    for s in range(inc_ptr[i], inc_ptr[i + 1]):
        t = inc_terms[s]
        p = coef[t]
        for a in range(ptr[t], ptr[t + 1]):
            if var[a] != i:
                p *= z[var[a]]
        g += p
    return g


@njit(cache=True)
def poly_diagonal(n, ptr, var, coef):
    """Energies of all 2**n basis states; bit i set means z_i = -1."""
    dim = 1 << n
    out = np.zeros(dim)
    for t in range(coef.shape[0]):
        mask = 0
        for a in range(ptr[t], ptr[t + 1]):
            mask |= 1 << var[a]
        c = coef[t]
        for b in range(dim):
            # parity of the flipped bits inside the term
            x = b & mask
            par = 0
            while x:
                x &= x - 1
                par ^= 1
            if par:
                out[b] -= c
            else:
                out[b] += c
    return out


@njit(cache=True)
def clause_ground(n, masks, viol):
    """Exhaustive minimum of unsatisfied-clause count.

    Enumerates assignments in lexicographic order of the value vector
    (variable 0 first, -1 before +1) and returns the first minimizer code.
    """
    m = masks.shape[0]
    best = m + 1
    best_code = 0
    for c in range(1 << n):
        # map lexicographic code -> bit pattern (bit i set <=> z_i = -1)
        b = 0
        for i in range(n):
            if ((c >> (n - 1 - i)) & 1) == 0:
                b |= 1 << i
        cnt = 0
        for a in range(m):
            if (b & masks[a]) == viol[a]:
                cnt += 1
                if cnt >= best:
                    break
        if cnt < best:
            best = cnt
            best_code = b
            if best == 0:
                break
    return best, best_code


# -- classical spin dynamics --------------------------------------------------

@njit(cache=True)
def compute_controls(kind, m, g, pi, pj, bx, by, bp):
    n = m.shape[0]
    if kind == CC_FALQON:
        s = 0.0
        for i in range(n):
            s += m[i, 1] * g[i]
        for i in range(n):
            bx[i] = -2.0 * s
    if kind == CC_IFALQON or kind == HOT_CACAO_PLUS:
        for i in range(n):
            bx[i] = -2.0 * m[i, 1] * g[i]
    if kind == CACAO or kind == HOT_CACAO or kind == HOT_CACAO_PLUS:
        for i in range(n):
            by[i] = 2.0 * m[i, 0] * g[i]
    if kind == HOT_CACAO or kind == HOT_CACAO_PLUS:
        for p in range(pi.shape[0]):
            i = pi[p]
            bp[p] = 2.0 * m[i, 0] * m[pj[p], 2] * g[i]


@njit(cache=True)
def effective_field(kind, m, g, pi, pj, bx, by, bp, h):
    n = m.shape[0]
    h[:, :] = 0.0
    if kind == CC_FALQON or kind == CC_IFALQON or kind == HOT_CACAO_PLUS:
        for i in range(n):
            h[i, 0] = -bx[i]
            h[i, 2] = -g[i]
    if kind == CACAO or kind == HOT_CACAO or kind == HOT_CACAO_PLUS:
        for i in range(n):
            h[i, 1] = -by[i]
    if kind == HOT_CACAO or kind == HOT_CACAO_PLUS:
        # pair p and its reverse p + ne share the operator m_i^Y m_j^Z + m_i^Z m_j^Y
        ne = pi.shape[0] // 2
        for p in range(ne):
            i = pi[p]
            j = pj[p]
            b = bp[p] + bp[p + ne]
            h[i, 1] -= b * m[j, 2]
            h[j, 1] -= b * m[i, 2]
            h[i, 2] -= b * m[j, 1]
            h[j, 2] -= b * m[i, 1]


@njit(cache=True)
def eom_rhs(m, h, out):
    for i in range(m.shape[0]):
        out[i, 0] = 2.0 * (m[i, 1] * h[i, 2] - m[i, 2] * h[i, 1])
        out[i, 1] = 2.0 * (m[i, 2] * h[i, 0] - m[i, 0] * h[i, 2])
        out[i, 2] = 2.0 * (m[i, 0] * h[i, 1] - m[i, 1] * h[i, 0])


@njit(cache=True)
def uses_problem_field(kind):
    return kind == CC_FALQON or kind == CC_IFALQON or kind == HOT_CACAO_PLUS


@njit(cache=True)
def _stage(kind, m, ptr, var, coef, pi, pj, bx, by, bp, refresh, g, h, k):
    if refresh or uses_problem_field(kind):
        z = m[:, 2].copy()
        poly_energy_grad(z, ptr, var, coef, g)
    if refresh:
        compute_controls(kind, m, g, pi, pj, bx, by, bp)
    effective_field(kind, m, g, pi, pj, bx, by, bp, h)
    eom_rhs(m, h, k)


@njit(cache=True)
def rk4_advance(kind, m, dt, ptr, var, coef, pi, pj, bx, by, bp, refresh,
                renorm, g):
    """One RK4 step in place; controls in bx/by/bp must already be set.

    ``g`` must hold the gradient at ``m``. Returns the pre-renormalization
    norm drift.
    """
    n = m.shape[0]
    h = np.empty((n, 3))
    k1 = np.empty((n, 3))
    k2 = np.empty((n, 3))
    k3 = np.empty((n, 3))
    k4 = np.empty((n, 3))
    gs = g.copy()
    if refresh:
        # per-stage feedback works on scratch copies; step-start values stay
        sbx = bx.copy()
        sby = by.copy()
        sbp = bp.copy()
    else:
        sbx = bx
        sby = by
        sbp = bp
    # stage 1 reuses the supplied gradient
    effective_field(kind, m, gs, pi, pj, bx, by, bp, h)
    eom_rhs(m, h, k1)
    ms = m + 0.5 * dt * k1
    _stage(kind, ms, ptr, var, coef, pi, pj, sbx, sby, sbp, refresh, gs, h, k2)
    ms = m + 0.5 * dt * k2
    _stage(kind, ms, ptr, var, coef, pi, pj, sbx, sby, sbp, refresh, gs, h, k3)
    ms = m + dt * k3
    _stage(kind, ms, ptr, var, coef, pi, pj, sbx, sby, sbp, refresh, gs, h, k4)
    drift = 0.0
    for i in range(n):
        nrm2 = 0.0
        for c in range(3):
            m[i, c] += dt / 6.0 * (k1[i, c] + 2.0 * k2[i, c] + 2.0 * k3[i, c]
                                   + k4[i, c])
            nrm2 += m[i, c] * m[i, c]
        nrm = np.sqrt(nrm2)
        d = abs(nrm - 1.0)
        if d > drift:
            drift = d
        if renorm:
            for c in range(3):
                m[i, c] /= nrm
    return drift


@njit(cache=True)
def control_norms(kind, n, bx, by, bp, out):
    sx = 0.0
    sy = 0.0
    sp = 0.0
    if kind == CC_FALQON or kind == CC_IFALQON or kind == HOT_CACAO_PLUS:
        for i in range(n):
            sx += abs(bx[i])
    if kind == CACAO or kind == HOT_CACAO or kind == HOT_CACAO_PLUS:
        for i in range(n):
            sy += abs(by[i])
    if kind == HOT_CACAO or kind == HOT_CACAO_PLUS:
        for p in range(bp.shape[0]):
            sp += abs(bp[p])
    out[0] = sx
    out[1] = sy
    out[2] = sp


@njit(cache=True)
def spin_run(kind, m, dt, nsteps, ptr, var, coef, pi, pj, refresh, renorm,
             drift_tol, abort, stride, energies, norms, raw_bx, snaps,
             snap_stride):
    """Integrate ``nsteps`` steps in place.

    Records energy / control norms every ``stride`` steps (slot count is
    ``nsteps // stride + 1``; the final state is always recorded in the last
    slot). Returns (steps_done, max_drift, failed_step or -1).
    """
    n = m.shape[0]
    g = np.empty(n)
    bx = np.zeros(n)
    by = np.zeros(n)
    bp = np.zeros(pi.shape[0])
    nrm = np.empty(3)
    max_drift = 0.0
    rec = 0
    srec = 0
    for step in range(nsteps + 1):
        z = m[:, 2].copy()
        e = poly_energy_grad(z, ptr, var, coef, g)
        compute_controls(kind, m, g, pi, pj, bx, by, bp)
        if step % stride == 0 or step == nsteps:
            if rec < energies.shape[0]:
                energies[rec] = e
                control_norms(kind, n, bx, by, bp, nrm)
                norms[rec, 0] = nrm[0]
                norms[rec, 1] = nrm[1]
                norms[rec, 2] = nrm[2]
                raw_bx[rec] = abs(bx[0]) if kind == CC_FALQON else 0.0
                rec += 1
        if snap_stride > 0 and (step % snap_stride == 0) and srec < snaps.shape[0]:
            snaps[srec, :, :] = m
            srec += 1
        if step == nsteps:
            break
        d = rk4_advance(kind, m, dt, ptr, var, coef, pi, pj, bx, by, bp,
                        refresh, renorm, g)
        if d > max_drift:
            max_drift = d
        if abort and d > drift_tol:
            return step, max_drift, step
    return nsteps, max_drift, -1


# -- statevector --------------------------------------------------------------
# States are split into real and imaginary float arrays; H_P and the X
# drivers are real, so H acts on each part independently.

@njit(cache=True)
def sv_apply_h_real(x, diag, beta, out):
    """out = (diag + sum_i beta_i X_i) x for a real vector x."""
    dim = x.shape[0]
    for b in range(dim):
        out[b] = diag[b] * x[b]
    for i in range(beta.shape[0]):
        bit = 1 << i
        c = beta[i]
        if c == 0.0:
            continue
        for s in range(0, dim, 2 * bit):
            for u in range(s, s + bit):
                out[u] += c * x[u + bit]
                out[u + bit] += c * x[u]


@njit(cache=True)
def sv_measure_betas(re, im, diag, out):
    """out[i] = i <psi|[H_P, X_i]|psi> for diagonal H_P.

    Summing each basis pair (b, b ^ 2**i) once gives
    -2 sum (d_b - d_b') Im(conj(psi_b) psi_b'), real by construction.
    """
    dim = re.shape[0]
    for i in range(out.shape[0]):
        bit = 1 << i
        acc = 0.0
        for s in range(0, dim, 2 * bit):
            for u in range(s, s + bit):
                v = u + bit
                acc += (diag[u] - diag[v]) * (re[u] * im[v] - im[u] * re[v])
        out[i] = -2.0 * acc


@njit(cache=True)
def sv_energy(re, im, diag):
    e = 0.0
    for b in range(re.shape[0]):
        e += (re[b] * re[b] + im[b] * im[b]) * diag[b]
    return e


@njit(cache=True)
def sv_norm(re, im):
    s = 0.0
    for b in range(re.shape[0]):
        s += re[b] * re[b] + im[b] * im[b]
    return np.sqrt(s)


@njit(cache=True)
def sv_propagate(re, im, diag, beta, dt, tol):
    """In-place exp(-i H dt) by adaptively truncated Taylor series.

    H = diag(diag) + sum_i beta_i X_i; with beta = 0 the phase is applied
    exactly. Substeps keep ||H|| h <= 0.5; terms
    are added until a term's norm drops below tol / 10. Returns the norm
    of the result (not renormalized).
    """
    dim = re.shape[0]
    if not np.any(beta != 0.0):
        # diagonal generator: exact phase, moduli untouched
        for u in range(dim):
            c = np.cos(diag[u] * dt)
            s = np.sin(diag[u] * dt)
            a = re[u]
            re[u] = c * a + s * im[u]
            im[u] = c * im[u] - s * a
        return sv_norm(re, im)
    hbound = np.max(np.abs(diag)) + np.sum(np.abs(beta))
    nsub = int(np.ceil(hbound * dt / 0.5))
    if nsub < 1:
        nsub = 1
    h = dt / nsub
    ta = np.empty(dim)
    tb = np.empty(dim)
    ha = np.empty(dim)
    hb = np.empty(dim)
    for _ in range(nsub):
        ta[:] = re
        tb[:] = im
        for kk in range(1, 80):
            sv_apply_h_real(ta, diag, beta, ha)
            sv_apply_h_real(tb, diag, beta, hb)
            c = h / kk
            # (-i c) H (a + i b) = c H b - i c H a
            nrm2 = 0.0
            for u in range(dim):
                a = c * hb[u]
                b = -c * ha[u]
                ta[u] = a
                tb[u] = b
                re[u] += a
                im[u] += b
                nrm2 += a * a + b * b
            if np.sqrt(nrm2) < 0.1 * tol:
                break
    return sv_norm(re, im)


@njit(cache=True)
def sv_bloch(re, im, n, out):
    """Per-qubit (<X_i>, <Y_i>, <Z_i>) into out (n, 3)."""
    dim = re.shape[0]
    for i in range(n):
        bit = 1 << i
        sx = 0.0
        sy = 0.0
        sz = 0.0
        for s in range(0, dim, 2 * bit):
            for u in range(s, s + bit):
                v = u + bit
                sz += re[u] * re[u] + im[u] * im[u] - re[v] * re[v] - im[v] * im[v]
                # conj(psi_u) psi_v
                sx += 2.0 * (re[u] * re[v] + im[u] * im[v])
                sy += 2.0 * (re[u] * im[v] - im[u] * re[v])
        out[i, 0] = sx
        out[i, 1] = sy
        out[i, 2] = sz


@njit(cache=True)
def sv_z(re, im, out):
    """<Z_i> for every qubit into out (n,)."""
    out[:] = 0.0
    n = out.shape[0]
    for b in range(re.shape[0]):
        p = re[b] * re[b] + im[b] * im[b]
        for i in range(n):
            if (b >> i) & 1:
                out[i] -= p
            else:
                out[i] += p


@njit(cache=True)
def sv_feedback_run(kind, re, im, diag, dt, nsteps, tol, energies, betas_rec,
                    norm_dev, zs, bloch, record_bloch, stop_energy):
    """Measure-then-propagate loop, in place on (re, im).

    Quantities are recorded at each interval start. betas_rec and zs have
    shape (nsteps+1, n); betas_rec stores the per-site fields applied
    (FALQON: the shared value replicated) and zs the <Z_i>. Returns
    (last_step, status); status 1 flags a propagation failure.
    """
    n = betas_rec.shape[1]
    site = np.empty(n)
    beta = np.empty(n)
    bl = np.empty((n, 3))
    for step in range(nsteps + 1):
        sv_measure_betas(re, im, diag, site)
        if kind == FALQON:
            s = 0.0
            for i in range(n):
                s += site[i]
            for i in range(n):
                beta[i] = s
        else:
            for i in range(n):
                beta[i] = site[i]
        e = sv_energy(re, im, diag)
        energies[step] = e
        betas_rec[step, :] = beta
        norm_dev[step] = abs(sv_norm(re, im) - 1.0)
        sv_z(re, im, zs[step])
        if record_bloch:
            sv_bloch(re, im, n, bl)
            bloch[step, :, :] = bl
        if step == nsteps or e <= stop_energy:
            return step, 0
        nrm = sv_propagate(re, im, diag, beta, dt, tol)
        if abs(nrm - 1.0) > 1e-6:
            return step, 1
        for u in range(re.shape[0]):
            re[u] /= nrm
            im[u] /= nrm
    return nsteps, 0
