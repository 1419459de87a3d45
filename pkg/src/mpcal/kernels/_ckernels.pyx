# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot loops: residual/objective jets and the forward history solve.

Jets are flat C buffers laid out as ``[value, grad[n], hess[n*n]]``.  The
arithmetic mirrors :mod:`mpcal.jet` and the residual mirrors
:func:`mpcal.model.local_residual`; ``mpcal.kernels._pure`` is the
reference both are tested against.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, exp, fabs, isfinite
from libc.stdlib cimport malloc, free
from libc.string cimport memset, memcpy

cnp.import_array()

cdef enum:
    MAXN = 24
    MAXJ = 1 + 24 + 24 * 24
    NTMP = 96

cdef double SQRT_3_2 = sqrt(1.5)

# status codes shared with the pure-Python backend
cdef enum:
    ST_OK = 0
    ST_DEGENERATE = 1
    ST_MAXITER = 2
    ST_SINGULAR = 3

STATUS_OK = ST_OK
STATUS_DEGENERATE = ST_DEGENERATE
STATUS_MAXITER = ST_MAXITER
STATUS_SINGULAR = ST_SINGULAR


cdef struct Ctx:
    int n
    int order
    int size
    double* ws
    int top


cdef inline double* jalloc(Ctx* c) noexcept nogil:
    cdef double* p = c.ws + c.top * c.size
    c.top += 1
    return p


cdef inline void jconst(double* o, double v, Ctx* c) noexcept nogil:
    memset(o, 0, c.size * sizeof(double))
    o[0] = v


cdef inline void jvar(double* o, double v, long idx, Ctx* c) noexcept nogil:
    memset(o, 0, c.size * sizeof(double))
    o[0] = v
    if idx >= 0 and c.order >= 1:
        o[1 + idx] = 1.0


cdef inline void jadd(double* o, const double* a, const double* b, Ctx* c) noexcept nogil:
    cdef int i
    for i in range(c.size):
        o[i] = a[i] + b[i]


cdef inline void jsub(double* o, const double* a, const double* b, Ctx* c) noexcept nogil:
    cdef int i
    for i in range(c.size):
        o[i] = a[i] - b[i]


cdef inline void jscale(double* o, const double* a, double k, Ctx* c) noexcept nogil:
    cdef int i
    for i in range(c.size):
        o[i] = a[i] * k


cdef inline void jaddc(double* o, const double* a, double k, Ctx* c) noexcept nogil:
    cdef int i
    for i in range(c.size):
        o[i] = a[i]
    o[0] += k


cdef void jmul(double* o, const double* a, const double* b, Ctx* c) noexcept nogil:
    cdef double t[MAXJ]
    cdef int n = c.n, i, j
    cdef double a0 = a[0], b0 = b[0]
    cdef const double* ag = a + 1
    cdef const double* bg = b + 1
    cdef const double* ah = a + 1 + n
    cdef const double* bh = b + 1 + n
    t[0] = a0 * b0
    if c.order >= 1:
        for i in range(n):
            t[1 + i] = a0 * bg[i] + b0 * ag[i]
    if c.order >= 2:
        for i in range(n):
            for j in range(n):
                t[1 + n + i * n + j] = (a0 * bh[i * n + j] + b0 * ah[i * n + j]
                                        + ag[i] * bg[j] + bg[i] * ag[j])
    memcpy(o, t, c.size * sizeof(double))


cdef void junary(double* o, const double* a, double f0, double f1, double f2, Ctx* c) noexcept nogil:
    cdef double t[MAXJ]
    cdef int n = c.n, i, j
    cdef const double* ag = a + 1
    cdef const double* ah = a + 1 + n
    t[0] = f0
    if c.order >= 1:
        for i in range(n):
            t[1 + i] = f1 * ag[i]
    if c.order >= 2:
        for i in range(n):
            for j in range(n):
                t[1 + n + i * n + j] = f1 * ah[i * n + j] + f2 * ag[i] * ag[j]
    memcpy(o, t, c.size * sizeof(double))


cdef inline void jrecip(double* o, const double* a, Ctx* c) noexcept nogil:
    cdef double inv = 1.0 / a[0]
    junary(o, a, inv, -inv * inv, 2.0 * inv * inv * inv, c)


cdef inline void jdiv(double* o, const double* a, const double* b, Ctx* c) noexcept nogil:
    cdef double* r = jalloc(c)
    jrecip(r, b, c)
    jmul(o, a, r, c)
    c.top -= 1


cdef inline void jsqrt(double* o, const double* a, Ctx* c) noexcept nogil:
    cdef double r = sqrt(a[0])
    junary(o, a, r, 0.5 / r, -0.25 / (r * r * r), c)


cdef inline void jexp(double* o, const double* a, Ctx* c) noexcept nogil:
    cdef double e = exp(a[0])
    junary(o, a, e, e, e, c)


# ---------------------------------------------------------------------------
# shared model pieces
# ---------------------------------------------------------------------------

cdef void load_inputs(int variant, int M, const double* xin, const double* eps,
                      double** XN, double** P, double** e, double** ep,
                      Ctx* c) noexcept nogil:
    """Total strain ``e`` and plastic strain ``ep`` jets from already-seeded XN."""
    cdef int k
    for k in range(6):
        e[k] = jalloc(c)
        jconst(e[k], eps[k], c)
    if variant == 1:
        memcpy(e[2], XN[6], c.size * sizeof(double))
    elif variant == 2:
        memcpy(e[1], XN[6], c.size * sizeof(double))
        memcpy(e[2], XN[7], c.size * sizeof(double))
    ep[0] = XN[0]
    ep[1] = XN[3]
    ep[2] = jalloc(c)
    jadd(ep[2], XN[0], XN[3], c)
    jscale(ep[2], ep[2], -1.0, c)
    ep[3] = XN[1]
    ep[4] = XN[2]
    ep[5] = XN[4]


cdef void lame_jets(double* lam, double* mu, double* E, double* nu, Ctx* c) noexcept nogil:
    cdef double* t1 = jalloc(c)
    cdef double* t2 = jalloc(c)
    jaddc(t1, nu, 1.0, c)            # 1 + nu
    jscale(t2, nu, -2.0, c)
    jaddc(t2, t2, 1.0, c)            # 1 - 2 nu
    jmul(t2, t1, t2, c)
    jmul(lam, E, nu, c)
    jdiv(lam, lam, t2, c)
    jscale(t1, t1, 2.0, c)
    jdiv(mu, E, t1, c)
    c.top -= 2


cdef void stress_jets(double** sig, double** e, double** ep, double* lam, double* mu,
                      Ctx* c) noexcept nogil:
    cdef int k
    cdef double* ee = jalloc(c)
    cdef double* tr = jalloc(c)
    cdef double* two_mu = jalloc(c)
    cdef double* ltr = jalloc(c)
    jscale(two_mu, mu, 2.0, c)
    jconst(tr, 0.0, c)
    for k in range(3):
        jsub(ee, e[k], ep[k], c)
        jadd(tr, tr, ee, c)
    jmul(ltr, lam, tr, c)
    for k in range(6):
        jsub(ee, e[k], ep[k], c)
        jmul(sig[k], two_mu, ee, c)
        if k < 3:
            jadd(sig[k], ltr, sig[k], c)
    c.top -= 4


cdef int residual_core(int variant, int M, const double* xin, const double* xip,
                       const double* eps, const double* prm, bint plastic,
                       const long* seed, Ctx* c, double* out) noexcept nogil:
    """Write the ``M`` residual jets contiguously into ``out``."""
    cdef double* XN[8]
    cdef double* XP[8]
    cdef double* P[6]
    cdef double* e[6]
    cdef double* ep[6]
    cdef double* sig[6]
    cdef double* s[6]
    cdef int k, comp
    cdef int state_comp[5]
    cdef double* row
    cdef double* nrm
    cdef double* f
    cdef double* fac
    cdef double* da
    cdef double snorm_val, signorm_val
    state_comp[0] = 0
    state_comp[1] = 3
    state_comp[2] = 4
    state_comp[3] = 1
    state_comp[4] = 5

    for k in range(M):
        XN[k] = jalloc(c)
        jvar(XN[k], xin[k], seed[k], c)
        XP[k] = jalloc(c)
        jvar(XP[k], xip[k], seed[M + k], c)
    for k in range(6):
        P[k] = jalloc(c)
        jvar(P[k], prm[k], seed[2 * M + k], c)

    cdef double* lam = jalloc(c)
    cdef double* mu = jalloc(c)
    lame_jets(lam, mu, P[0], P[1], c)
    load_inputs(variant, M, xin, eps, XN, P, e, ep, c)

    cdef double* t = jalloc(c)
    cdef double* u = jalloc(c)

    if plastic:
        for k in range(6):
            sig[k] = jalloc(c)
            s[k] = jalloc(c)
        stress_jets(sig, e, ep, lam, mu, c)
        # deviator
        jadd(t, sig[0], sig[1], c)
        jadd(t, t, sig[2], c)
        jscale(t, t, 1.0 / 3.0, c)
        for k in range(6):
            if k < 3:
                jsub(s[k], sig[k], t, c)
            else:
                memcpy(s[k], sig[k], c.size * sizeof(double))
        # ||s||
        jconst(t, 0.0, c)
        for k in range(6):
            jmul(u, s[k], s[k], c)
            if k >= 3:
                jscale(u, u, 2.0, c)
            jadd(t, t, u, c)
        signorm_val = 0.0
        for k in range(6):
            signorm_val += sig[k][0] * sig[k][0] * (2.0 if k >= 3 else 1.0)
        signorm_val = sqrt(signorm_val)
        snorm_val = sqrt(t[0])
        if not snorm_val > 1e-12 * (signorm_val if signorm_val > 1.0 else 1.0):
            return ST_DEGENERATE
        nrm = jalloc(c)
        jsqrt(nrm, t, c)
        # yield value f = sqrt(3/2)||s|| - (Y + K a + S (1 - exp(-D a)))
        f = jalloc(c)
        jscale(f, nrm, SQRT_3_2, c)
        jmul(u, P[5], XN[5], c)
        jscale(u, u, -1.0, c)
        jexp(u, u, c)
        jscale(u, u, -1.0, c)
        jaddc(u, u, 1.0, c)
        jmul(u, P[4], u, c)
        jmul(t, P[3], XN[5], c)
        jadd(u, u, t, c)
        jadd(u, u, P[2], c)
        jsub(f, f, u, c)
        # flow factor sqrt(3/2)/||s|| and increment
        fac = jalloc(c)
        jrecip(fac, nrm, c)
        jscale(fac, fac, SQRT_3_2, c)
        da = jalloc(c)
        jsub(da, XN[5], XP[5], c)
        for k in range(5):
            row = out + k * c.size
            comp = state_comp[k]
            jmul(u, s[comp], fac, c)
            jmul(u, da, u, c)
            jsub(row, XN[k], XP[k], c)
            jsub(row, row, u, c)
        memcpy(out + 5 * c.size, f, c.size * sizeof(double))
    else:
        for k in range(6):
            jsub(out + k * c.size, XN[k], XP[k], c)

    if variant != 0:
        # lam tr[eps] + 2 mu (eps_bb - ep_bb)
        jadd(t, e[0], e[1], c)
        jadd(t, t, e[2], c)
        jmul(t, lam, t, c)
        if variant == 1:
            jsub(u, e[2], ep[2], c)
            jmul(u, mu, u, c)
            jscale(u, u, 2.0, c)
            jadd(out + 6 * c.size, t, u, c)
        else:
            jsub(u, e[1], ep[1], c)
            jmul(u, mu, u, c)
            jscale(u, u, 2.0, c)
            jadd(out + 6 * c.size, t, u, c)
            jsub(u, e[2], ep[2], c)
            jmul(u, mu, u, c)
            jscale(u, u, 2.0, c)
            jadd(out + 7 * c.size, t, u, c)
    return ST_OK


cdef void objective_core(int variant, int M, const double* xin, const double* eps,
                         const double* prm, const double* target, const double* weights,
                         const long* seed, Ctx* c, double* out) noexcept nogil:
    cdef double* XN[8]
    cdef double* P[6]
    cdef double* e[6]
    cdef double* ep[6]
    cdef double* sig[6]
    cdef int k
    for k in range(M):
        XN[k] = jalloc(c)
        jvar(XN[k], xin[k], seed[k], c)
    for k in range(6):
        P[k] = jalloc(c)
        jvar(P[k], prm[k], seed[M + k], c)
    cdef double* lam = jalloc(c)
    cdef double* mu = jalloc(c)
    lame_jets(lam, mu, P[0], P[1], c)
    load_inputs(variant, M, xin, eps, XN, P, e, ep, c)
    for k in range(6):
        sig[k] = jalloc(c)
    stress_jets(sig, e, ep, lam, mu, c)
    cdef double* r = jalloc(c)
    jconst(out, 0.0, c)
    for k in range(6):
        if weights[k] != 0.0:
            jaddc(r, sig[k], -target[k], c)
            jmul(r, r, r, c)
            jscale(r, r, 0.5 * weights[k], c)
            jadd(out, out, r, c)


cdef int init_ctx(Ctx* c, int n, int order):
    if n > MAXN:
        raise ValueError(f"at most {MAXN} derivative directions supported, got {n}")
    c.n = n
    c.order = order
    c.size = 1
    if order >= 1:
        c.size += n
    if order >= 2:
        c.size += n * n
    c.top = 0
    c.ws = <double*> malloc(NTMP * c.size * sizeof(double))
    if c.ws == NULL:
        raise MemoryError()
    return 0


def residual_derivs(int variant, double[::1] xi_n, double[::1] xi_prev, double[::1] eps,
                    double[::1] params, bint plastic, long[::1] seed, int n, int order):
    """Residual value and its first/second partials along the seeded directions.

    Returns ``(status, value[M], grad[M, n], hess[M, n, n])``; derivative
    arrays are ``None`` above the requested ``order``.
    """
    cdef int M = xi_n.shape[0]
    cdef Ctx c
    init_ctx(&c, n, order)
    cdef double* out = <double*> malloc(M * c.size * sizeof(double))
    cdef int status, q, i, j
    with nogil:
        status = residual_core(variant, M, &xi_n[0], &xi_prev[0], &eps[0], &params[0],
                               plastic, &seed[0], &c, out)
    val = np.empty(M)
    grad = np.zeros((M, n)) if order >= 1 else None
    hess = np.zeros((M, n, n)) if order >= 2 else None
    cdef double[::1] v = val
    cdef double[:, ::1] g
    cdef double[:, :, ::1] h
    if status == ST_OK:
        for q in range(M):
            v[q] = out[q * c.size]
        if order >= 1:
            g = grad
            for q in range(M):
                for i in range(n):
                    g[q, i] = out[q * c.size + 1 + i]
        if order >= 2:
            h = hess
            for q in range(M):
                for i in range(n):
                    for j in range(n):
                        h[q, i, j] = out[q * c.size + 1 + n + i * n + j]
    free(out)
    free(c.ws)
    return status, val, grad, hess


def objective_derivs(int variant, double[::1] xi_n, double[::1] eps, double[::1] params,
                     double[::1] target, double[::1] weights, long[::1] seed, int n, int order):
    """Per-step misfit value with first/second partials along the seeded directions."""
    cdef int M = xi_n.shape[0]
    cdef Ctx c
    init_ctx(&c, n, order)
    cdef double* out = <double*> malloc(c.size * sizeof(double))
    cdef int i, j
    with nogil:
        objective_core(variant, M, &xi_n[0], &eps[0], &params[0], &target[0], &weights[0],
                       &seed[0], &c, out)
    val = out[0]
    grad = None
    hess = None
    if order >= 1:
        grad = np.array([out[1 + i] for i in range(n)])
    if order >= 2:
        hess = np.empty((n, n))
        for i in range(n):
            for j in range(n):
                hess[i, j] = out[1 + n + i * n + j]
    free(out)
    free(c.ws)
    return val, grad, hess


# ---------------------------------------------------------------------------
# forward history
# ---------------------------------------------------------------------------

cdef int lu_solve(double* A, double* b, int m) noexcept nogil:
    """Solve ``A x = b`` in place (x overwrites b) by elimination with partial pivoting."""
    cdef int i, j, k, p
    cdef double piv, tmp, fct
    for k in range(m):
        p = k
        piv = fabs(A[k * m + k])
        for i in range(k + 1, m):
            if fabs(A[i * m + k]) > piv:
                piv = fabs(A[i * m + k])
                p = i
        if piv == 0.0 or not isfinite(piv):
            return ST_SINGULAR
        if p != k:
            for j in range(m):
                tmp = A[k * m + j]
                A[k * m + j] = A[p * m + j]
                A[p * m + j] = tmp
            tmp = b[k]
            b[k] = b[p]
            b[p] = tmp
        for i in range(k + 1, m):
            fct = A[i * m + k] / A[k * m + k]
            if fct != 0.0:
                for j in range(k, m):
                    A[i * m + j] -= fct * A[k * m + j]
                b[i] -= fct * b[k]
    for i in range(m - 1, -1, -1):
        tmp = b[i]
        for j in range(i + 1, m):
            tmp -= A[i * m + j] * b[j]
        b[i] = tmp / A[i * m + i]
    return ST_OK


cdef double trial_yield(int variant, int M, const double* x, const double* eps,
                        const double* prm) noexcept nogil:
    cdef double E = prm[0], nu = prm[1]
    cdef double lam = E * nu / ((1.0 + nu) * (1.0 - 2.0 * nu))
    cdef double mu = E / (2.0 * (1.0 + nu))
    cdef double e[6]
    cdef double ep[6]
    cdef double sig[6]
    cdef double tr = 0.0, m, nn = 0.0, d
    cdef int k
    for k in range(6):
        e[k] = eps[k]
    if variant == 1:
        e[2] = x[6]
    elif variant == 2:
        e[1] = x[6]
        e[2] = x[7]
    ep[0] = x[0]
    ep[1] = x[3]
    ep[2] = -(x[0] + x[3])
    ep[3] = x[1]
    ep[4] = x[2]
    ep[5] = x[4]
    for k in range(3):
        tr += e[k] - ep[k]
    for k in range(6):
        sig[k] = 2.0 * mu * (e[k] - ep[k])
        if k < 3:
            sig[k] += lam * tr
    m = (sig[0] + sig[1] + sig[2]) / 3.0
    for k in range(6):
        d = sig[k] - m if k < 3 else sig[k]
        nn += d * d * (2.0 if k >= 3 else 1.0)
    cdef double a = x[5]
    return SQRT_3_2 * sqrt(nn) - (prm[2] + prm[3] * a + prm[4] * (1.0 - exp(-prm[5] * a)))


cdef int newton_local(int variant, int M, double* x, const double* xp, const double* eps,
                      const double* prm, bint plastic, double tol, int max_iter,
                      const long* seed, Ctx* c, double* out, double* A, double* b,
                      int* iters, double* resnorm) noexcept nogil:
    cdef int it, q, k, status, k0, m
    cdef double rn
    iters[0] = 0
    for it in range(max_iter + 1):
        c.top = 0
        status = residual_core(variant, M, x, xp, eps, prm, plastic, seed, c, out)
        if status != ST_OK:
            return status
        rn = 0.0
        for q in range(M):
            if not isfinite(out[q * c.size]):
                rn = out[q * c.size]
                break
            if fabs(out[q * c.size]) > rn:
                rn = fabs(out[q * c.size])
        resnorm[0] = rn
        if rn <= tol:
            return ST_OK
        if it == max_iter or not isfinite(rn):
            return ST_MAXITER
        # elastic rows 0..5 are already satisfied exactly (x starts at xp), so
        # only the off-axis strain block is iterated on that branch
        k0 = 0 if plastic else 6
        m = M - k0
        for q in range(m):
            b[q] = -out[(q + k0) * c.size]
            for k in range(m):
                A[q * m + k] = out[(q + k0) * c.size + 1 + k + k0]
        status = lu_solve(A, b, m)
        iters[0] += 1
        if status != ST_OK:
            return status
        for k in range(m):
            x[k + k0] += b[k]
    return ST_MAXITER


def solve_history(int variant, double[:, ::1] strains, double[::1] params, double tol, int max_iter):
    """Run the strain-driven model over every load step.

    Returns ``(xi[N_L+1, M], plastic[N_L], iterations[N_L], resnorm[N_L],
    f_trial[N_L], status, failed_step)``; on failure ``failed_step`` is the
    1-based step and the arrays are filled up to the previous step.
    """
    cdef int NL = strains.shape[0]
    cdef int M = (6, 7, 8)[variant]
    xi_arr = np.zeros((NL + 1, M))
    plastic_arr = np.zeros(NL, dtype=np.uint8)
    iters_arr = np.zeros(NL, dtype=np.int64)
    res_arr = np.zeros(NL)
    ftrial_arr = np.zeros(NL)
    cdef double[:, ::1] xi = xi_arr
    cdef unsigned char[::1] pl = plastic_arr
    cdef long[::1] its = iters_arr
    cdef double[::1] res = res_arr
    cdef double[::1] ftr = ftrial_arr
    cdef Ctx c
    init_ctx(&c, M, 1)
    cdef double* out = <double*> malloc(M * c.size * sizeof(double))
    cdef double A[64]
    cdef double b[8]
    cdef long seed[22]
    cdef double x[8]
    cdef int k, n, status = ST_OK, failed = 0, it_el, it_pl
    cdef double rn, ft
    for k in range(2 * M + 6):
        seed[k] = k if k < M else -1
    with nogil:
        for n in range(1, NL + 1):
            for k in range(M):
                x[k] = xi[n - 1, k]
            status = newton_local(variant, M, x, &xi[n - 1, 0], &strains[n - 1, 0], &params[0],
                                  False, tol, max_iter, seed, &c, out, A, b, &it_el, &rn)
            if status != ST_OK:
                failed = n
                break
            ft = trial_yield(variant, M, x, &strains[n - 1, 0], &params[0])
            ftr[n - 1] = ft
            it_pl = 0
            if ft > 0.0:
                pl[n - 1] = 1
                status = newton_local(variant, M, x, &xi[n - 1, 0], &strains[n - 1, 0], &params[0],
                                      True, tol, max_iter, seed, &c, out, A, b, &it_pl, &rn)
                if status != ST_OK:
                    failed = n
                    res[n - 1] = rn
                    its[n - 1] = it_el + it_pl
                    break
            its[n - 1] = it_el + it_pl
            res[n - 1] = rn
            for k in range(M):
                xi[n, k] = x[k]
    free(out)
    free(c.ws)
    return xi_arr, plastic_arr.astype(bool), iters_arr, res_arr, ftrial_arr, status, failed
