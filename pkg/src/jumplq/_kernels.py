"""Compiled inner loops.

The Riccati integrator performs two cone-constrained minimizations per
stage, which is far too many calls for an interpreted loop. The kernels
below operate on plain arrays; the public wrappers live in
:mod:`jumplq.conekit` and :mod:`jumplq.sre`.

Cone encoding: ``kind`` 0 is the full space, 1 a coordinate cone with
``signs`` (0 free, 1 nonneg, -1 nonpos, 2 zero), 2 a ray spanned by ``gen``.
``radius`` is ``inf`` when no ball constraint applies.

The objective minimized is the ``H1`` form

    f(v) = v'Mv + 2q'v + sum_j nu_j [a_j (((1+E_j+F_j'v)^+)^2 - 1)
                                     - 2p (E_j+F_j'v) + b_j ((1+E_j+F_j'v)^-)^2]

``H2`` is handled by the caller through reflection.
"""

import math

import numpy as np
from numba import njit

STATUS_OK = 0
STATUS_MAXITER = 1
STATUS_NONFINITE = 2


@njit(cache=True)
def project_into(x, kind, signs, gen, radius, out):
    m = x.shape[0]
    if kind == 0:
        for i in range(m):
            out[i] = x[i]
    elif kind == 1:
        for i in range(m):
            s = signs[i]
            xi = x[i]
            if s == 0:
                out[i] = xi
            elif s == 1:
                out[i] = xi if xi > 0.0 else 0.0
            elif s == -1:
                out[i] = xi if xi < 0.0 else 0.0
            else:
                out[i] = 0.0
    else:
        gg = 0.0
        gx = 0.0
        for i in range(m):
            gg += gen[i] * gen[i]
            gx += gen[i] * x[i]
        lam = gx / gg if (gg > 0.0 and gx > 0.0) else 0.0
        for i in range(m):
            out[i] = lam * gen[i]
    if radius < np.inf:
        nrm = 0.0
        for i in range(m):
            nrm += out[i] * out[i]
        nrm = math.sqrt(nrm)
        if nrm > radius:
            scale = radius / nrm
            for i in range(m):
                out[i] *= scale


@njit(cache=True)
def objective(v, M, q, E, F, nu, p, a, b, grad):
    m = v.shape[0]
    val = 0.0
    for i in range(m):
        mv = 0.0
        for k in range(m):
            mv += M[i, k] * v[k]
        val += v[i] * mv + 2.0 * q[i] * v[i]
        grad[i] = 2.0 * mv + 2.0 * q[i]
    for j in range(E.shape[0]):
        fv = 0.0
        for i in range(m):
            fv += F[j, i] * v[i]
        s = 1.0 + E[j] + fv
        if s >= 0.0:
            val += nu[j] * (a[j] * (s * s - 1.0) - 2.0 * p * (E[j] + fv))
            coef = 2.0 * a[j] * s
        else:
            val += nu[j] * (-a[j] - 2.0 * p * (E[j] + fv) + b[j] * s * s)
            coef = 2.0 * b[j] * s
        c = nu[j] * (coef - 2.0 * p)
        for i in range(m):
            grad[i] += c * F[j, i]
    return val


@njit(cache=True)
def lipschitz_estimate(M, F, nu, a, b):
    m = M.shape[0]
    fro = 0.0
    for i in range(m):
        for k in range(m):
            fro += M[i, k] * M[i, k]
    L = 2.0 * math.sqrt(fro)
    for j in range(F.shape[0]):
        ff = 0.0
        for i in range(m):
            ff += F[j, i] * F[j, i]
        L += 2.0 * nu[j] * max(a[j], b[j]) * ff
    return L


@njit(cache=True)
def _residual(x, g, L, kind, signs, gen, radius, tmp, out):
    m = x.shape[0]
    for i in range(m):
        tmp[i] = x[i] - g[i] / L
    project_into(tmp, kind, signs, gen, radius, out)
    r = 0.0
    for i in range(m):
        d = x[i] - out[i]
        r += d * d
    return math.sqrt(r)


@njit(cache=True)
def fista(M, q, E, F, nu, p, a, b, kind, signs, gen, radius, tol, max_iter):
    """Accelerated projected gradient with backtracking and restart.

    Returns ``(v, value, iterations, status, L)``.
    """
    m = q.shape[0]
    L = lipschitz_estimate(M, F, nu, a, b)
    if not L > 1e-12:
        L = 1e-12
    x = np.zeros(m)
    y = np.zeros(m)
    xn = np.empty(m)
    gx = np.empty(m)
    gy = np.empty(m)
    gn = np.empty(m)
    tmp = np.empty(m)
    tmp2 = np.empty(m)
    fx = objective(x, M, q, E, F, nu, p, a, b, gx)
    if not math.isfinite(fx):
        return x, fx, 0, STATUS_NONFINITE, L
    tk = 1.0
    for it in range(max_iter):
        r = _residual(x, gx, L, kind, signs, gen, radius, tmp, tmp2)
        if r <= tol:
            return x, fx, it, STATUS_OK, L
        fy = objective(y, M, q, E, F, nu, p, a, b, gy)
        while True:
            for i in range(m):
                tmp[i] = y[i] - gy[i] / L
            project_into(tmp, kind, signs, gen, radius, xn)
            fxn = objective(xn, M, q, E, F, nu, p, a, b, gn)
            lin = 0.0
            dd = 0.0
            for i in range(m):
                d = xn[i] - y[i]
                lin += gy[i] * d
                dd += d * d
            if not math.isfinite(fxn):
                return xn, fxn, it, STATUS_NONFINITE, L
            if fxn <= fy + lin + 0.5 * L * dd + 1e-13 * (1.0 + abs(fy)):
                break
            L *= 2.0
            if L > 1e300:
                return xn, fxn, it, STATUS_NONFINITE, L
        if fxn > fx and tk > 1.0:
            # momentum overshoot: drop it and retry from x
            for i in range(m):
                y[i] = x[i]
            tk = 1.0
            continue
        tn = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * tk * tk))
        beta = (tk - 1.0) / tn
        for i in range(m):
            y[i] = xn[i] + beta * (xn[i] - x[i])
            x[i] = xn[i]
            gx[i] = gn[i]
        fx = fxn
        tk = tn
    r = _residual(x, gx, L, kind, signs, gen, radius, tmp, tmp2)
    if r <= tol:
        return x, fx, max_iter, STATUS_OK, L
    return x, fx, max_iter, STATUS_MAXITER, L


@njit(cache=True)
def riccati_rhs(P1, P2, R, DtD, BDC, S, E, F, nu, slope, Q,
                kind, signs, gen, nkind, nsigns, ngen, radius, tol, max_iter,
                v1_out, v2_out):
    """Time derivative (in reversed time) of the deterministic Riccati pair.

    Returns ``(d1, d2, status)`` and writes the two argmins into the output
    buffers. ``n*`` arguments describe the reflected cone ``-Pi``.
    """
    m = R.shape[0]
    J = E.shape[0]
    M1 = R + P1 * DtD
    q1 = P1 * BDC + S
    a1 = np.full(J, P1)
    b1 = np.full(J, P2)
    v, h1, _, st1, _ = fista(M1, q1, E, F, nu, P1, a1, b1, kind, signs, gen,
                             radius, tol, max_iter)
    for i in range(m):
        v1_out[i] = v[i]
    if st1 != STATUS_OK:
        return 0.0, 0.0, st1
    M2 = R + P2 * DtD
    q2 = P2 * BDC + S
    w, h2, _, st2, _ = fista(M2, q2, E, F, nu, P2, b1, a1, nkind, nsigns,
                             ngen, radius, tol, max_iter)
    for i in range(m):
        v2_out[i] = -w[i]
    if st2 != STATUS_OK:
        return 0.0, 0.0, st2
    return slope * P1 + Q + h1, slope * P2 + Q + h2, STATUS_OK


# ----------------------------------------------------------------------
# lattice backward induction
#
# A builder generator is packed as
#   (Ay (l,l), beta (l,), gamma (l,J), cross_idx (K,2) int [target, source],
#    cross_kind (K,) int, cross_par (K,3) [weight, p0, p1], s0 (l,), s1 (l,))
# Monotone map codes: 0 identity, 1 ramp (slopes p0 below 0, p1 above),
# 2 tanh(p0 x)/p0, 3 clip to [p0, p1].


# Slices are stored as (level, component, count) so that the innermost
# loops run over contiguous count indices and vectorize.


@njit(cache=True, error_model="numpy")
def _add_generator(g, nu, t, z, Ek, yb, f, sk):
    """Write the packed generator ``g`` at ``(t, yb, z, Ek - yb)`` into ``f``.

    Arrays cover one Brownian level: ``z``, ``yb``, ``f`` are ``(l, C)`` and
    ``Ek`` is ``(l, J, C)``; ``sk`` is scratch of length ``C``.
    """
    Ay, beta, gamma, cidx, ckind, cpar, s0, s1 = g
    ell, nc = f.shape
    J = nu.shape[0]
    for p in range(ell):
        cst = s0[p] + s1[p] * t
        for c in range(nc):
            f[p, c] = cst + beta[p] * z[p, c]
        for q in range(ell):
            aq = Ay[p, q]
            if aq != 0.0:
                for c in range(nc):
                    f[p, c] += aq * yb[q, c]
        for k in range(J):
            gk = gamma[p, k] * nu[k]
            if gk != 0.0:
                for c in range(nc):
                    f[p, c] += gk * (Ek[p, k, c] - yb[p, c])
    for cc in range(ckind.shape[0]):
        # argument sum_k nu_k (y_j + phi_jk) = sum_k nu_k E_jk
        j = cidx[cc, 1]
        tg = cidx[cc, 0]
        w, p0, p1 = cpar[cc, 0], cpar[cc, 1], cpar[cc, 2]
        kind = ckind[cc]
        for c in range(nc):
            sk[c] = 0.0
        for k in range(J):
            for c in range(nc):
                sk[c] += nu[k] * Ek[j, k, c]
        if kind == 0:
            for c in range(nc):
                f[tg, c] += w * sk[c]
        elif kind == 1:
            for c in range(nc):
                x = sk[c]
                f[tg, c] += w * (p0 * x if x < 0.0 else p1 * x)
        elif kind == 2:
            for c in range(nc):
                f[tg, c] += w * math.tanh(p0 * sk[c]) / p0
        else:
            for c in range(nc):
                f[tg, c] += w * min(max(sk[c], p0), p1)


@njit(cache=True, error_model="numpy")
def lattice_slice(Ynext, i, child, dt, nu, gen, Minv, implicit,
                  Y, Z, Phi, diff, check_diff, store):
    """One backward step from slice ``i + 1`` to slice ``i``.

    ``Y``, ``Z`` have shape ``(i+1, l, C_i)`` and ``Phi`` ``(i+1, l, J, C_i)``;
    ``Z`` and ``Phi`` are left untouched unless ``store`` is set. When
    ``check_diff`` is set, ``diff`` is a packed generator (typically
    ``f_other - f``) evaluated at every computed node; its largest
    component is returned.
    """
    ell = Ynext.shape[1]
    J = nu.shape[0]
    nc = Y.shape[2]
    lam = 0.0
    for k in range(J):
        lam += nu[k]
    w0 = 0.5 * (1.0 - lam * dt)
    iz = 1.0 / (2.0 * math.sqrt(dt))
    t = i * dt
    Ek = np.empty((ell, J, nc))
    EY = np.empty((ell, nc))
    z = np.empty((ell, nc))
    f = np.empty((ell, nc))
    yb = np.zeros((ell, nc))
    sk = np.empty(nc)
    excess = -np.inf
    for a in range(i + 1):
        up = Ynext[a + 1]
        dn = Ynext[a]
        for p in range(ell):
            for c in range(nc):
                u0 = up[p, c]
                d0 = dn[p, c]
                EY[p, c] = w0 * (u0 + d0)
                z[p, c] = (u0 - d0) * iz
            for k in range(J):
                wk = dt * nu[k]
                for c in range(nc):
                    ck = child[k, c]
                    ek = 0.5 * (up[p, ck] + dn[p, ck])
                    Ek[p, k, c] = ek
                    EY[p, c] += wk * ek
        # implicit: f(t, Y, Z, Ek - Y) = Jac Y + f(t, 0, Z, Ek), so the
        # generator is evaluated at y = 0; explicit: at y = E[Y']
        if implicit:
            yb[:] = 0.0
        else:
            yb[:] = EY
        _add_generator(gen, nu, t, z, Ek, yb, f, sk)
        Ya = Y[a]
        if implicit:
            for p in range(ell):
                for c in range(nc):
                    Ya[p, c] = 0.0
                for q in range(ell):
                    m = Minv[p, q]
                    if m != 0.0:
                        for c in range(nc):
                            Ya[p, c] += m * (EY[q, c] + dt * f[q, c])
        else:
            for p in range(ell):
                for c in range(nc):
                    Ya[p, c] = EY[p, c] + dt * f[p, c]
        if store:
            for p in range(ell):
                for c in range(nc):
                    Z[a, p, c] = z[p, c]
                for k in range(J):
                    for c in range(nc):
                        Phi[a, p, k, c] = Ek[p, k, c] - (
                            Ya[p, c] if implicit else EY[p, c])
        if check_diff:
            if implicit:
                yb[:] = Ya
            _add_generator(diff, nu, t, z, Ek, yb, f, sk)
            for p in range(ell):
                for c in range(nc):
                    if f[p, c] > excess:
                        excess = f[p, c]
    return excess
