# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled planning kernels; mirrors ``_kernels_py`` exactly in signature."""
import numpy as np
cimport numpy as cnp
from libc.math cimport cos, sin, tan, sqrt, fabs, fmod, M_PI

cnp.import_array()

BACKEND = "cython"


cdef inline double _wrap(double a) noexcept nogil:
    cdef double r
    if a > M_PI or a <= -M_PI:
        # floor-mod, matching numpy.mod
        r = fmod(M_PI - a, 2.0 * M_PI)
        if r != 0 and r < 0:
            r += 2.0 * M_PI
        a = M_PI - r
    return a


cdef inline double _sign(double a) noexcept nogil:
    if a > 0:
        return 1.0
    if a < 0:
        return -1.0
    return 0.0


cdef void _rollout(const double[:, :] s0, const double[:, :, :] u, double dt, double beta,
                   double gamma, double[:, :, :] s) noexcept nogil:
    cdef Py_ssize_t H = u.shape[0], N = u.shape[1], t, i
    cdef double th, v
    for i in range(N):
        s[0, i, 0] = s0[i, 0]
        s[0, i, 1] = s0[i, 1]
        s[0, i, 2] = s0[i, 2]
        s[0, i, 3] = s0[i, 3]
    for t in range(H):
        for i in range(N):
            th = s[t, i, 2]
            v = s[t, i, 3]
            s[t + 1, i, 0] = s[t, i, 0] + v * cos(th) * dt
            s[t + 1, i, 1] = s[t, i, 1] + v * sin(th) * dt
            s[t + 1, i, 2] = _wrap(th + v * tan(u[t, i, 1]) * gamma * dt)
            s[t + 1, i, 3] = beta * v + u[t, i, 0] * dt


def rollout(s0, u, prm):
    cdef const double[:, :] s0v = np.ascontiguousarray(s0, dtype=np.float64)
    cdef const double[:, :, :] uv = np.ascontiguousarray(u, dtype=np.float64)
    out = np.empty((uv.shape[0] + 1, uv.shape[1], 4))
    cdef double[:, :, :] sv = out
    _rollout(s0v, uv, prm[0], prm[1], prm[2], sv)
    return out


cdef bint _state_costs(const double[:, :, :] s, const double[:, :] tgt, const double[:, :] obs,
                       const double[:] w, const double[:] mar, double eps, double[:] terms,
                       double[:, :, :] gs, bint want_grad) noexcept nogil:
    cdef Py_ssize_t H1 = s.shape[0], N = s.shape[1], M = obs.shape[0]
    cdef Py_ssize_t t, i, j
    cdef double dx, dy, d, e, gap, c, inv_r, over
    cdef bint clamped = False
    terms[0] = 0.0
    terms[1] = 0.0
    terms[2] = 0.0
    terms[3] = 0.0
    if want_grad:
        for t in range(H1):
            for i in range(N):
                gs[t, i, 0] = 0.0
                gs[t, i, 1] = 0.0
                gs[t, i, 2] = 0.0
                gs[t, i, 3] = 0.0
    for t in range(1, H1):
        for i in range(N):
            dx = s[t, i, 0] - tgt[i, 0]
            dy = s[t, i, 1] - tgt[i, 1]
            d = sqrt(dx * dx + dy * dy)
            e = _wrap(s[t, i, 2] - tgt[i, 2])
            terms[0] += w[0] * d + w[1] * fabs(e)
            over = fabs(s[t, i, 3]) - mar[2]
            if over > 0:
                terms[3] += w[4] * over
            if want_grad:
                if d > 0:
                    gs[t, i, 0] += w[0] * dx / d
                    gs[t, i, 1] += w[0] * dy / d
                gs[t, i, 2] += w[1] * _sign(e)
                if over > 0:
                    gs[t, i, 3] += w[4] * _sign(s[t, i, 3])
            for j in range(i + 1, N):
                dx = s[t, i, 0] - s[t, j, 0]
                dy = s[t, i, 1] - s[t, j, 1]
                d = sqrt(dx * dx + dy * dy)
                if d < mar[0]:
                    inv_r = 1.0 / mar[0]
                    if d < eps:
                        clamped = True
                        terms[1] += w[2] * (1.0 / eps - inv_r)
                    else:
                        terms[1] += w[2] * (1.0 / d - inv_r)
                        if want_grad:
                            c = -w[2] / (d * d * d)
                            gs[t, i, 0] += c * dx
                            gs[t, i, 1] += c * dy
                            gs[t, j, 0] -= c * dx
                            gs[t, j, 1] -= c * dy
            for j in range(M):
                dx = s[t, i, 0] - obs[j, 0]
                dy = s[t, i, 1] - obs[j, 1]
                d = sqrt(dx * dx + dy * dy)
                gap = d - obs[j, 2]
                if gap < mar[1]:
                    inv_r = 1.0 / mar[1]
                    if gap < eps:
                        clamped = True
                        terms[2] += w[3] * (1.0 / eps - inv_r)
                    else:
                        terms[2] += w[3] * (1.0 / gap - inv_r)
                        if want_grad:
                            c = -w[3] / (gap * gap * d)
                            gs[t, i, 0] += c * dx
                            gs[t, i, 1] += c * dy
    return clamped


def cost_terms(u, s0, tgt, obs, prm, w, mar, double eps):
    cdef const double[:, :, :] uv = np.ascontiguousarray(u, dtype=np.float64)
    cdef const double[:, :] s0v = np.ascontiguousarray(s0, dtype=np.float64)
    cdef const double[:, :] tv = np.ascontiguousarray(tgt, dtype=np.float64)
    cdef const double[:, :] ov = np.ascontiguousarray(obs, dtype=np.float64).reshape(-1, 3)
    cdef const double[:] wv = np.ascontiguousarray(w, dtype=np.float64)
    cdef const double[:] mv = np.ascontiguousarray(mar, dtype=np.float64)
    s = np.empty((uv.shape[0] + 1, uv.shape[1], 4))
    cdef double[:, :, :] sv = s
    terms = np.zeros(4)
    cdef double[:] termv = terms
    cdef double[:, :, :] dummy = s
    cdef bint clamped
    cdef double dt = prm[0], beta = prm[1], gamma = prm[2]
    with nogil:
        _rollout(s0v, uv, dt, beta, gamma, sv)
        clamped = _state_costs(sv, tv, ov, wv, mv, eps, termv, dummy, False)
    return terms, bool(clamped)


def cost_grad(u, s0, tgt, obs, prm, w, mar, double eps):
    cdef const double[:, :, :] uv = np.ascontiguousarray(u, dtype=np.float64)
    cdef const double[:, :] s0v = np.ascontiguousarray(s0, dtype=np.float64)
    cdef const double[:, :] tv = np.ascontiguousarray(tgt, dtype=np.float64)
    cdef const double[:, :] ov = np.ascontiguousarray(obs, dtype=np.float64).reshape(-1, 3)
    cdef const double[:] wv = np.ascontiguousarray(w, dtype=np.float64)
    cdef const double[:] mv = np.ascontiguousarray(mar, dtype=np.float64)
    cdef double dt = prm[0], beta = prm[1], gamma = prm[2]
    cdef Py_ssize_t H = uv.shape[0], N = uv.shape[1], t, i
    s = np.empty((H + 1, N, 4))
    gs = np.empty((H + 1, N, 4))
    grad = np.empty((H, N, 2))
    terms = np.zeros(4)
    cdef double[:, :, :] sv = s
    cdef double[:, :, :] gsv = gs
    cdef double[:, :, :] gv = grad
    cdef double[:] termv = terms
    cdef double lx, ly, lth, lv, th, v, c, sn, cphi
    cdef bint clamped
    with nogil:
        _rollout(s0v, uv, dt, beta, gamma, sv)
        clamped = _state_costs(sv, tv, ov, wv, mv, eps, termv, gsv, True)
        for i in range(N):
            lx = gsv[H, i, 0]
            ly = gsv[H, i, 1]
            lth = gsv[H, i, 2]
            lv = gsv[H, i, 3]
            for t in range(H - 1, -1, -1):
                th = sv[t, i, 2]
                v = sv[t, i, 3]
                c = cos(th)
                sn = sin(th)
                cphi = cos(uv[t, i, 1])
                gv[t, i, 0] = lv * dt
                gv[t, i, 1] = lth * v * gamma * dt / (cphi * cphi)
                lv = gsv[t, i, 3] + (lx * c + ly * sn) * dt + lth * tan(uv[t, i, 1]) * gamma * dt + lv * beta
                lth = gsv[t, i, 2] + lth + (-lx * v * sn + ly * v * c) * dt
                lx = gsv[t, i, 0] + lx
                ly = gsv[t, i, 1] + ly
    return terms, grad, bool(clamped)
