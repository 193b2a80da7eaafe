# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled alternating-update fit loop.

Mirrors estimator._fit_loop_python update for update: stats at the current
point, rho cubic, sigma quadratics (fresh sigma1 feeding sigma2), SPD solve
for b, post-b location refresh, convergence on relative log-likelihood
change plus the projected score.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport M_PI, acos, cbrt, cos, fabs, isfinite, log, sqrt
from scipy.linalg.cython_lapack cimport dposv

cnp.import_array()


cdef int _cubic_real_roots(double c3, double c2, double c1, double c0, double* roots) noexcept nogil:
    """Real roots of the cubic, closed form; returns the root count."""
    cdef double a = c2 / c3
    cdef double b = c1 / c3
    cdef double c = c0 / c3
    cdef double p = b - a * a / 3.0
    cdef double q = 2.0 * a * a * a / 27.0 - a * b / 3.0 + c
    cdef double shift = -a / 3.0
    cdef double half_q = q / 2.0
    cdef double disc = half_q * half_q + (p / 3.0) * (p / 3.0) * (p / 3.0)
    cdef double sq, u3, alt, u, r, arg, theta
    cdef int k
    if disc > 0.0:
        sq = sqrt(disc)
        u3 = -half_q + sq
        alt = -half_q - sq
        if fabs(alt) > fabs(u3):
            u3 = alt
        u = cbrt(u3)
        roots[0] = u - p / (3.0 * u) + shift
        return 1
    if disc == 0.0:
        if q == 0.0:
            roots[0] = shift
            roots[1] = shift
            roots[2] = shift
            return 3
        u = cbrt(-half_q)
        roots[0] = 2.0 * u + shift
        roots[1] = -u + shift
        roots[2] = -u + shift
        return 3
    r = 2.0 * sqrt(-p / 3.0)
    arg = 3.0 * q / (p * r)
    if arg > 1.0:
        arg = 1.0
    elif arg < -1.0:
        arg = -1.0
    theta = acos(arg)
    for k in range(3):
        roots[k] = r * cos((theta - 2.0 * M_PI * k) / 3.0) + shift
    return 3


cdef inline double _rho_profile(double rho, double a_term, double c_term, double m) noexcept nogil:
    return -m * log(1.0 - rho * rho) - (a_term - 2.0 * rho * c_term) / (1.0 - rho * rho)


cdef double _solve_rho(double ws1, double wc2, double wx, double s1, double s2,
                       int m, double clip) noexcept nogil:
    cdef double a_term = ws1 / (s1 * s1) + wc2 / (s2 * s2)
    cdef double c_term = wx / (s1 * s2)
    cdef double lo = -1.0 + clip
    cdef double hi = 1.0 - clip
    cdef double roots[3]
    cdef double cand[3]
    cdef int nroots = _cubic_real_roots(m, -c_term, a_term - m, -c_term, roots)
    cdef int ncand = 0
    cdef int k
    for k in range(nroots):
        if lo < roots[k] < hi:
            cand[ncand] = roots[k]
            ncand += 1
    if ncand == 0:
        cand[0] = lo
        cand[1] = hi
        ncand = 2
    cdef double best = cand[0]
    cdef double best_val = _rho_profile(cand[0], a_term, c_term, m)
    cdef double val
    for k in range(1, ncand):
        val = _rho_profile(cand[k], a_term, c_term, m)
        if val > best_val or (val == best_val and fabs(cand[k]) < fabs(best)):
            best = cand[k]
            best_val = val
    return best


cdef double _pos_root(double alpha, double beta, double gamma) except? -1.0:
    cdef double disc = beta * beta + 4.0 * alpha * gamma
    cdef double root = (-beta + sqrt(disc)) / (2.0 * alpha)
    if not (root > 0.0 and isfinite(root)):
        raise ValueError("degenerate variance: residual sums leave no positive sigma root")
    return root


def fit_loop(const double[::1] y1, const double[::1] yu, const double[::1] yc, const double[::1] y2,
             const double[:, ::1] Z1, const double[:, ::1] Zu, const double[:, ::1] Zc,
             const double[::1] theta0, double tol_loglik, double tol_score,
             int max_iter, double rho_clip):
    cdef int m = y1.shape[0]
    cdef int nu = yu.shape[0]
    cdef int n2 = yc.shape[0]
    cdef int n1 = m + nu
    cdef int p = Z1.shape[1]
    cdef int i, j, l, it, info, nrhs, lda
    cdef double a0 = theta0[0]
    cdef double a1 = theta0[1]
    cdef double rho = theta0[2 + p]
    cdef double s1 = theta0[3 + p]
    cdef double s2 = theta0[4 + p]
    cdef double lo = -1.0 + rho_clip
    cdef double hi = 1.0 - rho_clip

    b_arr = np.asarray(theta0[2:2 + p]).copy()
    zb1_arr = np.empty(m)
    zbu_arr = np.empty(nu)
    zbc_arr = np.empty(n2)
    S_arr = np.empty((p, p))
    t_arr = np.empty(p)
    zbar_arr = np.empty(p)
    zcbar_arr = np.empty(p)
    trace_arr = np.empty(max_iter + 1)
    score_arr = np.empty(p + 5)
    cdef double[::1] b = b_arr
    cdef double[::1] zb1 = zb1_arr
    cdef double[::1] zbu = zbu_arr
    cdef double[::1] zbc = zbc_arr
    cdef double[:, ::1] S = S_arr
    cdef double[::1] t = t_arr
    cdef double[::1] zbar = zbar_arr
    cdef double[::1] zcbar = zcbar_arr
    cdef double[::1] trace = trace_arr
    cdef double[::1] score = score_arr

    cdef double acc, u1i, uui, v2i, wci, rci, r2i
    cdef double R1, R2, R3, WS1, WC2, Wx, Wr, WT2
    cdef double f, k_adj, pair_quad, loglik, prev, one_m_r2
    cdef double alpha, beta, gamma
    cdef double ybar2, ybar1, ycbar, vyi, vyj, zt_ij, zt_il
    cdef double sum_u1, sum_v2, sum_wc, a_term, c_term
    cdef double max_score = np.inf
    cdef char uplo = 85  # 'U'
    cdef bint converged = False
    cdef int iterations = 0

    # zb caches at the incoming b
    for i in range(m):
        acc = 0.0
        for j in range(p):
            acc += Z1[i, j] * b[j]
        zb1[i] = acc
    for i in range(nu):
        acc = 0.0
        for j in range(p):
            acc += Zu[i, j] * b[j]
        zbu[i] = acc
    for i in range(n2):
        acc = 0.0
        for j in range(p):
            acc += Zc[i, j] * b[j]
        zbc[i] = acc

    one_m_r2 = 1.0 - rho * rho
    pair_quad = 0.0
    WS1 = 0.0
    for i in range(m):
        u1i = (y1[i] - zb1[i]) / s1
        v2i = (y2[i] - zb1[i] - a1) / s2
        pair_quad += u1i * u1i - 2.0 * rho * u1i * v2i + v2i * v2i
    acc = 0.0
    for i in range(nu):
        uui = (yu[i] - zbu[i]) / s1
        acc += uui * uui
    for i in range(n2):
        wci = (yc[i] - zbc[i] - a0 - a1) / s2
        acc += wci * wci
    trace[0] = (-m * log(s1 * s1) - m * log(s2 * s2) - m * log(one_m_r2)
                - pair_quad / one_m_r2 - nu * log(s1 * s1) - n2 * log(s2 * s2) - acc)
    prev = trace[0]

    for it in range(max_iter):
        iterations += 1
        # sufficient stats at the current (a0, a1, b)
        R1 = 0.0
        R3 = 0.0
        WS1 = 0.0
        WC2 = 0.0
        Wx = 0.0
        for i in range(m):
            u1i = y1[i] - zb1[i]
            r2i = y2[i] - zb1[i]
            v2i = r2i - a1
            R1 += u1i
            R3 += r2i
            WS1 += u1i * u1i
            WC2 += v2i * v2i
            Wx += u1i * v2i
        R1 /= m
        R3 /= m
        Wr = 0.0
        for i in range(nu):
            uui = yu[i] - zbu[i]
            Wr += uui * uui
        R2 = 0.0
        WT2 = 0.0
        for i in range(n2):
            rci = yc[i] - zbc[i]
            wci = rci - a0 - a1
            R2 += rci
            WT2 += wci * wci
        R2 /= n2

        rho = _solve_rho(WS1, WC2, Wx, s1, s2, m, rho_clip)
        one_m_r2 = 1.0 - rho * rho
        s1 = _pos_root(n1 * one_m_r2, rho * Wx / s2, WS1 + one_m_r2 * Wr)
        s2 = _pos_root((m + n2) * one_m_r2, rho * Wx / s1, WC2 + one_m_r2 * WT2)

        # assemble S b = t with (a0, a1) profiled out
        f = 1.0 / one_m_r2
        k_adj = rho * s2 / s1
        for j in range(p):
            zbar[j] = 0.0
            zcbar[j] = 0.0
        ybar1 = 0.0
        ybar2 = 0.0
        ycbar = 0.0
        for i in range(m):
            for j in range(p):
                zbar[j] += Z1[i, j]
            ybar1 += y1[i]
            ybar2 += y2[i]
        for j in range(p):
            zbar[j] /= m
        ybar1 /= m
        ybar2 /= m
        for i in range(n2):
            for j in range(p):
                zcbar[j] += Zc[i, j]
            ycbar += yc[i]
        for j in range(p):
            zcbar[j] /= n2
        ycbar /= n2

        for j in range(p):
            t[j] = 0.0
            for l in range(p):
                S[j, l] = 0.0
        for i in range(m):
            vyi = y2[i] - ybar2 + k_adj * ybar1
            for j in range(p):
                zt_ij = Z1[i, j] - (1.0 - k_adj) * zbar[j]
                t[j] += f * (Z1[i, j] * y1[i] / (s1 * s1)
                             - rho * (zt_ij * y1[i] + Z1[i, j] * vyi) / (s1 * s2)
                             + zt_ij * vyi / (s2 * s2))
                for l in range(j, p):
                    zt_il = Z1[i, l] - (1.0 - k_adj) * zbar[l]
                    S[j, l] += f * (Z1[i, j] * Z1[i, l] / (s1 * s1)
                                    - rho * (Z1[i, j] * zt_il + zt_ij * Z1[i, l]) / (s1 * s2)
                                    + zt_ij * zt_il / (s2 * s2))
        for i in range(nu):
            for j in range(p):
                t[j] += Zu[i, j] * yu[i] / (s1 * s1)
                for l in range(j, p):
                    S[j, l] += Zu[i, j] * Zu[i, l] / (s1 * s1)
        for i in range(n2):
            for j in range(p):
                t[j] += (Zc[i, j] - zcbar[j]) * (yc[i] - ycbar) / (s2 * s2)
                for l in range(j, p):
                    S[j, l] += (Zc[i, j] - zcbar[j]) * (Zc[i, l] - zcbar[l]) / (s2 * s2)
        for j in range(p):
            for l in range(j):
                S[j, l] = S[l, j]

        # SPD solve (dposv overwrites t with the solution)
        for j in range(p):
            b[j] = t[j]
        nrhs = 1
        lda = p
        dposv(&uplo, &p, &nrhs, &S[0, 0], &lda, &b[0], &lda, &info)
        if info != 0:
            raise ValueError("design collinear under current weights")

        for i in range(m):
            acc = 0.0
            for j in range(p):
                acc += Z1[i, j] * b[j]
            zb1[i] = acc
        for i in range(nu):
            acc = 0.0
            for j in range(p):
                acc += Zu[i, j] * b[j]
            zbu[i] = acc
        for i in range(n2):
            acc = 0.0
            for j in range(p):
                acc += Zc[i, j] * b[j]
            zbc[i] = acc

        # refresh locations at the new b
        R1 = 0.0
        R3 = 0.0
        for i in range(m):
            R1 += y1[i] - zb1[i]
            R3 += y2[i] - zb1[i]
        R1 /= m
        R3 /= m
        R2 = 0.0
        for i in range(n2):
            R2 += yc[i] - zbc[i]
        R2 /= n2
        a1 = R3 - k_adj * R1
        a0 = R2 - a1

        # log-likelihood at the updated parameters
        pair_quad = 0.0
        for i in range(m):
            u1i = (y1[i] - zb1[i]) / s1
            v2i = (y2[i] - zb1[i] - a1) / s2
            pair_quad += u1i * u1i - 2.0 * rho * u1i * v2i + v2i * v2i
        acc = 0.0
        for i in range(nu):
            uui = (yu[i] - zbu[i]) / s1
            acc += uui * uui
        for i in range(n2):
            wci = (yc[i] - zbc[i] - a0 - a1) / s2
            acc += wci * wci
        loglik = (-m * log(s1 * s1) - m * log(s2 * s2) - m * log(one_m_r2)
                  - pair_quad / one_m_r2 - nu * log(s1 * s1) - n2 * log(s2 * s2) - acc)
        trace[it + 1] = loglik

        if fabs(loglik - prev) <= tol_loglik * (1.0 + fabs(prev)):
            # analytic score, rho projected at its clip boundary
            sum_u1 = 0.0
            sum_v2 = 0.0
            WS1 = 0.0
            WC2 = 0.0
            Wx = 0.0
            for j in range(p):
                score[2 + j] = 0.0
            for i in range(m):
                u1i = y1[i] - zb1[i]
                v2i = y2[i] - zb1[i] - a1
                sum_u1 += u1i
                sum_v2 += v2i
                WS1 += u1i * u1i
                WC2 += v2i * v2i
                Wx += u1i * v2i
                acc = 2.0 * f * (u1i / (s1 * s1) - rho * (u1i + v2i) / (s1 * s2) + v2i / (s2 * s2))
                for j in range(p):
                    score[2 + j] += acc * Z1[i, j]
            Wr = 0.0
            for i in range(nu):
                uui = yu[i] - zbu[i]
                Wr += uui * uui
                acc = 2.0 * uui / (s1 * s1)
                for j in range(p):
                    score[2 + j] += acc * Zu[i, j]
            sum_wc = 0.0
            WT2 = 0.0
            for i in range(n2):
                wci = yc[i] - zbc[i] - a0 - a1
                sum_wc += wci
                WT2 += wci * wci
                acc = 2.0 * wci / (s2 * s2)
                for j in range(p):
                    score[2 + j] += acc * Zc[i, j]
            score[0] = 2.0 * sum_wc / (s2 * s2)
            score[1] = 2.0 * f * (sum_v2 / (s2 * s2) - rho * sum_u1 / (s1 * s2)) + score[0]
            a_term = WS1 / (s1 * s1) + WC2 / (s2 * s2)
            c_term = Wx / (s1 * s2)
            score[2 + p] = (2.0 * m * rho * f
                            + (2.0 * c_term * one_m_r2 - 2.0 * rho * (a_term - 2.0 * rho * c_term)) * f * f)
            if (rho >= hi and score[2 + p] > 0) or (rho <= lo and score[2 + p] < 0):
                score[2 + p] = 0.0
            score[3 + p] = (-2.0 * n1 / s1
                            + 2.0 * f * (WS1 / (s1 * s1 * s1) - rho * Wx / (s1 * s1 * s2))
                            + 2.0 * Wr / (s1 * s1 * s1))
            score[4 + p] = (-2.0 * (m + n2) / s2
                            + 2.0 * f * (WC2 / (s2 * s2 * s2) - rho * Wx / (s1 * s2 * s2))
                            + 2.0 * WT2 / (s2 * s2 * s2))
            max_score = 0.0
            for j in range(p + 5):
                if fabs(score[j]) > max_score:
                    max_score = fabs(score[j])
            if max_score < tol_score:
                converged = True
                prev = loglik
                break
        prev = loglik

    theta_out = np.empty(p + 5)
    theta_out[0] = a0
    theta_out[1] = a1
    theta_out[2:2 + p] = b_arr
    theta_out[2 + p] = rho
    theta_out[3 + p] = s1
    theta_out[4 + p] = s2
    return theta_out, trace_arr[: iterations + 1].copy(), iterations, converged, max_score
