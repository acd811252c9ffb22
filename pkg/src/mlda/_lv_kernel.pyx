# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled Dormand-Prince 5(4) solve of the Lotka-Volterra system.

Same step control and continuous extension as ``mlda.problems.ode``, with the
two-species right-hand side inlined.  The system is autonomous, so stage
times never enter.
"""

from libc.math cimport sqrt, pow, fabs, fmin, fmax, nextafter, isfinite, INFINITY

cdef double SAFETY = 0.9
cdef double MIN_FACTOR = 0.2
cdef double MAX_FACTOR = 10.0
cdef double EXPONENT = -0.2

cdef double A21 = 1.0 / 5
cdef double A31 = 3.0 / 40, A32 = 9.0 / 40
cdef double A41 = 44.0 / 45, A42 = -56.0 / 15, A43 = 32.0 / 9
cdef double A51 = 19372.0 / 6561, A52 = -25360.0 / 2187, A53 = 64448.0 / 6561, A54 = -212.0 / 729
cdef double A61 = 9017.0 / 3168, A62 = -355.0 / 33, A63 = 46732.0 / 5247, A64 = 49.0 / 176
cdef double A65 = -5103.0 / 18656
cdef double B1 = 35.0 / 384, B3 = 500.0 / 1113, B4 = 125.0 / 192, B5 = -2187.0 / 6784, B6 = 11.0 / 84
cdef double E1 = -71.0 / 57600, E3 = 71.0 / 16695, E4 = -71.0 / 1920, E5 = 17253.0 / 339200
cdef double E6 = -22.0 / 525, E7 = 1.0 / 40

cdef double P[7][4]
P[0][:] = [1.0, -8048581381.0 / 2820520608, 8663915743.0 / 2820520608, -12715105075.0 / 11282082432]
P[1][:] = [0.0, 0.0, 0.0, 0.0]
P[2][:] = [0.0, 131558114200.0 / 32700410799, -68118460800.0 / 10900136933, 87487479700.0 / 32700410799]
P[3][:] = [0.0, -1754552775.0 / 470086768, 14199869525.0 / 1410260304, -10690763975.0 / 1880347072]
P[4][:] = [0.0, 127303824393.0 / 49829197408, -318862633887.0 / 49829197408,
           701980252875.0 / 199316789632]
P[5][:] = [0.0, -282668133.0 / 205662961, 2019193451.0 / 616988883, -1453857185.0 / 822651844]
P[6][:] = [0.0, 40617522.0 / 29380423, -110615467.0 / 29380423, 69997945.0 / 29380423]


cdef inline void rhs(double a, double b, double c, double d, double n, double p,
                     double* dn, double* dp) noexcept nogil:
    dn[0] = a * n - b * n * p
    dp[0] = c * n * p - d * p


cdef inline double rms2(double u, double v) noexcept nogil:
    return sqrt((u * u + v * v) / 2.0)


cdef int _solve(double[::1] params, double[::1] times, double t_end, double rtol, double atol,
                long max_steps, double[:, ::1] out, double* t_last) noexcept nogil:
    cdef double a = params[2], b = params[3], c = params[4], d = params[5]
    cdef double y0 = params[0], y1 = params[1]
    cdef double t = 0.0, h, t_new, err, factor, x, min_step
    cdef double kn[7]
    cdef double kp[7]
    cdef double yn, yp, fn, fp, s0, s1, d0, d1, d2, h0, h1
    cdef double q0[4]
    cdef double q1[4]
    cdef Py_ssize_t k = 0, nt = times.shape[0], i, j
    cdef long steps = 0
    cdef bint rejected
    t_last[0] = 0.0
    while k < nt and times[k] == 0.0:
        out[k, 0] = y0
        out[k, 1] = y1
        k += 1

    rhs(a, b, c, d, y0, y1, &fn, &fp)
    # starting step heuristic
    s0 = atol + fabs(y0) * rtol
    s1 = atol + fabs(y1) * rtol
    d0 = rms2(y0 / s0, y1 / s1)
    d1 = rms2(fn / s0, fp / s1)
    if d0 < 1e-5 or d1 < 1e-5:
        h0 = 1e-6
    else:
        h0 = 0.01 * d0 / d1
    rhs(a, b, c, d, y0 + h0 * fn, y1 + h0 * fp, &kn[1], &kp[1])
    d2 = rms2((kn[1] - fn) / s0, (kp[1] - fp) / s1) / h0
    if d1 <= 1e-15 and d2 <= 1e-15:
        h1 = fmax(1e-6, h0 * 1e-3)
    else:
        h1 = pow(0.01 / fmax(d1, d2), 0.2)
    h = fmin(fmin(100 * h0, h1), t_end)

    while t < t_end:
        min_step = 10 * (nextafter(t, INFINITY) - t)
        if h > t_end - t:
            h = t_end - t
        rejected = False
        while True:
            if h < min_step:
                t_last[0] = t
                return 1
            kn[0] = fn
            kp[0] = fp
            rhs(a, b, c, d, y0 + h * (A21 * kn[0]), y1 + h * (A21 * kp[0]), &kn[1], &kp[1])
            rhs(a, b, c, d,
                y0 + h * (A31 * kn[0] + A32 * kn[1]),
                y1 + h * (A31 * kp[0] + A32 * kp[1]), &kn[2], &kp[2])
            rhs(a, b, c, d,
                y0 + h * (A41 * kn[0] + A42 * kn[1] + A43 * kn[2]),
                y1 + h * (A41 * kp[0] + A42 * kp[1] + A43 * kp[2]), &kn[3], &kp[3])
            rhs(a, b, c, d,
                y0 + h * (A51 * kn[0] + A52 * kn[1] + A53 * kn[2] + A54 * kn[3]),
                y1 + h * (A51 * kp[0] + A52 * kp[1] + A53 * kp[2] + A54 * kp[3]), &kn[4], &kp[4])
            rhs(a, b, c, d,
                y0 + h * (A61 * kn[0] + A62 * kn[1] + A63 * kn[2] + A64 * kn[3] + A65 * kn[4]),
                y1 + h * (A61 * kp[0] + A62 * kp[1] + A63 * kp[2] + A64 * kp[3] + A65 * kp[4]),
                &kn[5], &kp[5])
            yn = y0 + h * (B1 * kn[0] + B3 * kn[2] + B4 * kn[3] + B5 * kn[4] + B6 * kn[5])
            yp = y1 + h * (B1 * kp[0] + B3 * kp[2] + B4 * kp[3] + B5 * kp[4] + B6 * kp[5])
            if t + h >= t_end:
                t_new = t_end
            else:
                t_new = t + h
            rhs(a, b, c, d, yn, yp, &kn[6], &kp[6])
            s0 = atol + fmax(fabs(y0), fabs(yn)) * rtol
            s1 = atol + fmax(fabs(y1), fabs(yp)) * rtol
            err = rms2(
                h * (E1 * kn[0] + E3 * kn[2] + E4 * kn[3] + E5 * kn[4] + E6 * kn[5] + E7 * kn[6]) / s0,
                h * (E1 * kp[0] + E3 * kp[2] + E4 * kp[3] + E5 * kp[4] + E6 * kp[5] + E7 * kp[6]) / s1,
            )
            if isfinite(err) and err < 1.0:
                if err == 0.0:
                    factor = MAX_FACTOR
                else:
                    factor = fmin(MAX_FACTOR, SAFETY * pow(err, EXPONENT))
                if rejected:
                    factor = fmin(1.0, factor)
                break
            rejected = True
            if isfinite(err):
                h *= fmax(MIN_FACTOR, SAFETY * pow(err, EXPONENT))
            else:
                h *= MIN_FACTOR
        steps += 1
        if steps > max_steps:
            t_last[0] = t
            return 2
        if k < nt and times[k] <= t_new:
            for j in range(4):
                q0[j] = 0.0
                q1[j] = 0.0
                for i in range(7):
                    q0[j] += kn[i] * P[i][j]
                    q1[j] += kp[i] * P[i][j]
            while k < nt and times[k] <= t_new:
                x = (times[k] - t) / h
                out[k, 0] = y0 + h * (q0[0] * x + q0[1] * x * x + q0[2] * x * x * x + q0[3] * x * x * x * x)
                out[k, 1] = y1 + h * (q1[0] * x + q1[1] * x * x + q1[2] * x * x * x + q1[3] * x * x * x * x)
                k += 1
        t = t_new
        y0 = yn
        y1 = yp
        fn = kn[6]
        fp = kp[6]
        h *= factor
    t_last[0] = t
    return 0


def lotka_volterra_solve(double[::1] params, double[::1] times, double t_end,
                         double rtol, double atol, long max_steps, double[:, ::1] out):
    """Fill ``out[i] = (N, P)`` at ``times[i]``; return ``(status, last_time)``.

    ``status`` is 0 on success, 1 on step-size underflow and 2 when the step
    budget is exhausted.
    """
    cdef double t_last
    cdef int status
    with nogil:
        status = _solve(params, times, t_end, rtol, atol, max_steps, out, &t_last)
    return status, t_last
